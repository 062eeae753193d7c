//! Uniform periodic 1D grid, sampled fields, quadrature and spectral
//! differentiation.
//!
//! Grid points are `x_j = x_min + j*dx` for `j in 0..n`; the point `x_max`
//! is identified with `x_min`, so interpolation in the last cell wraps to the
//! first sample. This matches the periodicity assumed by the discrete Fourier
//! transform used for derivatives and kinetic propagation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform spatial grid with a power-of-two number of points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::Argument("grid bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::Argument(format!(
                "grid needs x_max > x_min, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::Argument(format!(
                "grid size must be a power of two >= 8, got {n_points}"
            )));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.n_points as f64 * self.dx())
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Wave number of FFT bin `j` in standard (unshifted) ordering.
    pub fn k(&self, j: usize) -> f64 {
        let n = self.n_points;
        if j < n / 2 {
            j as f64 * self.dk()
        } else {
            (j as f64 - n as f64) * self.dk()
        }
    }

    pub fn wave_numbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.k(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell index and fractional offset of `x`, with `x == x_max` mapped to
    /// the last cell at offset 1.
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let u = (x - self.x_min) / self.dx();
        let n = self.n_points;
        let j = (u.floor() as isize).clamp(0, n as isize - 1) as usize;
        (j, (u - j as f64).clamp(0.0, 1.0))
    }

    /// Index of the grid point nearest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = ((x - self.x_min) / self.dx()).round();
        (u.max(0.0) as usize).min(self.n_points - 1)
    }

    fn check_range(&self, a: f64, b: f64) -> Result<()> {
        if a > b {
            return Err(Error::Argument(format!("interval bounds reversed: a = {a} > b = {b}")));
        }
        if !self.contains(a) || !self.contains(b) {
            return Err(Error::Range(format!(
                "interval [{a}, {b}] not inside grid [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x {}", self.x_min, self.x_max, self.n_points)
    }
}

/// Real samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalConsistency(format!(
                "non-finite field value at index {j}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.positions().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub(crate) fn from_raw(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation, periodic in the last cell.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        if !self.grid.contains(x) {
            return Err(Error::Range(format!("x = {x} outside grid {}", self.grid)));
        }
        Ok(interpolate(&self.grid, &self.values, x))
    }

    /// Trapezoidal integral over `[a, b]`; see [`integrate`].
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        integrate(self, a, b)
    }

    pub fn integrate_all(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * factor).collect() }
    }
}

/// Complex samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NumericalConsistency(format!(
                "non-finite field value at index {j}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.positions().into_iter().map(f).collect())
    }

    pub(crate) fn from_raw(grid: Grid1D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sqr(&self) -> RealField {
        RealField::from_raw(self.grid, self.values.iter().map(|z| z.norm_sqr()).collect())
    }
}

fn sample(values: &[f64], j: usize) -> f64 {
    values[j % values.len()]
}

pub(crate) fn interpolate(grid: &Grid1D, values: &[f64], x: f64) -> f64 {
    let (j, s) = grid.locate(x);
    let f0 = values[j];
    let f1 = sample(values, j + 1);
    f0 + s * (f1 - f0)
}

/// Trapezoidal quadrature of `f` over `[a, b]`.
///
/// End points falling between grid nodes are handled by linearly
/// interpolating `f`, so the result is the exact integral of the
/// piecewise-linear interpolant and is additive over adjacent intervals.
pub fn integrate(f: &RealField, a: f64, b: f64) -> Result<f64> {
    let grid = f.grid();
    grid.check_range(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let v = f.values();
    let dx = grid.dx();
    let (ja, _) = grid.locate(a);
    let (jb, _) = grid.locate(b);
    let fa = interpolate(grid, v, a);
    let fb = interpolate(grid, v, b);
    if ja == jb {
        return Ok(0.5 * (b - a) * (fa + fb));
    }
    let mut total = 0.5 * (grid.x(ja + 1) - a) * (fa + sample(v, ja + 1));
    for j in ja + 1..jb {
        total += 0.5 * dx * (v[j] + sample(v, j + 1));
    }
    total += 0.5 * (b - grid.x(jb)) * (v[jb] + fb);
    Ok(total)
}

/// Cumulative trapezoidal integral from `x_min` to each grid node, with one
/// trailing entry for `x_max`.
pub(crate) fn cumulative(f: &RealField) -> Vec<f64> {
    let v = f.values();
    let dx = f.grid().dx();
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..v.len() {
        acc += 0.5 * dx * (v[j] + sample(v, j + 1));
        out.push(acc);
    }
    out
}

/// Position where the cumulative integral of `f` (a non-negative density)
/// reaches `level` times its total, inverting the piecewise-quadratic
/// cumulative of the linear interpolant exactly.
pub fn quantile(f: &RealField, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Argument(format!("quantile level {level} outside [0, 1]")));
    }
    let cum = cumulative(f);
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Degenerate("cannot take quantiles of a field with no mass".into()));
    }
    let target = level * total;
    let j = cum.partition_point(|&c| c < target).clamp(1, cum.len() - 1) - 1;
    let grid = f.grid();
    let v = f.values();
    let (r0, r1) = (v[j], sample(v, j + 1));
    let need = (target - cum[j]) / grid.dx();
    // r0 s + (r1 - r0) s^2 / 2 = need
    let a = 0.5 * (r1 - r0);
    let denom = r0 + (r0 * r0 + 4.0 * a * need).max(0.0).sqrt();
    let s = if denom > 0.0 { 2.0 * need / denom } else { 0.5 };
    Ok(grid.x(j) + s.clamp(0.0, 1.0) * grid.dx())
}

/// Forward/inverse FFT plans plus the wave-number table for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid1D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
            k: grid.wave_numbers(),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn wave_numbers(&self) -> &[f64] {
        &self.k
    }

    /// In-place unnormalized forward transform.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// In-place inverse transform including the `1/n` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    pub fn derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        let n = buf.len();
        for (j, (z, &k)) in buf.iter_mut().zip(&self.k).enumerate() {
            // Nyquist bin has no odd-symmetric partner.
            *z = if j == n / 2 { Complex64::new(0.0, 0.0) } else { *z * Complex64::new(0.0, k) };
        }
        self.inverse(&mut buf);
        buf
    }
}

/// dΨ/dx by forward transform, multiplication by `i k`, inverse transform.
pub fn spectral_derivative(f: &ComplexField) -> ComplexField {
    let spectral = Spectral::new(f.grid());
    ComplexField::from_raw(*f.grid(), spectral.derivative(f.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid1D::new(0.0, 1.0, 4).is_err());
        assert!(Grid1D::new(0.0, 1.0, 100).is_err());
        assert!(Grid1D::new(1.0, 0.0, 64).is_err());
        assert!(Grid1D::new(0.0, 1.0, 64).is_ok());
    }

    #[test]
    fn momentum_ordering() {
        let g = grid(-10.0, 10.0, 16);
        assert_eq!(g.k(0), 0.0);
        assert_abs_diff_eq!(g.k(1), g.dk(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.k(8), -8.0 * g.dk(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.k(15), -g.dk(), epsilon = 1e-15);
    }

    #[test]
    fn integrate_constant() {
        let g = grid(-10.0, 10.0, 256);
        let one = RealField::from_fn(g, |_| 1.0).unwrap();
        assert_abs_diff_eq!(integrate(&one, -10.0, 10.0).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(integrate(&one, 3.3, 3.3).unwrap(), 0.0);
        assert_abs_diff_eq!(integrate(&one, -1.234, 5.678).unwrap(), 6.912, epsilon = 1e-12);
    }

    #[test]
    fn integrate_half_gaussian() {
        let g = grid(-20.0, 20.0, 1024);
        let norm = (2.0 * PI).sqrt();
        let rho = RealField::from_fn(g, |x| (-x * x / 2.0).exp() / norm).unwrap();
        assert_abs_diff_eq!(integrate(&rho, -20.0, 0.0).unwrap(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn integrate_errors() {
        let g = grid(-1.0, 1.0, 64);
        let f = RealField::zeros(g);
        assert!(matches!(integrate(&f, 0.5, 0.2), Err(Error::Argument(_))));
        assert!(matches!(integrate(&f, -2.0, 0.2), Err(Error::Range(_))));
        assert!(matches!(integrate(&f, 0.0, 1.5), Err(Error::Range(_))));
    }

    #[test]
    fn quantile_inverts_cumulative() {
        let g = grid(-10.0, 10.0, 256);
        let f = RealField::from_fn(g, |x| (-x * x / 2.0).exp()).unwrap();
        assert!(quantile(&f, 0.5).unwrap().abs() <= 1e-12);
        for level in [0.01, 0.2, 0.77, 0.99] {
            let x = quantile(&f, level).unwrap();
            let total = f.integrate_all();
            assert_abs_diff_eq!(integrate(&f, -10.0, x).unwrap() / total, level, epsilon = 1e-12);
        }
        assert!(quantile(&f, 1.5).is_err());
        assert!(quantile(&RealField::zeros(g), 0.5).is_err());
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = grid(-1.0, 1.0, 8);
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(RealField::new(g, v).is_err());
        assert!(RealField::new(g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn derivative_of_plane_wave() {
        let g = grid(-20.0, 20.0, 512);
        let k0 = 5.0 * g.dk();
        let f = ComplexField::from_fn(g, |x| Complex64::new(0.0, k0 * x).exp()).unwrap();
        let d = spectral_derivative(&f);
        let err = f
            .values()
            .iter()
            .zip(d.values())
            .map(|(psi, dpsi)| (dpsi - Complex64::new(0.0, k0) * psi).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "max error {err}");
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(-5.0, 5.0, 64);
        let f = ComplexField::from_fn(g, |_| Complex64::new(0.3, -1.2)).unwrap();
        let d = spectral_derivative(&f);
        assert!(d.values().iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn derivative_matches_centered_difference() {
        // Oracle: fourth-order centered finite difference on the same samples.
        let g = grid(-20.0, 20.0, 1024);
        let f = ComplexField::from_fn(g, |x| Complex64::new((-x * x / 4.0).exp(), 0.0)).unwrap();
        let d = spectral_derivative(&f);
        let v = f.values();
        let n = v.len();
        let h = g.dx();
        let mut sum = 0.0;
        for j in 2..n - 2 {
            let fd = (-v[j + 2] + 8.0 * v[j + 1] - 8.0 * v[j - 1] + v[j - 2]) / (12.0 * h);
            sum += (fd - d.values()[j]).norm_sqr();
        }
        let rms = (sum / (n - 4) as f64).sqrt();
        assert!(rms <= 1e-6, "rms {rms}");
    }

    #[test]
    fn derivative_of_band_limited_field() {
        let g = grid(0.0, 2.0 * PI, 128);
        let f = ComplexField::from_fn(g, |x| Complex64::new((3.0 * x).sin(), (5.0 * x).cos()))
            .unwrap();
        let d = spectral_derivative(&f);
        let rms = (g
            .positions()
            .iter()
            .zip(d.values())
            .map(|(&x, z)| (z - Complex64::new(3.0 * (3.0 * x).cos(), -5.0 * (5.0 * x).sin())).norm_sqr())
            .sum::<f64>()
            / 128.0)
            .sqrt();
        assert!(rms <= 1e-8);
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(alpha in -3.0..3.0f64, beta in -3.0..3.0f64, a in -4.9..0.0f64, w in 0.0..4.9f64) {
            let g = grid(-5.0, 5.0, 128);
            let f = RealField::from_fn(g, |x| (x * 1.3).sin() + 0.2 * x).unwrap();
            let h = RealField::from_fn(g, |x| (-x * x).exp()).unwrap();
            let comb = RealField::new(g, f.values().iter().zip(h.values()).map(|(p, q)| alpha * p + beta * q).collect()).unwrap();
            let b = a + w;
            let lhs = integrate(&comb, a, b).unwrap();
            let rhs = alpha * integrate(&f, a, b).unwrap() + beta * integrate(&h, a, b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn quadrature_is_additive(a in -5.0..5.0f64, u in 0.0..1.0f64, v in 0.0..1.0f64) {
            let g = grid(-5.0, 5.0, 64);
            let f = RealField::from_fn(g, |x| 2.0 + (x * 0.7).cos()).unwrap();
            let c = a + (5.0 - a) * u;
            let b = a + (c - a) * v;
            let whole = integrate(&f, a, c).unwrap();
            let parts = integrate(&f, a, b).unwrap() + integrate(&f, b, c).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1e-300) + 1e-15);
        }
    }
}
