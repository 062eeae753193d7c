//! Wave functions and the hydrodynamic fields derived from them.
//!
//! Units are fixed to ħ = 1; the particle mass enters explicitly where a
//! function needs it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, ComplexField, Grid1D, RealField, Spectral};

/// Minimum distance (in units of `sigma0`) between a packet centroid and
/// either grid edge.
pub const SUPPORT_SIGMAS: f64 = 6.0;

/// Relative density floor below which the velocity field is filled in from
/// neighbouring points instead of evaluated as J/ρ.
pub const DEFAULT_RHO_FLOOR: f64 = 1e-12;

/// Parameters of one Gaussian wave packet
/// `c * exp(-(x-x0)^2 / 4 sigma0^2 + i p0 (x-x0))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub x0: f64,
    pub p0: f64,
    pub sigma0: f64,
    #[serde(default = "unit_weight")]
    pub c: Complex64,
}

fn unit_weight() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

impl GaussianSpec {
    pub fn new(x0: f64, p0: f64, sigma0: f64) -> Self {
        Self { x0, p0, sigma0, c: Complex64::new(1.0, 0.0) }
    }

    pub fn with_weight(mut self, c: impl Into<Complex64>) -> Self {
        self.c = c.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if !(self.x0.is_finite() && self.p0.is_finite() && self.c.re.is_finite() && self.c.im.is_finite()) {
            return Err(Error::Config("packet parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Complex amplitudes on a grid at time `t`, normalized to unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    amplitudes: ComplexField,
    t: f64,
}

impl WaveFunction {
    /// Wraps `amplitudes`, rescaling them to unit norm.
    pub fn normalized(amplitudes: ComplexField, t: f64) -> Result<Self> {
        let norm = amplitudes.norm_sqr().integrate_all();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate(format!("cannot normalize state with norm {norm}")));
        }
        let scale = 1.0 / norm.sqrt();
        let grid = *amplitudes.grid();
        let values = amplitudes.into_values().into_iter().map(|z| z * scale).collect();
        Ok(Self { amplitudes: ComplexField::from_raw(grid, values), t })
    }

    pub(crate) fn from_parts(amplitudes: ComplexField, t: f64) -> Self {
        Self { amplitudes, t }
    }

    pub fn grid(&self) -> &Grid1D {
        self.amplitudes.grid()
    }

    pub fn amplitudes(&self) -> &ComplexField {
        &self.amplitudes
    }

    pub fn values(&self) -> &[Complex64] {
        self.amplitudes.values()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm_sqr().integrate_all()
    }

    /// Multiplies every amplitude by `f(x)`; the result is not renormalized.
    pub fn map_pointwise(&self, f: impl Fn(f64) -> Complex64) -> Self {
        let grid = *self.grid();
        let values = self
            .values()
            .iter()
            .enumerate()
            .map(|(j, z)| z * f(grid.x(j)))
            .collect();
        Self { amplitudes: ComplexField::from_raw(grid, values), t: self.t }
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        self.map_pointwise(|_| phase)
    }
}

fn check_support(spec: &GaussianSpec, grid: &Grid1D) -> Result<()> {
    let margin = SUPPORT_SIGMAS * spec.sigma0;
    if spec.x0 - grid.x_min() < margin || grid.x_max() - spec.x0 < margin {
        return Err(Error::Config(format!(
            "packet at x0 = {} with sigma0 = {} is not supported inside grid {grid}",
            spec.x0, spec.sigma0
        )));
    }
    Ok(())
}

fn raw_packet(spec: &GaussianSpec, grid: &Grid1D) -> Vec<Complex64> {
    let inv = 1.0 / (4.0 * spec.sigma0 * spec.sigma0);
    grid.positions()
        .into_iter()
        .map(|x| {
            let d = x - spec.x0;
            Complex64::new(-d * d * inv, spec.p0 * d).exp()
        })
        .collect()
}

/// A single normalized Gaussian packet at `t = 0`.
pub fn gaussian_packet(spec: &GaussianSpec, grid: &Grid1D) -> Result<WaveFunction> {
    spec.validate()?;
    check_support(spec, grid)?;
    WaveFunction::normalized(ComplexField::new(*grid, raw_packet(spec, grid))?, 0.0)
}

/// `A0 * sum_i c_i psi_i` with each `psi_i` individually normalized and `A0`
/// chosen so the superposition has unit norm.
pub fn superpose(specs: &[GaussianSpec], grid: &Grid1D) -> Result<WaveFunction> {
    if specs.is_empty() {
        return Err(Error::Argument("superposition needs at least one packet".into()));
    }
    let mut sum = vec![Complex64::new(0.0, 0.0); grid.len()];
    for spec in specs {
        let packet = gaussian_packet(spec, grid)?;
        for (acc, z) in sum.iter_mut().zip(packet.values()) {
            *acc += spec.c * z;
        }
    }
    WaveFunction::normalized(ComplexField::new(*grid, sum)?, 0.0)
}

/// Normalization constant `A0^2` that [`superpose`] applies to the raw sum.
pub fn superposition_norm_factor(specs: &[GaussianSpec], grid: &Grid1D) -> Result<f64> {
    if specs.is_empty() {
        return Err(Error::Argument("superposition needs at least one packet".into()));
    }
    let mut sum = vec![Complex64::new(0.0, 0.0); grid.len()];
    for spec in specs {
        let packet = gaussian_packet(spec, grid)?;
        for (acc, z) in sum.iter_mut().zip(packet.values()) {
            *acc += spec.c * z;
        }
    }
    let norm = ComplexField::new(*grid, sum)?.norm_sqr().integrate_all();
    Ok(1.0 / norm)
}

/// ρ = |Ψ|².
pub fn density(psi: &WaveFunction) -> RealField {
    psi.amplitudes().norm_sqr()
}

pub(crate) fn current_with(psi: &WaveFunction, spectral: &Spectral, mass: f64) -> Result<Vec<f64>> {
    let values = psi.values();
    let dpsi = spectral.derivative(values);
    let scale = 1.0 / (2.0 * mass);
    let mut out = Vec::with_capacity(values.len());
    let mut worst: f64 = 0.0;
    for (z, dz) in values.iter().zip(&dpsi) {
        // (1 / 2mi) [Ψ* ∇Ψ − Ψ ∇Ψ*]
        let bracket = z.conj() * dz - z * dz.conj();
        let j = bracket * Complex64::new(0.0, -scale);
        worst = worst.max(j.im.abs());
        out.push(j.re);
    }
    if worst > 1e-10 {
        return Err(Error::NumericalConsistency(format!(
            "current density has imaginary residue {worst:e}"
        )));
    }
    Ok(out)
}

/// Probability current density J = (1/2mi)[Ψ*∇Ψ − Ψ∇Ψ*] with ħ = 1.
pub fn current_density(psi: &WaveFunction, mass: f64) -> Result<RealField> {
    let spectral = Spectral::new(psi.grid());
    Ok(RealField::from_raw(*psi.grid(), current_with(psi, &spectral, mass)?))
}

/// v = J/ρ where ρ is above the floor; below it, values are filled by
/// linear interpolation between the nearest valid neighbours.
pub(crate) fn velocity_from(current: &[f64], rho: &[f64], rho_floor: f64) -> Result<Vec<f64>> {
    let n = rho.len();
    let mut v = vec![f64::NAN; n];
    let mut valid = Vec::with_capacity(n);
    for j in 0..n {
        if rho[j] >= rho_floor && rho[j] > 0.0 {
            v[j] = current[j] / rho[j];
            valid.push(j);
        }
    }
    if valid.is_empty() {
        return Err(Error::Degenerate("density below floor everywhere".into()));
    }
    let first = valid[0];
    let last = *valid.last().unwrap();
    for j in 0..first {
        v[j] = v[first];
    }
    for j in last + 1..n {
        v[j] = v[last];
    }
    for pair in valid.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi > lo + 1 {
            let (vl, vh) = (v[lo], v[hi]);
            for (i, slot) in v[lo + 1..hi].iter_mut().enumerate() {
                let s = (i + 1) as f64 / (hi - lo) as f64;
                *slot = vl + s * (vh - vl);
            }
        }
    }
    Ok(v)
}

pub(crate) fn velocity_with(psi: &WaveFunction, spectral: &Spectral, mass: f64, rho_floor: Option<f64>) -> Result<Vec<f64>> {
    let rho = density(psi);
    let floor = match rho_floor {
        Some(f) if f > 0.0 => f,
        Some(f) => return Err(Error::Argument(format!("rho_floor must be positive, got {f}"))),
        None => DEFAULT_RHO_FLOOR * rho.max(),
    };
    let current = current_with(psi, spectral, mass)?;
    velocity_from(&current, rho.values(), floor)
}

/// Bohmian velocity field v = J/ρ = ∇S/m.
///
/// `rho_floor` defaults to `1e-12 * max ρ`.
pub fn velocity_field(psi: &WaveFunction, mass: f64, rho_floor: Option<f64>) -> Result<RealField> {
    let spectral = Spectral::new(psi.grid());
    Ok(RealField::from_raw(*psi.grid(), velocity_with(psi, &spectral, mass, rho_floor)?))
}

/// ∫_a^b ρ dx.
pub fn restricted_probability(psi: &WaveFunction, a: f64, b: f64) -> Result<f64> {
    let p = integrate(&density(psi), a, b)?;
    debug_assert!((-1e-15..=1.0 + 1e-9).contains(&p), "restricted probability {p}");
    Ok(p)
}

fn momentum_moments(psi: &WaveFunction, spectral: &Spectral) -> (f64, f64) {
    let mut buf = psi.values().to_vec();
    spectral.forward(&mut buf);
    let (mut w, mut p1, mut p2) = (0.0, 0.0, 0.0);
    for (z, &k) in buf.iter().zip(spectral.wave_numbers()) {
        let a = z.norm_sqr();
        w += a;
        p1 += a * k;
        p2 += a * k * k;
    }
    (p1 / w, p2 / w)
}

/// ⟨p⟩ evaluated in momentum space.
pub fn momentum_expectation(psi: &WaveFunction) -> f64 {
    momentum_moments(psi, &Spectral::new(psi.grid())).0
}

pub fn position_moments(psi: &WaveFunction) -> (f64, f64) {
    let rho = density(psi);
    let grid = psi.grid();
    let norm = rho.integrate_all();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (j, r) in rho.values().iter().enumerate() {
        let x = grid.x(j);
        m1 += r * x;
        m2 += r * x * x;
    }
    let dx = grid.dx();
    (m1 * dx / norm, m2 * dx / norm)
}

pub(crate) fn energy_with(psi: &WaveFunction, potential: &RealField, spectral: &Spectral, mass: f64) -> f64 {
    let (_, p2) = momentum_moments(psi, spectral);
    let rho = density(psi);
    let norm = rho.integrate_all();
    let pot: f64 = rho.values().iter().zip(potential.values()).map(|(r, v)| r * v).sum::<f64>() * psi.grid().dx();
    p2 / (2.0 * mass) + pot / norm
}

/// ⟨p²/2m⟩ (spectral) + ⟨V⟩.
pub fn mean_energy(psi: &WaveFunction, potential: &RealField, mass: f64) -> Result<f64> {
    if potential.grid() != psi.grid() {
        return Err(Error::Argument("potential and wave function live on different grids".into()));
    }
    Ok(energy_with(psi, potential, &Spectral::new(psi.grid()), mass))
}
