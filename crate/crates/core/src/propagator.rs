//! Strang split-operator propagation and the snapshot record it produces.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid1D, RealField, Spectral};
use crate::state::{self, density, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_stride: usize,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

fn default_mass() -> f64 {
    1.0
}

impl PropagationConfig {
    pub fn new(dt: f64, n_steps: usize, snapshot_stride: usize) -> Result<Self> {
        let cfg = Self { dt, n_steps, snapshot_stride, mass: 1.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.snapshot_stride == 0 || self.snapshot_stride > self.n_steps {
            return Err(Error::Config(format!(
                "snapshot_stride must lie in [1, n_steps = {}], got {}",
                self.n_steps, self.snapshot_stride
            )));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config(format!("mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_steps / self.snapshot_stride + 1
    }

    pub fn t_final(&self) -> f64 {
        ((self.n_snapshots() - 1) * self.snapshot_stride) as f64 * self.dt
    }
}

/// Precomputed phase factors for one `(grid, potential, dt, mass)` combination.
#[derive(Clone, Debug)]
pub struct Propagator {
    spectral: Spectral,
    kinetic_half: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
    dt: f64,
}

impl Propagator {
    /// `dt` may be negative to run the dynamics backwards.
    pub fn new(potential: &RealField, dt: f64, mass: f64) -> Result<Self> {
        if !(dt != 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("time step must be finite and non-zero, got {dt}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Argument(format!("mass must be positive, got {mass}")));
        }
        let spectral = Spectral::new(potential.grid());
        let kinetic_half = spectral
            .wave_numbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -k * k * dt / (4.0 * mass)))
            .collect();
        let potential_phase = potential
            .values()
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -v * dt))
            .collect();
        Ok(Self { spectral, kinetic_half, potential_phase, dt })
    }

    pub fn grid(&self) -> &Grid1D {
        self.spectral.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic(&self, buf: &mut [Complex64]) {
        self.spectral.forward(buf);
        for (z, p) in buf.iter_mut().zip(&self.kinetic_half) {
            *z *= p;
        }
        self.spectral.inverse(buf);
    }

    fn step_in_place(&self, buf: &mut [Complex64]) {
        self.kinetic(buf);
        for (z, p) in buf.iter_mut().zip(&self.potential_phase) {
            *z *= p;
        }
        self.kinetic(buf);
    }

    /// Advances `psi` by `steps` time steps.
    pub fn advance(&self, psi: &WaveFunction, steps: usize) -> Result<WaveFunction> {
        if psi.grid() != self.grid() {
            return Err(Error::Argument("wave function and potential live on different grids".into()));
        }
        let mut buf = psi.values().to_vec();
        for s in 1..=steps {
            self.step_in_place(&mut buf);
            if !buf.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Instability { t: psi.t() + s as f64 * self.dt });
            }
        }
        let t = snap_time(psi.t() + steps as f64 * self.dt);
        Ok(WaveFunction::from_parts(ComplexField::from_raw(*self.grid(), buf), t))
    }
}

fn snap_time(t: f64) -> f64 {
    if t.abs() < 1e-9 {
        0.0
    } else {
        t
    }
}

/// One Strang step: half kinetic, full potential phase, half kinetic.
pub fn step(psi: &WaveFunction, potential: &RealField, dt: f64, mass: f64) -> Result<WaveFunction> {
    Propagator::new(potential, dt, mass)?.advance(psi, 1)
}

/// Norm and energy bookkeeping gathered during [`propagate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub initial_energy: f64,
    pub max_norm_drift: f64,
    pub max_relative_energy_drift: f64,
    pub norms: Vec<f64>,
    pub energies: Vec<f64>,
}

impl SolverDiagnostics {
    fn from_series(norms: Vec<f64>, energies: Vec<f64>) -> Self {
        let initial_energy = energies[0];
        let scale = if initial_energy.abs() > 0.0 { initial_energy.abs() } else { 1.0 };
        let max_norm_drift = norms.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
        let max_relative_energy_drift =
            energies.iter().map(|e| (e - initial_energy).abs() / scale).fold(0.0, f64::max);
        Self { initial_energy, max_norm_drift, max_relative_energy_drift, norms, energies }
    }
}

/// Time-ordered wave-function snapshots sharing one grid and potential.
///
/// Velocity fields are computed lazily per snapshot and cached, so the store
/// can be shared read-only across threads.
#[derive(Debug)]
pub struct SnapshotStore {
    times: Vec<f64>,
    states: Vec<WaveFunction>,
    config: PropagationConfig,
    potential: RealField,
    spectral: Spectral,
    diagnostics: SolverDiagnostics,
    velocities: Vec<OnceLock<Vec<f64>>>,
}

impl SnapshotStore {
    /// Assembles a store from precomputed states.
    pub fn from_states(states: Vec<WaveFunction>, potential: RealField, config: PropagationConfig) -> Result<Self> {
        config.validate()?;
        let first = states.first().ok_or_else(|| Error::Argument("snapshot store needs at least one state".into()))?;
        let grid = *first.grid();
        if first.t() != 0.0 {
            return Err(Error::Argument(format!("first snapshot must be at t = 0, got {}", first.t())));
        }
        if potential.grid() != &grid {
            return Err(Error::Argument("potential and snapshots live on different grids".into()));
        }
        for pair in states.windows(2) {
            if pair[1].grid() != &grid {
                return Err(Error::Argument("snapshots live on different grids".into()));
            }
            if !(pair[1].t() > pair[0].t()) {
                return Err(Error::Argument(format!(
                    "snapshot times not strictly increasing at t = {}",
                    pair[1].t()
                )));
            }
        }
        let spectral = Spectral::new(&grid);
        let norms: Vec<f64> = states.iter().map(WaveFunction::norm).collect();
        if let Some(n) = norms.iter().find(|n| (*n - 1.0).abs() > 1e-8) {
            return Err(Error::NumericalConsistency(format!("snapshot norm {n} differs from 1")));
        }
        let energies = states
            .iter()
            .map(|s| state::energy_with(s, &potential, &spectral, config.mass))
            .collect();
        let times = states.iter().map(WaveFunction::t).collect();
        let velocities = (0..states.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            times,
            states,
            config,
            potential,
            spectral,
            diagnostics: SolverDiagnostics::from_series(norms, energies),
            velocities,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        self.states[0].grid()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[WaveFunction] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &WaveFunction {
        &self.states[i]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.states.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.times[self.last_index()]
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.config
    }

    pub fn mass(&self) -> f64 {
        self.config.mass
    }

    pub fn potential(&self) -> &RealField {
        &self.potential
    }

    pub fn diagnostics(&self) -> &SolverDiagnostics {
        &self.diagnostics
    }

    /// Index of the snapshot whose time is closest to `t`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let dt = self.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let (i, ti) = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .expect("store is never empty");
        if (ti - t).abs() > 0.5 * dt.min(1.0) + 1e-9 {
            return Err(Error::Range(format!("no snapshot near t = {t}")));
        }
        Ok(i)
    }

    /// Velocity field of snapshot `i` with the default density floor.
    pub fn velocity(&self, i: usize) -> Result<&[f64]> {
        if let Some(v) = self.velocities[i].get() {
            return Ok(v);
        }
        let v = state::velocity_with(&self.states[i], &self.spectral, self.config.mass, None)?;
        Ok(self.velocities[i].get_or_init(|| v))
    }

    pub fn velocity_field(&self, i: usize) -> Result<RealField> {
        Ok(RealField::from_raw(*self.grid(), self.velocity(i)?.to_vec()))
    }

    pub fn current(&self, i: usize) -> Result<RealField> {
        Ok(RealField::from_raw(
            *self.grid(),
            state::current_with(&self.states[i], &self.spectral, self.config.mass)?,
        ))
    }

    pub fn density(&self, i: usize) -> RealField {
        density(&self.states[i])
    }

    /// Fills the velocity cache for every snapshot in parallel.
    pub fn precompute_velocities(&self) -> Result<()> {
        use rayon::prelude::*;
        (0..self.len()).into_par_iter().try_for_each(|i| self.velocity(i).map(|_| ()))
    }

    /// Same store with every snapshot multiplied by `e^{i theta}`.
    pub fn with_global_phase(&self, theta: f64) -> Result<Self> {
        let states = self.states.iter().map(|s| s.with_global_phase(theta)).collect();
        Self::from_states(states, self.potential.clone(), self.config)
    }

    /// RMS over the grid of `(ρ_{i+1} − ρ_i)/Δ + ∂_x J̄`, with `J̄` the mean
    /// current of the two snapshots.
    pub fn continuity_residual(&self, i: usize) -> Result<f64> {
        if i + 1 >= self.len() {
            return Err(Error::Argument(format!("snapshot pair ({i}, {}) out of range", i + 1)));
        }
        let delta = self.times[i + 1] - self.times[i];
        let j0 = state::current_with(&self.states[i], &self.spectral, self.config.mass)?;
        let j1 = state::current_with(&self.states[i + 1], &self.spectral, self.config.mass)?;
        let mean: Vec<Complex64> = j0.iter().zip(&j1).map(|(a, b)| Complex64::new(0.5 * (a + b), 0.0)).collect();
        let div = self.spectral.derivative(&mean);
        let r0 = self.density(i);
        let r1 = self.density(i + 1);
        let sum: f64 = r0
            .values()
            .iter()
            .zip(r1.values())
            .zip(&div)
            .map(|((a, b), d)| {
                let r = (b - a) / delta + d.re;
                r * r
            })
            .sum();
        Ok((sum / self.grid().len() as f64).sqrt())
    }

    /// Writes `t,x,re,im` rows, one per snapshot and grid point.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,x,re,im")?;
        let grid = self.grid();
        for s in &self.states {
            for (j, z) in s.values().iter().enumerate() {
                writeln!(out, "{},{},{:e},{:e}", s.t(), grid.x(j), z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Propagates `psi0` for `cfg.n_steps` steps, keeping every
/// `cfg.snapshot_stride`-th state (plus the initial one).
pub fn propagate(psi0: &WaveFunction, potential: &RealField, cfg: &PropagationConfig) -> Result<SnapshotStore> {
    cfg.validate()?;
    if psi0.t() != 0.0 {
        return Err(Error::Argument(format!("initial state must be at t = 0, got {}", psi0.t())));
    }
    let prop = Propagator::new(potential, cfg.dt, cfg.mass)?;
    let mut states = Vec::with_capacity(cfg.n_snapshots());
    states.push(psi0.clone());
    let mut buf = psi0.values().to_vec();
    for k in 1..cfg.n_snapshots() {
        for s in 0..cfg.snapshot_stride {
            prop.step_in_place(&mut buf);
            if buf.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                let step_index = (k - 1) * cfg.snapshot_stride + s + 1;
                return Err(Error::Instability { t: step_index as f64 * cfg.dt });
            }
        }
        let t = (k * cfg.snapshot_stride) as f64 * cfg.dt;
        states.push(WaveFunction::from_parts(ComplexField::from_raw(*prop.grid(), buf.clone()), t));
    }
    SnapshotStore::from_states(states, potential.clone(), *cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{gaussian_packet, position_moments, GaussianSpec};
    use approx::assert_abs_diff_eq;

    fn rms_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(PropagationConfig::new(0.0, 10, 1).is_err());
        assert!(PropagationConfig::new(0.1, 0, 1).is_err());
        assert!(PropagationConfig::new(0.1, 10, 11).is_err());
        assert!(PropagationConfig::new(0.1, 10, 0).is_err());
        assert!(PropagationConfig::new(0.1, 10, 3).unwrap().with_mass(-1.0).validate().is_err());
        assert_eq!(PropagationConfig::new(0.1, 10, 3).unwrap().n_snapshots(), 4);
    }

    #[test]
    fn plane_wave_phase() {
        let g = Grid1D::new(-10.0, 10.0, 256).unwrap();
        let k0 = 7.0 * g.dk();
        let psi = WaveFunction::normalized(ComplexField::from_fn(g, |x| Complex64::new(0.0, k0 * x).exp()).unwrap(), 0.0).unwrap();
        let dt = 0.01;
        let next = step(&psi, &RealField::zeros(g), dt, 1.0).unwrap();
        let phase = Complex64::from_polar(1.0, -k0 * k0 * dt / 2.0);
        let max = psi.values().iter().zip(next.values()).map(|(a, b)| (a * phase - b).norm()).fold(0.0, f64::max);
        assert!(max <= 1e-12, "{max}");
        assert_abs_diff_eq!(next.t(), dt);
    }

    #[test]
    fn constant_potential_is_global_phase() {
        let g = Grid1D::new(-20.0, 20.0, 512).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 2.0, 1.0), &g).unwrap();
        let v0 = 3.0;
        let dt = 0.05;
        let with_v = step(&psi, &RealField::from_fn(g, |_| v0).unwrap(), dt, 1.0).unwrap();
        let free = step(&psi, &RealField::zeros(g), dt, 1.0).unwrap();
        let phase = Complex64::from_polar(1.0, -v0 * dt);
        let max = free.values().iter().zip(with_v.values()).map(|(a, b)| (a * phase - b).norm()).fold(0.0, f64::max);
        assert!(max <= 1e-12);
        let rho_a = density(&with_v);
        let rho_b = density(&free);
        assert!(rho_a.values().iter().zip(rho_b.values()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn free_gaussian_spreading() {
        let g = Grid1D::new(-40.0, 40.0, 2048).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 0.0, 1.0), &g).unwrap();
        let cfg = PropagationConfig::new(1e-3, 1000, 100).unwrap();
        let store = propagate(&psi, &RealField::zeros(g), &cfg).unwrap();
        let last = store.state(store.last_index());
        assert_abs_diff_eq!(last.t(), 1.0, epsilon = 1e-12);
        let (m1, m2) = position_moments(last);
        let width = (m2 - m1 * m1).sqrt();
        assert_abs_diff_eq!(width, 1.25f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn bookkeeping_single_step() {
        let g = Grid1D::new(-20.0, 20.0, 256).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 1.0, 1.0), &g).unwrap();
        let cfg = PropagationConfig::new(0.01, 1, 1).unwrap();
        let store = propagate(&psi, &RealField::zeros(g), &cfg).unwrap();
        assert_eq!(store.times(), &[0.0, 0.01]);
    }

    #[test]
    fn norm_and_energy_preserved() {
        let g = Grid1D::new(-40.0, 40.0, 1024).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(-5.0, 3.0, 1.0), &g).unwrap();
        let v = crate::potential::sample_potential(&crate::potential::PotentialSpec::tanh_barrier(4.0, 2.0, -1.0, 1.0).unwrap(), &g).unwrap();
        let cfg = PropagationConfig::new(1e-3, 2000, 100).unwrap();
        let store = propagate(&psi, &v, &cfg).unwrap();
        let d = store.diagnostics();
        assert!(d.max_norm_drift <= 1e-10);
        assert!(d.max_relative_energy_drift <= 1e-5, "{}", d.max_relative_energy_drift);
    }

    #[test]
    fn forward_backward_recovers_state() {
        let g = Grid1D::new(-40.0, 40.0, 1024).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(-5.0, 3.0, 0.5), &g).unwrap();
        let v = crate::potential::sample_potential(&crate::potential::PotentialSpec::tanh_barrier(4.0, 2.0, -1.0, 1.0).unwrap(), &g).unwrap();
        let fwd = Propagator::new(&v, 1e-3, 1.0).unwrap().advance(&psi, 500).unwrap();
        let back = Propagator::new(&v, -1e-3, 1.0).unwrap().advance(&fwd, 500).unwrap();
        assert_eq!(back.t(), 0.0);
        assert!(rms_diff(psi.values(), back.values()) <= 1e-10);
    }

    #[test]
    fn blow_up_is_reported() {
        let g = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 0.0, 1.0), &g).unwrap();
        let v = RealField::from_fn(g, |x| if x > 0.0 { f64::MAX } else { 0.0 }).unwrap();
        let err = step(&psi, &v, 1e300, 1.0).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }

    #[test]
    fn continuity_converges() {
        let g = Grid1D::new(-40.0, 40.0, 1024).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(-5.0, 3.0, 1.0), &g).unwrap();
        let v = RealField::zeros(g);
        let coarse = propagate(&psi, &v, &PropagationConfig::new(1e-3, 200, 40).unwrap()).unwrap();
        let fine = propagate(&psi, &v, &PropagationConfig::new(1e-3, 200, 20).unwrap()).unwrap();
        let rc = coarse.continuity_residual(2).unwrap();
        let rf = fine.continuity_residual(4).unwrap();
        assert!(rf < rc / 1.8, "{rc} {rf}");
    }

    #[test]
    fn from_states_rejects_bad_input() {
        let g = Grid1D::new(-10.0, 10.0, 64).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 0.0, 1.0), &g).unwrap();
        let cfg = PropagationConfig::new(0.1, 1, 1).unwrap();
        let zero = RealField::zeros(g);
        assert!(SnapshotStore::from_states(vec![], zero.clone(), cfg).is_err());
        let later = WaveFunction::normalized(psi.amplitudes().clone(), 0.5).unwrap();
        assert!(SnapshotStore::from_states(vec![later.clone(), psi.clone()], zero.clone(), cfg).is_err());
        assert!(SnapshotStore::from_states(vec![psi.clone(), later], zero, cfg).is_ok());
    }
}
