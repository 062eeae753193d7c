//! Bohmian trajectories integrated through a frozen [`SnapshotStore`].

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interpolate, quantile};
use crate::propagator::SnapshotStore;
use crate::state::{density, velocity_field, WaveFunction};

pub const DEFAULT_SUBSTEPS: usize = 4;
pub const DEFAULT_SUPPORT_CUT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    x_init: f64,
    times: Vec<f64>,
    positions: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() {
            return Err(Error::Argument("trajectory needs matching, non-empty time and position lists".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("trajectory positions must be finite".into()));
        }
        Ok(Self { x_init: positions[0], times, positions })
    }

    pub fn x_init(&self) -> f64 {
        self.x_init
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn x_final(&self) -> f64 {
        *self.positions.last().unwrap()
    }
}

/// Trajectories ordered by initial position, sampled at common times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    trajectories: Vec<Trajectory>,
}

impl TrajectoryEnsemble {
    /// Checks initial ordering and shared sample times. Ordering at later
    /// times is left to [`check_noncrossing`].
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            for (i, pair) in trajectories.windows(2).enumerate() {
                if !(pair[1].x_init > pair[0].x_init) {
                    return Err(Error::Argument(format!(
                        "initial positions not strictly increasing at trajectories {i}, {}",
                        i + 1
                    )));
                }
                if pair[1].times != first.times {
                    return Err(Error::Argument("trajectories sampled at different times".into()));
                }
            }
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, i: usize) -> Option<&Trajectory> {
        self.trajectories.get(i)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.trajectories.first().map(|t| t.times()).unwrap_or(&[])
    }

    pub fn x_inits(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::x_init).collect()
    }

    /// The same trajectories cut after sample `last`.
    pub fn truncated(&self, last: usize) -> Result<Self> {
        if last >= self.times().len() {
            return Err(Error::Argument(format!("sample index {last} beyond {} samples", self.times().len())));
        }
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                x_init: t.x_init,
                times: t.times[..=last].to_vec(),
                positions: t.positions[..=last].to_vec(),
            })
            .collect();
        Ok(Self { trajectories })
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::x_final).collect()
    }

    /// Writes `traj_id,t,x` rows sorted by trajectory then time.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "traj_id,t,x")?;
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (t, x) in traj.times.iter().zip(&traj.positions) {
                writeln!(out, "{id},{t},{x}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Even,
    Quantile,
}

/// Initial positions over the effective support `{x : ρ0(x) ≥ support_cut · max ρ0}`.
pub fn sample_initial_conditions(
    psi0: &WaveFunction,
    n: usize,
    scheme: SamplingScheme,
    support_cut: f64,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least two initial conditions, got {n}")));
    }
    if !(support_cut > 0.0 && support_cut < 1.0) {
        return Err(Error::Argument(format!("support_cut must lie in (0, 1), got {support_cut}")));
    }
    match scheme {
        SamplingScheme::Even => {
            let (lo, hi) = effective_support(psi0, support_cut)?;
            let step = (hi - lo) / (n - 1) as f64;
            Ok((0..n).map(|k| if k == n - 1 { hi } else { lo + k as f64 * step }).collect())
        }
        SamplingScheme::Quantile => {
            let rho = density(psi0);
            if rho.max() <= 0.0 {
                return Err(Error::Degenerate("empty support".into()));
            }
            (0..n).map(|k| quantile(&rho, (k as f64 + 0.5) / n as f64)).collect()
        }
    }
}

/// Leftmost and rightmost grid points with `ρ ≥ cut · max ρ`.
pub fn effective_support(psi: &WaveFunction, cut: f64) -> Result<(f64, f64)> {
    let rho = density(psi);
    let threshold = cut * rho.max();
    let values = rho.values();
    let first = values.iter().position(|&r| r >= threshold && r > 0.0);
    let last = values.iter().rposition(|&r| r >= threshold && r > 0.0);
    match (first, last) {
        (Some(a), Some(b)) if b > a => Ok((psi.grid().x(a), psi.grid().x(b))),
        _ => Err(Error::Degenerate("effective support is empty or a single point".into())),
    }
}

/// Velocity at `x` by linear interpolation of the velocity field of `psi`.
pub fn velocity_at(psi: &WaveFunction, x: f64, mass: f64) -> Result<f64> {
    velocity_field(psi, mass, None)?.value_at(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntegrationOptions {
    /// RK4 steps per snapshot interval.
    pub substeps: usize,
    /// Stop at this snapshot index instead of the last one.
    pub until: Option<usize>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { substeps: DEFAULT_SUBSTEPS, until: None }
    }
}

impl IntegrationOptions {
    fn last_index(&self, store: &SnapshotStore) -> Result<usize> {
        if self.substeps == 0 {
            return Err(Error::Argument("substeps must be at least 1".into()));
        }
        match self.until {
            Some(i) if i >= store.len() => {
                Err(Error::Argument(format!("snapshot index {i} beyond store of {} snapshots", store.len())))
            }
            Some(i) => Ok(i),
            None => Ok(store.last_index()),
        }
    }
}

struct Escaped {
    t: f64,
}

fn velocity_between(store: &SnapshotStore, i: usize, s: f64, x: f64) -> Result<std::result::Result<f64, Escaped>> {
    let grid = store.grid();
    if !grid.contains(x) || !x.is_finite() {
        let t = store.times()[i] + s * (store.times()[i + 1] - store.times()[i]);
        return Ok(Err(Escaped { t }));
    }
    let v0 = interpolate(grid, store.velocity(i)?, x);
    let v1 = interpolate(grid, store.velocity(i + 1)?, x);
    Ok(Ok(v0 + s * (v1 - v0)))
}

fn integrate_path(store: &SnapshotStore, x0: f64, substeps: usize, last: usize) -> Result<std::result::Result<Vec<f64>, Escaped>> {
    let mut positions = Vec::with_capacity(last + 1);
    positions.push(x0);
    let mut x = x0;
    let h_frac = 1.0 / substeps as f64;
    macro_rules! vel {
        ($i:expr, $s:expr, $x:expr) => {
            match velocity_between(store, $i, $s, $x)? {
                Ok(v) => v,
                Err(e) => return Ok(Err(e)),
            }
        };
    }
    for i in 0..last {
        let delta = store.times()[i + 1] - store.times()[i];
        let h = delta * h_frac;
        for sub in 0..substeps {
            let s = sub as f64 * h_frac;
            let k1 = vel!(i, s, x);
            let k2 = vel!(i, s + 0.5 * h_frac, x + 0.5 * h * k1);
            let k3 = vel!(i, s + 0.5 * h_frac, x + 0.5 * h * k2);
            let k4 = vel!(i, s + h_frac, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !store.grid().contains(x) || !x.is_finite() {
            return Ok(Err(Escaped { t: store.times()[i + 1] }));
        }
        positions.push(x);
    }
    Ok(Ok(positions))
}

/// Integrates a single trajectory from `x0`.
pub fn integrate_trajectory(store: &SnapshotStore, x0: f64, options: &IntegrationOptions) -> Result<Trajectory> {
    let last = options.last_index(store)?;
    if !store.grid().contains(x0) {
        return Err(Error::Range(format!("initial position {x0} outside grid {}", store.grid())));
    }
    match integrate_path(store, x0, options.substeps, last)? {
        Ok(positions) => Trajectory::new(store.times()[..=last].to_vec(), positions),
        Err(e) => Err(Error::Escape { trajectory: 0, x_init: x0, t: e.t }),
    }
}

/// Integrates `dx/dt = v(x, t)` with classical RK4 for every initial
/// position, interpolating `v` linearly in space and time between snapshots.
pub fn integrate_trajectories(store: &SnapshotStore, x_inits: &[f64]) -> Result<TrajectoryEnsemble> {
    integrate_trajectories_with(store, x_inits, &IntegrationOptions::default())
}

pub fn integrate_trajectories_with(
    store: &SnapshotStore,
    x_inits: &[f64],
    options: &IntegrationOptions,
) -> Result<TrajectoryEnsemble> {
    let last = options.last_index(store)?;
    for (i, pair) in x_inits.windows(2).enumerate() {
        if !(pair[1] > pair[0]) {
            return Err(Error::Argument(format!("initial positions not strictly increasing at index {}", i + 1)));
        }
    }
    if let Some(x) = x_inits.iter().find(|x| !store.grid().contains(**x)) {
        return Err(Error::Range(format!("initial position {x} outside grid {}", store.grid())));
    }
    store.precompute_velocities()?;
    let paths: Vec<_> = x_inits
        .par_iter()
        .map(|&x0| integrate_path(store, x0, options.substeps, last))
        .collect::<Result<_>>()?;
    let times = store.times()[..=last].to_vec();
    let mut trajectories = Vec::with_capacity(paths.len());
    for (id, (path, &x0)) in paths.into_iter().zip(x_inits).enumerate() {
        match path {
            Ok(positions) => trajectories.push(Trajectory::new(times.clone(), positions)?),
            Err(e) => return Err(Error::Escape { trajectory: id, x_init: x0, t: e.t }),
        }
    }
    let ensemble = TrajectoryEnsemble::new(trajectories)?;
    if let Some(v) = check_noncrossing(&ensemble).violations.first() {
        return Err(Error::OrderingViolation { first: v.first, second: v.second, t: v.t });
    }
    Ok(ensemble)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingViolation {
    pub t: f64,
    pub first: usize,
    pub second: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonCrossingReport {
    pub violations: Vec<CrossingViolation>,
    /// Smallest `x_{i+1}(t) − x_i(t)` over all adjacent pairs and times.
    pub min_gap: f64,
}

impl NonCrossingReport {
    pub fn is_ordered(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_noncrossing(ens: &TrajectoryEnsemble) -> NonCrossingReport {
    let mut violations = Vec::new();
    let mut min_gap = f64::INFINITY;
    let trajs = ens.trajectories();
    for (k, &t) in ens.times().iter().enumerate() {
        for i in 0..trajs.len().saturating_sub(1) {
            let gap = trajs[i + 1].positions[k] - trajs[i].positions[k];
            min_gap = min_gap.min(gap);
            if !(gap > 0.0) {
                violations.push(CrossingViolation { t, first: i, second: i + 1 });
            }
        }
    }
    NonCrossingReport { violations, min_gap }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianRecord {
    pub pair_index: usize,
    pub t: f64,
    pub jacobian: f64,
}

/// `(x_{i+1}(t) − x_i(t)) / (x_{i+1}(0) − x_i(0))` at every sampled time.
pub fn pairwise_jacobian(ens: &TrajectoryEnsemble, i: usize) -> Result<Vec<JacobianRecord>> {
    if i + 1 >= ens.len() {
        return Err(Error::Argument(format!("pair ({i}, {}) out of range for {} trajectories", i + 1, ens.len())));
    }
    let (a, b) = (&ens.trajectories()[i], &ens.trajectories()[i + 1]);
    let gap0 = b.positions[0] - a.positions[0];
    if gap0 == 0.0 {
        return Err(Error::Argument(format!("pair {i} has zero initial separation")));
    }
    Ok(a.times
        .iter()
        .zip(a.positions.iter().zip(&b.positions))
        .map(|(&t, (xa, xb))| JacobianRecord { pair_index: i, t, jacobian: (xb - xa) / gap0 })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionWarning {
    pub pair_index: usize,
    pub t: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BornRuleReport {
    /// `residuals[pair][k]` at the k-th sampled time.
    pub residuals: Vec<Vec<f64>>,
    /// First time each pair's separation dropped below `dx/10`.
    pub warnings: Vec<ResolutionWarning>,
}

impl BornRuleReport {
    pub fn max_over(&self, pairs: &[usize]) -> f64 {
        pairs
            .iter()
            .flat_map(|&p| self.residuals[p].iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Relative change of `ρ(x̄) Δx` along every adjacent pair, `x̄` being the
/// pair midpoint.
pub fn born_rule_residual(ens: &TrajectoryEnsemble, store: &SnapshotStore) -> Result<BornRuleReport> {
    let times = ens.times();
    if times.len() > store.len() || times.iter().zip(store.times()).any(|(a, b)| a != b) {
        return Err(Error::Argument("ensemble was not integrated through this store".into()));
    }
    let grid = store.grid();
    let densities: Vec<_> = (0..times.len()).map(|k| store.density(k)).collect();
    let trajs = ens.trajectories();
    let mut residuals = Vec::with_capacity(trajs.len().saturating_sub(1));
    let mut warnings = Vec::new();
    for i in 0..trajs.len().saturating_sub(1) {
        let (a, b) = (&trajs[i].positions, &trajs[i + 1].positions);
        let weight = |k: usize| {
            let mid = 0.5 * (a[k] + b[k]);
            interpolate(grid, densities[k].values(), mid) * (b[k] - a[k])
        };
        let w0 = weight(0);
        let mut row = Vec::with_capacity(times.len());
        let mut warned = false;
        for k in 0..times.len() {
            let gap = b[k] - a[k];
            if !warned && gap < 0.1 * grid.dx() {
                warnings.push(ResolutionWarning { pair_index: i, t: times[k], gap });
                warned = true;
            }
            row.push(if k == 0 { 0.0 } else { (weight(k) - w0).abs() / w0 });
        }
        residuals.push(row);
    }
    Ok(BornRuleReport { residuals, warnings })
}

/// Adjacent pairs whose initial separation lies in `[min_gap, max_gap]` and
/// whose initial midpoint density is at least `density_cut · max ρ0`.
pub fn born_rule_pairs(ens: &TrajectoryEnsemble, psi0: &WaveFunction, min_gap: f64, max_gap: f64, density_cut: f64) -> Vec<usize> {
    let rho = density(psi0);
    let threshold = density_cut * rho.max();
    let x0 = ens.x_inits();
    (0..x0.len().saturating_sub(1))
        .filter(|&i| {
            let gap = x0[i + 1] - x0[i];
            let mid = 0.5 * (x0[i] + x0[i + 1]);
            gap >= min_gap && gap <= max_gap && interpolate(rho.grid(), rho.values(), mid) >= threshold
        })
        .collect()
}
