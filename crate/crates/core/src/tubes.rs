//! Separatrices, probability tubes and the domain analyses built on them.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, interpolate, Grid1D, RealField, Spectral};
use crate::propagator::SnapshotStore;
use crate::state::{density, WaveFunction};
use crate::trajectories::{check_noncrossing, integrate_trajectory, IntegrationOptions, Trajectory, TrajectoryEnsemble};

pub const DEFAULT_SEPARATRIX_TOL: f64 = 1e-4;
pub const DEFAULT_BRANCH_TOL: f64 = 1e-3;

/// A labelled interval `[a, b]` of configuration space; either end may be
/// infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub label: String,
    pub a: f64,
    pub b: f64,
}

impl Domain {
    pub fn new(label: impl Into<String>, a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::Argument(format!("invalid domain bounds [{a}, {b}]")));
        }
        Ok(Self { label: label.into(), a, b })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    /// Bounds clipped to the grid.
    pub fn clipped(&self, grid: &Grid1D) -> (f64, f64) {
        (self.a.max(grid.x_min()), self.b.min(grid.x_max()))
    }
}

/// Checks that domains are sorted and pairwise disjoint (touching ends allowed).
pub fn validate_domains(domains: &[Domain]) -> Result<()> {
    if domains.is_empty() {
        return Err(Error::Argument("no domains given".into()));
    }
    for pair in domains.windows(2) {
        if pair[1].a < pair[0].b {
            return Err(Error::Argument(format!(
                "domains '{}' and '{}' overlap or are out of order",
                pair[0].label, pair[1].label
            )));
        }
    }
    Ok(())
}

fn domain_index(domains: &[Domain], x: f64) -> Result<usize> {
    domains
        .iter()
        .position(|d| d.contains(x))
        .ok_or_else(|| Error::Classification(format!("final position {x} lies in no domain")))
}

/// Label of the domain containing the trajectory's last position.
pub fn classify_final(traj: &Trajectory, domains: &[Domain]) -> Result<String> {
    validate_domains(domains)?;
    Ok(domains[domain_index(domains, traj.x_final())?].label.clone())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparatrixOptions {
    pub tol: f64,
    /// Evenly spaced probes checked for a single label change before bisecting.
    pub scan_points: usize,
    pub integration: IntegrationOptions,
}

impl Default for SeparatrixOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_SEPARATRIX_TOL, scan_points: 9, integration: IntegrationOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    pub x_init: f64,
    /// Final bracket after bisection.
    pub bracket: (f64, f64),
    pub bisection_probes: usize,
}

/// Final position and velocity of the trajectory starting at `x0`.
pub fn final_state(store: &SnapshotStore, x0: f64, options: &IntegrationOptions) -> Result<(f64, f64)> {
    let traj = integrate_trajectory(store, x0, options)?;
    let last = traj.len() - 1;
    let x = traj.x_final();
    Ok((x, interpolate(store.grid(), store.velocity(last)?, x)))
}

/// Bisects on the initial position until the bracket is narrower than
/// `tol`, returning its midpoint. `predicate(x_final, v_final)` must take
/// different values at the bracket ends and switch once inside it.
pub fn find_separatrix(
    store: &SnapshotStore,
    predicate: impl Fn(f64, f64) -> bool,
    bracket: (f64, f64),
    options: &SeparatrixOptions,
) -> Result<Separatrix> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::Argument(format!("bracket ({lo}, {hi}) is empty")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {}", options.tol)));
    }
    let probe = |x: f64| -> Result<bool> {
        let (xf, vf) = final_state(store, x, &options.integration)?;
        Ok(predicate(xf, vf))
    };
    let at_lo = probe(lo)?;
    let at_hi = probe(hi)?;
    if at_lo == at_hi {
        return Err(Error::Bracket(format!("same outcome ({at_lo}) at both ends of ({lo}, {hi})")));
    }
    if options.scan_points > 2 {
        let n = options.scan_points;
        let mut previous = at_lo;
        let mut switches = 0;
        for k in 1..n - 1 {
            let current = probe(lo + (hi - lo) * k as f64 / (n - 1) as f64)?;
            switches += usize::from(current != previous);
            previous = current;
        }
        switches += usize::from(at_hi != previous);
        if switches > 1 {
            return Err(Error::BranchingSuspected(format!("{switches} outcome changes within ({lo}, {hi})")));
        }
    }
    let mut probes = 0;
    while hi - lo > options.tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        probes += 1;
    }
    Ok(Separatrix { x_init: 0.5 * (lo + hi), bracket: (lo, hi), bisection_probes: probes })
}

/// Two non-crossing boundary trajectories enclosing a probability tube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTube {
    lower: Trajectory,
    upper: Trajectory,
}

impl ProbabilityTube {
    pub fn new(lower: Trajectory, upper: Trajectory) -> Result<Self> {
        if lower.times() != upper.times() {
            return Err(Error::Argument("tube boundaries sampled at different times".into()));
        }
        let ens = TrajectoryEnsemble::new(vec![lower, upper])?;
        if let Some(v) = check_noncrossing(&ens).violations.first() {
            return Err(Error::OrderingViolation { first: v.first, second: v.second, t: v.t });
        }
        let mut it = ens.trajectories().iter().cloned();
        Ok(Self { lower: it.next().unwrap(), upper: it.next().unwrap() })
    }

    /// Integrates both boundaries from their initial positions.
    pub fn from_initial(store: &SnapshotStore, lower: f64, upper: f64, options: &IntegrationOptions) -> Result<Self> {
        Self::new(integrate_trajectory(store, lower, options)?, integrate_trajectory(store, upper, options)?)
    }

    pub fn lower(&self) -> &Trajectory {
        &self.lower
    }

    pub fn upper(&self) -> &Trajectory {
        &self.upper
    }

    pub fn domain_series(&self) -> DomainSeries {
        DomainSeries {
            times: self.lower.times().to_vec(),
            boundaries: self.lower.positions().iter().copied().zip(self.upper.positions().iter().copied()).collect(),
        }
    }
}

/// Probability between the tube walls at every sampled time.
pub fn tube_probability(tube: &ProbabilityTube, store: &SnapshotStore) -> Result<Vec<f64>> {
    let (lo, hi) = (tube.lower.positions(), tube.upper.positions());
    (0..lo.len()).map(|k| integrate(&store.density(k), lo[k], hi[k])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationStats {
    pub initial: f64,
    pub mean: f64,
    pub std_over_mean: f64,
    pub max_relative_deviation: f64,
}

impl ConservationStats {
    pub fn from_series(series: &[f64]) -> Self {
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let initial = series[0];
        let max_dev = series.iter().map(|p| (p - initial).abs()).fold(0.0, f64::max);
        Self { initial, mean, std_over_mean: var.sqrt() / mean, max_relative_deviation: max_dev / initial }
    }
}

/// Domain boundaries `(a(t), b(t))` per snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSeries {
    pub times: Vec<f64>,
    pub boundaries: Vec<(f64, f64)>,
}

impl DomainSeries {
    pub fn fixed(store: &SnapshotStore, a: f64, b: f64) -> Result<Self> {
        if a > b {
            return Err(Error::Argument(format!("domain bounds reversed: {a} > {b}")));
        }
        Ok(Self { times: store.times().to_vec(), boundaries: vec![(a, b); store.len()] })
    }

    pub fn probabilities(&self, store: &SnapshotStore) -> Result<Vec<f64>> {
        self.boundaries
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| integrate(&store.density(k), a, b))
            .collect()
    }
}

/// Residual of the integrated continuity equation at interior snapshots:
/// `dP/dt + J(b) − J(a) − (ḃ ρ(b) − ȧ ρ(a))` with centred differences in time.
pub fn flux_balance(domain: &DomainSeries, store: &SnapshotStore) -> Result<Vec<f64>> {
    let n = domain.boundaries.len();
    if n > store.len() || domain.times.iter().zip(store.times()).any(|(a, b)| a != b) {
        return Err(Error::Argument("domain series does not match the snapshot store".into()));
    }
    if n < 3 {
        return Err(Error::Argument("flux balance needs at least three snapshots".into()));
    }
    let probs = domain.probabilities(store)?;
    let grid = store.grid();
    let mut out = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let span = domain.times[k + 1] - domain.times[k - 1];
        let dp = (probs[k + 1] - probs[k - 1]) / span;
        let (a, b) = domain.boundaries[k];
        let da = (domain.boundaries[k + 1].0 - domain.boundaries[k - 1].0) / span;
        let db = (domain.boundaries[k + 1].1 - domain.boundaries[k - 1].1) / span;
        let current = store.current(k)?;
        let rho = store.density(k);
        let flux = interpolate(grid, current.values(), b) - interpolate(grid, current.values(), a);
        let advection = db * interpolate(grid, rho.values(), b) - da * interpolate(grid, rho.values(), a);
        out.push(dp + flux - advection);
    }
    Ok(out)
}

/// Far-field domain edges `2π(nN ± 1) t / (N m d)` of diffraction order `n`.
pub fn fraunhofer_boundary(n: i32, t: f64, slits: usize, spacing: f64, mass: f64) -> Result<(f64, f64)> {
    if slits < 2 {
        return Err(Error::Argument(format!("need at least two slits, got {slits}")));
    }
    if !(spacing > 0.0 && mass > 0.0 && t >= 0.0) {
        return Err(Error::Argument("spacing and mass must be positive and t non-negative".into()));
    }
    let big_n = slits as f64;
    let scale = 2.0 * PI * t / (big_n * mass * spacing);
    let centre = n as f64 * big_n;
    Ok(((centre - 1.0) * scale, (centre + 1.0) * scale))
}

/// Strict local minima of `rho` inside `[a, b]`, refined by a parabola
/// through the three surrounding samples. A flat run of equal values
/// bounded by larger ones counts once, at its centre.
pub fn find_minima(rho: &RealField, domain: (f64, f64)) -> Vec<f64> {
    let grid = rho.grid();
    let v = rho.values();
    let (a, b) = domain;
    let lo = ((a - grid.x_min()) / grid.dx()).ceil().max(0.0) as usize;
    let hi = (((b - grid.x_min()) / grid.dx()).floor().min((v.len() - 1) as f64)).max(0.0) as usize;
    let mut out = Vec::new();
    if hi < lo + 2 {
        return out;
    }
    let mut j = lo + 1;
    while j < hi {
        if v[j] < v[j - 1] {
            let mut q = j;
            while q < hi && v[q + 1] == v[j] {
                q += 1;
            }
            if q < hi && v[q + 1] > v[q] {
                if q == j {
                    let curvature = v[j - 1] - 2.0 * v[j] + v[j + 1];
                    let shift = if curvature > 0.0 { 0.5 * (v[j - 1] - v[j + 1]) / curvature } else { 0.0 };
                    out.push(grid.x(j) + shift.clamp(-0.5, 0.5) * grid.dx());
                } else {
                    out.push(0.5 * (grid.x(j) + grid.x(q)));
                }
            }
            j = q + 1;
        } else {
            j += 1;
        }
    }
    out
}

fn local_maximum(rho: &RealField, a: f64, b: f64) -> Option<(f64, f64)> {
    let grid = rho.grid();
    let v = rho.values();
    (0..v.len())
        .filter(|&j| grid.x(j) >= a && grid.x(j) <= b)
        .max_by(|&i, &j| v[i].total_cmp(&v[j]))
        .map(|j| (grid.x(j), v[j]))
}

/// Slit layout of a grating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingGeometry {
    pub slits: Vec<f64>,
    pub spacing: f64,
    pub mass: f64,
}

impl GratingGeometry {
    pub fn slit_count(&self) -> usize {
        self.slits.len()
    }

    /// Position of the `n`-th principal maximum in the far field at time `t`.
    pub fn principal_position(&self, n: i32, t: f64) -> f64 {
        let centre = self.slits.iter().sum::<f64>() / self.slits.len() as f64;
        centre + 2.0 * PI * n as f64 * t / (self.mass * self.spacing)
    }

    /// Intervals split at the midpoints between adjacent slit centres,
    /// extended to the grid edges at both ends.
    pub fn slit_intervals(&self, grid: &Grid1D) -> Vec<(f64, f64)> {
        let n = self.slits.len();
        (0..n)
            .map(|i| {
                let lo = if i == 0 { grid.x_min() } else { 0.5 * (self.slits[i - 1] + self.slits[i]) };
                let hi = if i + 1 == n { grid.x_max() } else { 0.5 * (self.slits[i] + self.slits[i + 1]) };
                (lo, hi)
            })
            .collect()
    }
}

/// One lobe of a diffraction pattern, between adjacent minima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub lower: f64,
    pub upper: f64,
    pub peak_position: f64,
    pub peak_density: f64,
    pub area: f64,
    /// Both ends are density minima (rather than edges of the support).
    pub resolved: bool,
}

/// Splits the support `{ρ ≥ support_cut · max ρ}` at every local minimum.
pub fn segment_lobes(rho: &RealField, support_cut: f64) -> Result<Vec<Lobe>> {
    let grid = rho.grid();
    let threshold = support_cut * rho.max();
    let v = rho.values();
    let first = v.iter().position(|&r| r >= threshold && r > 0.0);
    let last = v.iter().rposition(|&r| r >= threshold && r > 0.0);
    let (lo, hi) = match (first, last) {
        (Some(a), Some(b)) if b > a => (grid.x(a), grid.x(b)),
        _ => return Err(Error::Segmentation("density has no extended support".into())),
    };
    let mut cuts = vec![lo];
    cuts.extend(find_minima(rho, (lo, hi)));
    cuts.push(hi);
    let m = cuts.len();
    cuts.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (peak_position, peak_density) = local_maximum(rho, w[0], w[1]).unwrap_or((0.5 * (w[0] + w[1]), 0.0));
            Ok(Lobe {
                lower: w[0],
                upper: w[1],
                peak_position,
                peak_density,
                area: integrate(rho, w[0], w[1])?,
                resolved: i > 0 && i + 2 < m,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSegment {
    pub order: i32,
    pub lobe: Lobe,
}

/// Assigns principal diffraction orders to lobes: order `n` is the
/// strongest lobe whose maximum lies within half an order spacing of the
/// far-field position of `n`. A single slit yields one order-0 segment.
pub fn segment_peaks(rho: &RealField, geometry: &GratingGeometry, t: f64, support_cut: f64) -> Result<Vec<PeakSegment>> {
    let lobes = segment_lobes(rho, support_cut)?;
    if geometry.slit_count() < 2 || t <= 0.0 {
        let best = lobes.into_iter().max_by(|a, b| a.peak_density.total_cmp(&b.peak_density)).unwrap();
        return Ok(vec![PeakSegment { order: 0, lobe: best }]);
    }
    let half = PI * t / (geometry.mass * geometry.spacing);
    let (lo, hi) = (lobes[0].lower, lobes[lobes.len() - 1].upper);
    let reach = ((hi - lo).abs() / (2.0 * half)).ceil() as i32 + 1;
    let mut out = Vec::new();
    for n in -reach..=reach {
        let centre = geometry.principal_position(n, t);
        if centre < lo || centre > hi {
            continue;
        }
        let best = lobes
            .iter()
            .filter(|l| (l.peak_position - centre).abs() <= half)
            .max_by(|a, b| a.peak_density.total_cmp(&b.peak_density));
        if let Some(l) = best {
            if out.last().is_none_or(|p: &PeakSegment| p.lobe != *l) {
                out.push(PeakSegment { order: n, lobe: l.clone() });
            }
        }
    }
    Ok(out)
}

/// Probability between the minima adjacent to principal maximum `n` at the
/// snapshot nearest to `t`.
pub fn peak_intensity_area(store: &SnapshotStore, t: f64, n: i32, geometry: &GratingGeometry, support_cut: f64) -> Result<f64> {
    let k = store.index_at(t)?;
    let peaks = segment_peaks(&store.density(k), geometry, store.times()[k], support_cut)?;
    match peaks.iter().find(|p| p.order == n) {
        Some(p) if p.lobe.resolved => Ok(p.lobe.area),
        Some(_) => Err(Error::Segmentation(format!("order {n} is not bracketed by two minima at t = {t}"))),
        None => Err(Error::Segmentation(format!("order {n} not found at t = {t}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSegment {
    pub label: String,
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub initial_interval: (f64, f64),
    pub segments: Vec<BranchSegment>,
}

impl BranchRecord {
    pub fn labels(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.label.as_str()).collect()
    }
}

fn bisect_threshold(store: &SnapshotStore, options: &IntegrationOptions, level: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    // Invariant: x_final(lo) <= level < x_final(hi).
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if final_state(store, mid, options)?.0 > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans the ensemble in initial-position order and splits every requested
/// initial interval wherever the final domain changes. Split points are
/// refined by bisection to `tol`. Intervals ending in a single domain are
/// omitted.
pub fn detect_branching(
    store: &SnapshotStore,
    ens: &TrajectoryEnsemble,
    domains: &[Domain],
    intervals: &[(f64, f64)],
    tol: f64,
) -> Result<Vec<BranchRecord>> {
    validate_domains(domains)?;
    let options = IntegrationOptions { until: Some(ens.times().len().saturating_sub(1)), ..Default::default() };
    let mut records = Vec::new();
    for &(lo, hi) in intervals {
        let members: Vec<&Trajectory> =
            ens.trajectories().iter().filter(|t| t.x_init() >= lo && t.x_init() <= hi).collect();
        if members.is_empty() {
            continue;
        }
        let labels = members.iter().map(|t| domain_index(domains, t.x_final())).collect::<Result<Vec<_>>>()?;
        if labels.windows(2).all(|w| w[0] == w[1]) {
            continue;
        }
        let mut segments = Vec::new();
        let mut start = lo;
        for k in 0..labels.len() - 1 {
            let (p, q) = (labels[k], labels[k + 1]);
            if p == q {
                continue;
            }
            if q < p {
                return Err(Error::Classification(format!(
                    "final domains out of order between x(0) = {} and {}",
                    members[k].x_init(),
                    members[k + 1].x_init()
                )));
            }
            let split = bisect_threshold(store, &options, domains[p].b, members[k].x_init(), members[k + 1].x_init(), tol)?;
            segments.push(BranchSegment { label: domains[p].label.clone(), x_lo: start, x_hi: split });
            start = split;
        }
        segments.push(BranchSegment { label: domains[*labels.last().unwrap()].label.clone(), x_lo: start, x_hi: hi });
        records.push(BranchRecord { initial_interval: (lo, hi), segments });
    }
    Ok(records)
}

/// Initial interval whose trajectories end inside `[a, b]`, with ends
/// refined by bisection between neighbouring ensemble members.
pub fn preimage(store: &SnapshotStore, ens: &TrajectoryEnsemble, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let options = IntegrationOptions { until: Some(ens.times().len().saturating_sub(1)), ..Default::default() };
    let finals = ens.final_positions();
    let x0 = ens.x_inits();
    let first = finals.iter().position(|&x| x >= a);
    let last = finals.iter().rposition(|&x| x <= b);
    match (first, last) {
        (Some(i), Some(j)) if i <= j => {
            let lower = if i == 0 { x0[0] } else { bisect_threshold(store, &options, a, x0[i - 1], x0[i], tol)? };
            let upper = if j + 1 == x0.len() { x0[j] } else { bisect_threshold(store, &options, b, x0[j], x0[j + 1], tol)? };
            Ok((lower, upper))
        }
        _ => Err(Error::Resolution(format!("no ensemble member ends inside [{a}, {b}]; sample more densely"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerSlitMatrix {
    pub peak_labels: Vec<String>,
    /// Initial interval feeding each peak.
    pub peak_preimages: Vec<(f64, f64)>,
    pub slit_totals: Vec<f64>,
    /// `matrix[slit][peak]`.
    pub matrix: Vec<Vec<f64>>,
}

/// Probability each slit contributes to each peak domain at the ensemble's
/// final time.
pub fn per_slit_contribution(
    store: &SnapshotStore,
    ens: &TrajectoryEnsemble,
    slit_intervals: &[(f64, f64)],
    peaks: &[Domain],
    psi0: &WaveFunction,
    tol: f64,
) -> Result<PerSlitMatrix> {
    validate_domains(peaks)?;
    let rho0 = density(psi0);
    let preimages = peaks.iter().map(|d| preimage(store, ens, d.a, d.b, tol)).collect::<Result<Vec<_>>>()?;
    let slit_totals = slit_intervals.iter().map(|&(a, b)| integrate(&rho0, a, b)).collect::<Result<Vec<_>>>()?;
    let matrix = slit_intervals
        .iter()
        .map(|&(sa, sb)| {
            preimages
                .iter()
                .map(|&(pa, pb)| {
                    let (lo, hi) = (sa.max(pa), sb.min(pb));
                    if lo < hi {
                        integrate(&rho0, lo, hi)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PerSlitMatrix {
        peak_labels: peaks.iter().map(|d| d.label.clone()).collect(),
        peak_preimages: preimages,
        slit_totals,
        matrix,
    })
}

/// Normalized momentum density `|ψ̃(k)|²` on an ascending wave-number grid.
/// Free evolution maps it onto the position density at large times via
/// `x = k t / m`.
pub fn momentum_density(psi: &WaveFunction) -> Result<RealField> {
    let grid = psi.grid();
    let n = grid.len();
    let dk = grid.dk();
    let k_grid = Grid1D::new(-(n as f64 / 2.0) * dk, (n as f64 / 2.0) * dk, n)?;
    let spectral = Spectral::new(grid);
    let mut buf: Vec<Complex64> = psi.values().to_vec();
    spectral.forward(&mut buf);
    let mut values: Vec<f64> = (0..n).map(|j| buf[(j + n / 2) % n].norm_sqr()).collect();
    let total: f64 = values.iter().sum::<f64>() * dk;
    for v in &mut values {
        *v /= total;
    }
    RealField::new(k_grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::{propagate, PropagationConfig};
    use crate::state::{gaussian_packet, superpose, GaussianSpec};
    use crate::trajectories::integrate_trajectories;
    use approx::assert_abs_diff_eq;

    fn free_store() -> SnapshotStore {
        let g = Grid1D::new(-40.0, 40.0, 2048).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(-10.0, 2.0, 1.0), &g).unwrap();
        propagate(&psi, &RealField::zeros(g), &PropagationConfig::new(1e-2, 200, 2).unwrap()).unwrap()
    }

    #[test]
    fn classification() {
        let times = vec![0.0, 1.0];
        let domains = vec![
            Domain::new("R", f64::NEG_INFINITY, -2.0).unwrap(),
            Domain::new("I", -2.0, 2.0).unwrap(),
            Domain::new("T", 2.0, f64::INFINITY).unwrap(),
        ];
        let t = |x: f64| Trajectory::new(times.clone(), vec![-5.0, x]).unwrap();
        assert_eq!(classify_final(&t(10.0), &domains).unwrap(), "T");
        assert_eq!(classify_final(&t(0.0), &domains).unwrap(), "I");
        let gap = vec![Domain::new("A", 0.0, 1.0).unwrap(), Domain::new("B", 2.0, 3.0).unwrap()];
        assert!(matches!(classify_final(&t(1.5), &gap), Err(Error::Classification(_))));
        let overlapping = vec![Domain::new("A", 0.0, 2.0).unwrap(), Domain::new("B", 1.0, 3.0).unwrap()];
        assert!(classify_final(&t(0.5), &overlapping).is_err());
    }

    #[test]
    fn separatrix_of_uniform_flow() {
        // The free packet translates with its centroid velocity p0 = 2 and
        // spreads about it, so x(2) > 0 flips at a known initial position.
        let store = free_store();
        let spread = (1.0f64 + 1.0).sqrt();
        let expected = -10.0 + (0.0 - (-10.0 + 4.0)) / spread;
        let sep = find_separatrix(&store, |x, _| x > 0.0, (-12.0, -5.0), &SeparatrixOptions::default()).unwrap();
        assert!((sep.x_init - expected).abs() <= 1e-3, "{} {}", sep.x_init, expected);
        assert_eq!(sep.bisection_probes, (7.0f64 / 1e-4).log2().ceil() as usize);
        assert!(sep.bracket.1 - sep.bracket.0 <= 1e-4);
    }

    #[test]
    fn separatrix_errors() {
        let store = free_store();
        let opts = SeparatrixOptions::default();
        assert!(matches!(find_separatrix(&store, |x, _| x > 100.0, (-12.0, -8.0), &opts), Err(Error::Bracket(_))));
        let band = |x: f64, _| x > 0.0 || (x > -6.0 && x < -5.0);
        assert!(matches!(find_separatrix(&store, band, (-14.0, -5.0), &opts), Err(Error::BranchingSuspected(_))));
    }

    #[test]
    fn whole_state_tube() {
        let store = free_store();
        let psi0 = store.state(0);
        let (lo, hi) = crate::trajectories::effective_support(psi0, 1e-8).unwrap();
        let tube = ProbabilityTube::from_initial(&store, lo, hi, &IntegrationOptions::default()).unwrap();
        for p in tube_probability(&tube, &store).unwrap() {
            assert_abs_diff_eq!(p, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn moving_tube_balances() {
        let store = free_store();
        let tube = ProbabilityTube::from_initial(&store, -10.5, -9.0, &IntegrationOptions::default()).unwrap();
        let series = tube_probability(&tube, &store).unwrap();
        let stats = ConservationStats::from_series(&series);
        assert!(stats.max_relative_deviation <= 1e-3);
        let residual = flux_balance(&tube.domain_series(), &store).unwrap();
        let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst <= 1e-2 * series[0] / store.t_final(), "{worst}");
    }

    #[test]
    fn empty_static_domain_has_no_flux() {
        let store = free_store();
        let domain = DomainSeries::fixed(&store, 30.0, 35.0).unwrap();
        assert!(flux_balance(&domain, &store).unwrap().iter().all(|r| r.abs() <= 1e-8));
    }

    #[test]
    fn fraunhofer_orders() {
        let (lo, hi) = fraunhofer_boundary(1, 10.0, 5, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(lo, 8.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 12.0 * PI, epsilon = 1e-12);
        let (lo, hi) = fraunhofer_boundary(-1, 10.0, 5, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(lo, -12.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, -8.0 * PI, epsilon = 1e-12);
        let (lo, hi) = fraunhofer_boundary(0, 10.0, 5, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(lo, -2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 2.0 * PI, epsilon = 1e-12);
        assert_eq!(fraunhofer_boundary(3, 0.0, 5, 2.0, 1.0).unwrap(), (0.0, 0.0));
        assert!(fraunhofer_boundary(1, 1.0, 1, 2.0, 1.0).is_err());
        assert!(fraunhofer_boundary(1, 1.0, 5, 0.0, 1.0).is_err());
    }

    #[test]
    fn minima_examples() {
        let g = Grid1D::new(-20.0, 20.0, 1024).unwrap();
        let gauss = RealField::from_fn(g, |x| (-x * x).exp()).unwrap();
        assert!(find_minima(&gauss, (-20.0, 20.0)).is_empty());

        let g = Grid1D::new(0.0, 2.0 * PI, 256).unwrap();
        let cos2 = RealField::from_fn(g, |x| x.cos().powi(2)).unwrap();
        let minima = find_minima(&cos2, (0.0, 2.0 * PI));
        assert_eq!(minima.len(), 2);
        assert!((minima[0] - PI / 2.0).abs() <= g.dx());
        assert!((minima[1] - 1.5 * PI).abs() <= g.dx());

        let g = Grid1D::new(0.0, 8.0, 8).unwrap();
        let plateau = RealField::new(g, vec![5.0, 3.0, 1.0, 1.0, 1.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(find_minima(&plateau, (0.0, 8.0)), vec![3.0]);
    }

    #[test]
    fn parabolic_refinement_is_exact_for_parabolas() {
        let g = Grid1D::new(-4.0, 4.0, 64).unwrap();
        let f = RealField::from_fn(g, |x| (x - 0.37).powi(2) + 1.0).unwrap();
        let minima = find_minima(&f, (-3.0, 3.0));
        assert_eq!(minima.len(), 1);
        assert_abs_diff_eq!(minima[0], 0.37, epsilon = 1e-10);
    }

    #[test]
    fn single_slit_is_one_peak() {
        let g = Grid1D::new(-64.0, 64.0, 2048).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 0.0, 0.5), &g).unwrap();
        let store = propagate(&psi, &RealField::zeros(g), &PropagationConfig::new(1e-2, 300, 100).unwrap()).unwrap();
        let geom = GratingGeometry { slits: vec![0.0], spacing: 2.0, mass: 1.0 };
        let peaks = segment_peaks(&store.density(store.last_index()), &geom, store.t_final(), 1e-8).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].order, 0);
        assert!(peak_intensity_area(&store, store.t_final(), 0, &geom, 1e-8).is_err());
    }

    #[test]
    fn lobes_partition_the_support() {
        let g = Grid1D::new(-30.0, 30.0, 2048).unwrap();
        let psi = superpose(&[GaussianSpec::new(-1.0, 0.0, 0.3), GaussianSpec::new(1.0, 0.0, 0.3)], &g).unwrap();
        let store = propagate(&psi, &RealField::zeros(g), &PropagationConfig::new(1e-2, 200, 100).unwrap()).unwrap();
        let rho = store.density(store.last_index());
        let lobes = segment_lobes(&rho, 1e-8).unwrap();
        assert!(lobes.len() >= 3);
        let (lo, hi) = (lobes[0].lower, lobes[lobes.len() - 1].upper);
        let tails = integrate(&rho, g.x_min(), lo).unwrap() + integrate(&rho, hi, g.x_max()).unwrap();
        let total: f64 = lobes.iter().map(|l| l.area).sum::<f64>() + tails;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn branching_on_synthetic_ensembles() {
        let store = free_store();
        let xs: Vec<f64> = (0..41).map(|k| -13.0 + 0.15 * k as f64).collect();
        let ens = integrate_trajectories(&store, &xs).unwrap();
        let domains = vec![
            Domain::new("left", f64::NEG_INFINITY, -4.0).unwrap(),
            Domain::new("right", -4.0, f64::INFINITY).unwrap(),
        ];
        let records = detect_branching(&store, &ens, &domains, &[(-13.0, -7.0)], 1e-3).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].labels(), vec!["left", "right"]);
        let seg = &records[0].segments;
        assert_eq!(seg[0].x_lo, -13.0);
        assert_eq!(seg[1].x_hi, -7.0);
        assert_eq!(seg[0].x_hi, seg[1].x_lo);
        let spread = 2f64.sqrt();
        assert!((seg[0].x_hi - (-10.0 + 2.0 / spread)).abs() <= 2e-3);

        let uniform = vec![Domain::new("all", f64::NEG_INFINITY, f64::INFINITY).unwrap()];
        assert!(detect_branching(&store, &ens, &uniform, &[(-13.0, -7.0)], 1e-3).unwrap().is_empty());
    }

    #[test]
    fn per_slit_partition_is_complete() {
        let store = free_store();
        let psi0 = store.state(0);
        let xs: Vec<f64> = (0..101).map(|k| -14.0 + 0.1 * k as f64).collect();
        let ens = integrate_trajectories(&store, &xs).unwrap();
        let slits = vec![(-40.0, -10.0), (-10.0, 40.0)];
        let peaks = vec![
            Domain::new("a", f64::NEG_INFINITY, -3.0).unwrap(),
            Domain::new("b", -3.0, 1.0).unwrap(),
            Domain::new("c", 1.0, f64::INFINITY).unwrap(),
        ];
        let m = per_slit_contribution(&store, &ens, &slits, &peaks, psi0, 1e-4).unwrap();
        for (row, total) in m.matrix.iter().zip(&m.slit_totals) {
            assert!((row.iter().sum::<f64>() - total).abs() <= 1e-3);
        }
        let far = vec![Domain::new("far", 35.0, 36.0).unwrap()];
        assert!(matches!(per_slit_contribution(&store, &ens, &slits, &far, psi0, 1e-4), Err(Error::Resolution(_))));
    }

    #[test]
    fn momentum_density_of_boosted_packet() {
        let g = Grid1D::new(-40.0, 40.0, 1024).unwrap();
        let psi = gaussian_packet(&GaussianSpec::new(0.0, 3.0, 1.0), &g).unwrap();
        let pk = momentum_density(&psi).unwrap();
        assert_abs_diff_eq!(pk.integrate_all(), 1.0, epsilon = 1e-12);
        let peak = pk.grid().x(pk.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0);
        assert!((peak - 3.0).abs() <= pk.grid().dx());
    }
}
