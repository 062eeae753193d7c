use crate::error::{Error, Result};
use crate::experiments::config::{RunConfig, Scenario};
use crate::experiments::report::*;
use crate::grid::{integrate, quantile, Grid1D, RealField};
use crate::potential::sample_potential;
use crate::propagator::{propagate, SnapshotStore};
use crate::state::{density, superpose, WaveFunction};
use crate::trajectories::{
    born_rule_pairs, born_rule_residual, check_noncrossing, effective_support, integrate_trajectories_with,
    sample_initial_conditions, IntegrationOptions, TrajectoryEnsemble,
};
use crate::tubes::{
    classify_final, detect_branching, find_separatrix, flux_balance, fraunhofer_boundary, momentum_density,
    per_slit_contribution, preimage, segment_peaks, tube_probability, ConservationStats, Domain, DomainSeries,
    GratingGeometry, PeakSegment, ProbabilityTube, SeparatrixOptions,
};

/// Born-rule residual tolerance reported alongside the measured maximum.
pub const BORN_TOLERANCE: f64 = 2e-2;
const PREIMAGE_TOL: f64 = 1e-4;

/// A propagated run: configuration, initial state and snapshot record.
#[derive(Debug)]
pub struct Simulation {
    pub config: RunConfig,
    pub grid: Grid1D,
    pub initial: WaveFunction,
    pub potential: RealField,
    pub store: SnapshotStore,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let initial = superpose(&config.packets, &grid)?;
        let potential = sample_potential(&config.potential, &grid)?;
        let store = propagate(&initial, &potential, &config.propagation)?;
        Ok(Self { config: config.clone(), grid, initial, potential, store })
    }

    fn options(&self) -> IntegrationOptions {
        IntegrationOptions { substeps: self.config.trajectories.substeps, until: None }
    }

    fn options_until(&self, k: usize) -> IntegrationOptions {
        IntegrationOptions { until: Some(k), ..self.options() }
    }

    fn clipped(&self, a: f64, b: f64) -> (f64, f64) {
        (a.max(self.grid.x_min()), b.min(self.grid.x_max()))
    }

    fn probability_at(&self, k: usize, a: f64, b: f64) -> Result<f64> {
        let (a, b) = self.clipped(a, b);
        if a >= b {
            return Ok(0.0);
        }
        integrate(&self.store.density(k), a, b)
    }
}

/// A finished run: the report plus the data behind the exported files.
#[derive(Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub ensemble: TrajectoryEnsemble,
    pub simulation: Simulation,
}

fn require(cfg: &RunConfig, scenario: Scenario) -> Result<()> {
    if cfg.scenario != scenario {
        return Err(Error::Config(format!("expected a {scenario:?} configuration, got {:?}", cfg.scenario)));
    }
    Ok(())
}

pub fn run_tunneling(cfg: &RunConfig) -> Result<ExperimentReport> {
    require(cfg, Scenario::Tunnel)?;
    Ok(execute(cfg)?.report)
}

pub fn run_grating(cfg: &RunConfig) -> Result<ExperimentReport> {
    require(cfg, Scenario::Grating)?;
    Ok(execute(cfg)?.report)
}

pub fn run_custom(cfg: &RunConfig) -> Result<ExperimentReport> {
    require(cfg, Scenario::Custom)?;
    Ok(execute(cfg)?.report)
}

/// Propagates and analyses `cfg` according to its scenario.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let sim = Simulation::new(cfg)?;
    let (report, ensemble) = match cfg.scenario {
        Scenario::Grating => analyze_grating(&sim)?,
        Scenario::Tunnel | Scenario::Custom => analyze_domains(&sim)?,
    };
    Ok(RunOutput { report, ensemble, simulation: sim })
}

fn setup(sim: &Simulation) -> SetupSummary {
    let c = &sim.config;
    SetupSummary {
        grid: c.grid,
        potential: c.potential,
        packets: c.packets.clone(),
        propagation: c.propagation,
        trajectories: c.trajectories,
    }
}

fn diagnostics(store: &SnapshotStore) -> DiagnosticsSummary {
    let d = store.diagnostics();
    DiagnosticsSummary {
        snapshots: store.len(),
        initial_energy: d.initial_energy,
        max_norm_drift: d.max_norm_drift,
        max_relative_energy_drift: d.max_relative_energy_drift,
    }
}

fn ensemble(sim: &Simulation) -> Result<(TrajectoryEnsemble, (f64, f64))> {
    let tc = &sim.config.trajectories;
    let support = effective_support(&sim.initial, tc.support_cut)?;
    let x0 = sample_initial_conditions(&sim.initial, tc.count, tc.scheme, tc.support_cut)?;
    Ok((integrate_trajectories_with(&sim.store, &x0, &sim.options())?, support))
}

fn born_summary(sim: &Simulation, ens: &TrajectoryEnsemble) -> Result<BornSummary> {
    let dx = sim.grid.dx();
    let report = born_rule_residual(ens, &sim.store)?;
    let pairs = born_rule_pairs(ens, &sim.initial, dx, 10.0 * dx, 1e-3);
    let entries: Vec<f64> = pairs.iter().flat_map(|&p| report.residuals[p].iter().copied()).collect();
    let above = entries.iter().filter(|&&r| r > BORN_TOLERANCE).count();
    Ok(BornSummary {
        eligible_pairs: pairs.len(),
        max_residual: report.max_over(&pairs),
        tolerance: BORN_TOLERANCE,
        fraction_above_tolerance: if entries.is_empty() { 0.0 } else { above as f64 / entries.len() as f64 },
        resolution_warnings: report.warnings.len(),
    })
}

fn centred_rates(times: &[f64], values: &[f64]) -> Vec<f64> {
    (1..values.len().saturating_sub(1))
        .map(|k| (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1]))
        .collect()
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64).sqrt()
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn static_flux(sim: &Simulation, label: &str, a: f64, b: f64, values: &[f64]) -> Result<FluxSummary> {
    let (a, b) = sim.clipped(a, b);
    let residual = flux_balance(&DomainSeries::fixed(&sim.store, a, b)?, &sim.store)?;
    let rate = max_abs(&centred_rates(sim.store.times(), values));
    let rms_residual = rms(&residual);
    Ok(FluxSummary {
        label: label.to_string(),
        rms_residual,
        max_abs_rate: rate,
        relative: if rate > 0.0 { rms_residual / rate } else { rms_residual },
    })
}

fn tube_summary(sim: &Simulation, tube: &ProbabilityTube, final_probability: f64) -> Result<TubeSummary> {
    let probabilities = tube_probability(tube, &sim.store)?;
    let stats = ConservationStats::from_series(&probabilities);
    let flux = flux_balance(&tube.domain_series(), &sim.store)?;
    Ok(TubeSummary {
        initial_region: (tube.lower().x_init(), tube.upper().x_init()),
        closure_relative_error: (probabilities[0] - final_probability) / final_probability,
        probabilities,
        stats,
        final_domain_probability: final_probability,
        flux_rms: rms(&flux),
        flux_max_abs: max_abs(&flux),
    })
}

/// Fixed-domain analysis shared by the tunneling preset and custom runs.
pub fn analyze_domains(sim: &Simulation) -> Result<(ExperimentReport, TrajectoryEnsemble)> {
    let cfg = &sim.config;
    let store = &sim.store;
    let last = store.last_index();
    let mut domains = Vec::with_capacity(cfg.domains.len());
    for d in &cfg.domains {
        let (a, b) = sim.clipped(d.a, d.b);
        let values = (0..store.len()).map(|k| sim.probability_at(k, d.a, d.b)).collect::<Result<Vec<_>>>()?;
        domains.push(DomainProbabilities { label: d.label.clone(), a, b, values });
    }
    let series = |label: &str| domains.iter().find(|d| d.label == label).map(|d| d.values.as_slice());

    let asymptotic = cfg.asymptotic.as_ref().map(|a| {
        let values = series(&a.domain).expect("validated domain label");
        // The domain starts empty; the regime begins once it drains after its peak.
        let peak = values.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map_or(0, |(k, _)| k);
        let reached = values[peak..].iter().position(|&p| p <= a.threshold).map(|k| k + peak);
        let drift: Vec<LabelValue> = domains
            .iter()
            .map(|d| LabelValue {
                label: d.label.clone(),
                value: reached.map_or(f64::NAN, |k| {
                    d.values[k..].iter().map(|p| (p - d.values[last]).abs()).fold(0.0, f64::max)
                }),
            })
            .collect();
        AsymptoticSummary {
            domain: a.domain.clone(),
            threshold: a.threshold,
            reached_at: reached.map(|k| store.times()[k]),
            final_probabilities: domains.iter().map(|d| LabelValue { label: d.label.clone(), value: d.values[last] }).collect(),
            drift_after_reached: drift.into_iter().filter(|l: &LabelValue| l.value.is_finite()).collect(),
        }
    });

    let (ens, support) = ensemble(sim)?;
    let noncrossing = check_noncrossing(&ens);
    let sorted = cfg.sorted_domains();
    let labels: Vec<String> = ens
        .trajectories()
        .iter()
        .map(|t| classify_final(t, &sorted).unwrap_or_else(|_| "-".into()))
        .collect();
    let label_changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
    let branches = if labels.iter().any(|l| l == "-") {
        Vec::new()
    } else {
        let xs = ens.x_inits();
        detect_branching(store, &ens, &sorted, &[(xs[0], xs[xs.len() - 1])], crate::tubes::DEFAULT_BRANCH_TOL)?
    };

    let separatrix = match &cfg.separatrix {
        None => None,
        Some(sc) => {
            let target = sorted.iter().find(|d| d.label == sc.target).expect("validated target").clone();
            let forward = sc.require_forward;
            let predicate = move |x: f64, v: f64| target.contains(x) && (!forward || v >= 0.0);
            let opts = SeparatrixOptions { tol: sc.tol, integration: sim.options(), ..Default::default() };
            let sep = find_separatrix(store, &predicate, sc.bracket, &opts)?;
            let (xf, vf) = crate::tubes::final_state(store, sc.bracket.1, &sim.options())?;
            let tube = if predicate(xf, vf) {
                ProbabilityTube::from_initial(store, sep.x_init, support.1, &sim.options())?
            } else {
                ProbabilityTube::from_initial(store, support.0, sep.x_init, &sim.options())?
            };
            let final_probability = series(&sc.target).expect("validated target")[last];
            Some(SeparatrixSummary {
                target: sc.target.clone(),
                x_init: sep.x_init,
                bracket: sep.bracket,
                bisection_probes: sep.bisection_probes,
                tube: tube_summary(sim, &tube, final_probability)?,
            })
        }
    };

    let flux = domains
        .iter()
        .map(|d| static_flux(sim, &d.label, d.a, d.b, &d.values))
        .collect::<Result<Vec<_>>>()?;

    let report = ExperimentReport {
        setup: setup(sim),
        diagnostics: diagnostics(store),
        times: store.times().to_vec(),
        domains,
        asymptotic,
        ensemble: EnsembleSummary {
            count: ens.len(),
            support,
            min_gap: noncrossing.min_gap,
            violations: noncrossing.violations.len(),
            final_labels: labels,
            label_changes,
        },
        separatrix,
        flux,
        born_rule: born_summary(sim, &ens)?,
        branches,
        grating: None,
    };
    Ok((report, ens))
}

pub fn order_label(n: i32) -> String {
    if n > 0 {
        format!("+{n}")
    } else {
        n.to_string()
    }
}

fn geometry(sim: &Simulation) -> GratingGeometry {
    let g = sim.config.grating.as_ref().expect("grating section");
    GratingGeometry {
        slits: sim.config.packets.iter().map(|p| p.x0).collect(),
        spacing: g.spacing,
        mass: sim.config.propagation.mass,
    }
}

fn fraunhofer_estimate(sim: &Simulation, geom: &GratingGeometry, n: i32, k: usize) -> Result<FraunhoferEstimate> {
    let t = sim.store.times()[k];
    let (lower, upper) = fraunhofer_boundary(n, t, geom.slit_count(), geom.spacing, geom.mass)?;
    Ok(FraunhoferEstimate { order: n, lower, upper, probability: sim.probability_at(k, lower, upper)? })
}

/// Tube from the preimage of `[a, b]` at snapshot `k`.
fn peak_tube(sim: &Simulation, ens: &TrajectoryEnsemble, order: i32, k: usize, a: f64, b: f64) -> Result<PeakTube> {
    let trunc = ens.truncated(k)?;
    let (lo, hi) = preimage(&sim.store, &trunc, a, b, PREIMAGE_TOL)?;
    let tube = ProbabilityTube::from_initial(&sim.store, lo, hi, &sim.options_until(k))?;
    let series = tube_probability(&tube, &sim.store)?;
    let final_probability = sim.probability_at(k, a, b)?;
    Ok(PeakTube {
        order,
        initial_region: (lo, hi),
        final_region: (a, b),
        initial_probability: series[0],
        final_probability,
        closure_relative_error: (series[0] - final_probability) / final_probability,
        stats: ConservationStats::from_series(&series),
    })
}

fn principal(peaks: &[PeakSegment], n: i32) -> Option<&PeakSegment> {
    peaks.iter().find(|p| p.order == n && p.lobe.resolved)
}

/// Diffraction analysis for grating runs.
pub fn analyze_grating(sim: &Simulation) -> Result<(ExperimentReport, TrajectoryEnsemble)> {
    let cfg = &sim.config;
    let gc = cfg.grating.as_ref().ok_or_else(|| Error::Config("grating section missing".into()))?;
    let store = &sim.store;
    let last = store.last_index();
    let geom = geometry(sim);
    let (ens, support) = ensemble(sim)?;
    let noncrossing = check_noncrossing(&ens);

    // Far-field domains are only defined for a grating of two or more slits.
    let orders: &[i32] = if geom.slit_count() >= 2 { &gc.orders } else { &[] };
    let fraunhofer_series = orders
        .iter()
        .map(|&n| {
            let values = (0..store.len())
                .map(|k| fraunhofer_estimate(sim, &geom, n, k).map(|e| e.probability))
                .collect::<Result<Vec<_>>>()?;
            Ok(OrderSeries { order: n, values })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut patterns = Vec::new();
    let mut split_separatrices = Vec::new();
    for &t in &gc.analysis_times {
        let k = store.index_at(t)?;
        let rho = store.density(k);
        let peaks = segment_peaks(&rho, &geom, store.times()[k], gc.pattern_cut)?;
        let lobes = crate::tubes::segment_lobes(&rho, gc.pattern_cut)?;
        let resolved_total = lobes.iter().filter(|l| l.resolved).map(|l| l.area).sum();
        let fraunhofer = orders.iter().map(|&n| fraunhofer_estimate(sim, &geom, n, k)).collect::<Result<Vec<_>>>()?;
        let mut tubes = Vec::new();
        for &n in &gc.orders {
            if let Some(p) = principal(&peaks, n) {
                tubes.push(peak_tube(sim, &ens, n, k, p.lobe.lower, p.lobe.upper)?);
            }
        }
        if let Some(t0) = tubes.iter().find(|t| t.order == 0) {
            split_separatrices.push(SplitSeparatrix { t: store.times()[k], x_init: t0.initial_region.1 });
        }
        patterns.push(PatternSummary { t: store.times()[k], peaks, lobe_count: lobes.len(), resolved_total, fraunhofer, tubes });
    }

    // Far field: minima of the momentum density mapped onto the final
    // snapshot through the conserved cumulative probability.
    let momentum = momentum_density(store.state(last))?;
    let centre = geom.slits.iter().sum::<f64>() / geom.slit_count() as f64;
    let k_geom = GratingGeometry { slits: geom.slits.iter().map(|s| s - centre).collect(), ..geom.clone() };
    let k_peaks = segment_peaks(&momentum, &k_geom, geom.mass, gc.pattern_cut)?;
    let k_min = momentum.grid().x_min();
    let rho_last = store.density(last);
    let mut far_field = Vec::new();
    for &n in orders {
        let Some(p) = principal(&k_peaks, n) else { continue };
        let (ka, kb) = (p.lobe.lower, p.lobe.upper);
        let xa = quantile(&rho_last, integrate(&momentum, k_min, ka)?)?;
        let xb = quantile(&rho_last, integrate(&momentum, k_min, kb)?)?;
        let tube = peak_tube(sim, &ens, n, last, xa, xb)?;
        let fr = fraunhofer_estimate(sim, &geom, n, last)?;
        far_field.push(FarFieldOrder {
            order: n,
            k_region: (ka, kb),
            momentum_area: p.lobe.area,
            fraunhofer_deviation: (tube.initial_probability - fr.probability) / tube.initial_probability,
            fraunhofer_at_final: fr,
            tube,
        });
    }
    let early_tube_deficit = match patterns.first() {
        Some(first) => first
            .tubes
            .iter()
            .filter_map(|t| {
                far_field.iter().find(|f| f.order == t.order).map(|f| OrderValue {
                    order: t.order,
                    value: (f.tube.initial_probability - t.initial_probability) / f.tube.initial_probability,
                })
            })
            .collect(),
        None => Vec::new(),
    };

    let kb = store.index_at(gc.branch_time)?;
    let peaks_b = segment_peaks(&store.density(kb), &geom, store.times()[kb], gc.pattern_cut)?;
    let trunc = ens.truncated(kb)?;
    let branching = branching_summary(sim, &trunc, &peaks_b, kb)?;
    let resolved: Vec<&PeakSegment> = peaks_b.iter().filter(|p| p.lobe.resolved).collect();
    let per_slit = if resolved.is_empty() {
        None
    } else {
        let peak_domains = resolved
            .iter()
            .map(|p| Domain::new(order_label(p.order), p.lobe.lower, p.lobe.upper))
            .collect::<Result<Vec<_>>>()?;
        let slits = geom.slit_intervals(&sim.grid);
        Some(per_slit_contribution(store, &trunc, &slits, &peak_domains, &sim.initial, PREIMAGE_TOL)?)
    };

    let report = ExperimentReport {
        setup: setup(sim),
        diagnostics: diagnostics(store),
        times: store.times().to_vec(),
        domains: Vec::new(),
        asymptotic: None,
        ensemble: EnsembleSummary {
            count: ens.len(),
            support,
            min_gap: noncrossing.min_gap,
            violations: noncrossing.violations.len(),
            final_labels: Vec::new(),
            label_changes: 0,
        },
        separatrix: None,
        flux: Vec::new(),
        born_rule: born_summary(sim, &ens)?,
        branches: branching.as_ref().and_then(|b| b.record.clone()).into_iter().collect(),
        grating: Some(GratingSummary {
            geometry: geom,
            fraunhofer_series,
            patterns,
            far_field,
            early_tube_deficit,
            split_separatrices,
            branching,
            per_slit,
        }),
    };
    Ok((report, ens))
}

/// Launches a narrow swarm across the boundary between the order 0 and +1
/// basins, where basins split the line at midpoints between principal maxima.
fn branching_summary(
    sim: &Simulation,
    trunc: &TrajectoryEnsemble,
    peaks: &[PeakSegment],
    k: usize,
) -> Result<Option<BranchingSummary>> {
    let gc = sim.config.grating.as_ref().expect("grating section");
    let (Some(p0), Some(p1)) = (principal(peaks, 0), principal(peaks, 1)) else {
        return Ok(None);
    };
    let mut basins = Vec::with_capacity(peaks.len());
    for (i, p) in peaks.iter().enumerate() {
        let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (peaks[i - 1].lobe.peak_position + p.lobe.peak_position) };
        let hi = if i + 1 == peaks.len() {
            f64::INFINITY
        } else {
            0.5 * (p.lobe.peak_position + peaks[i + 1].lobe.peak_position)
        };
        basins.push(Domain::new(order_label(p.order), lo, hi)?);
    }
    let store = &sim.store;
    let mid = 0.5 * (p0.lobe.peak_position + p1.lobe.peak_position);
    let (separatrix, _) = preimage(store, trunc, mid, f64::INFINITY, PREIMAGE_TOL)?;
    let (_, central_upper_edge) = preimage(store, trunc, p0.lobe.lower, p0.lobe.upper, PREIMAGE_TOL)?;
    let half = 0.5 * gc.swarm_width;
    let swarm = (separatrix - half, separatrix + half);
    let n = gc.swarm_count;
    let xs: Vec<f64> = (0..n).map(|i| swarm.0 + gc.swarm_width * i as f64 / (n - 1) as f64).collect();
    let swarm_ens = integrate_trajectories_with(store, &xs, &sim.options_until(k))?;
    let labels = swarm_ens
        .trajectories()
        .iter()
        .map(|t| classify_final(t, &basins))
        .collect::<Result<Vec<_>>>()?;
    let record = detect_branching(store, &swarm_ens, &basins, &[swarm], gc.branch_tol)?.into_iter().next();
    let mut distinct = labels.clone();
    distinct.dedup();
    Ok(Some(BranchingSummary {
        t: store.times()[k],
        central_upper_edge,
        basin_separatrix: separatrix,
        swarm,
        labels: distinct,
        record,
    }))
}

/// Probability density of the initial state, exposed for reporting.
pub fn initial_density(sim: &Simulation) -> RealField {
    density(&sim.initial)
}
