//! Run configuration: scenario presets with field-by-field overrides read
//! from a TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::potential::{PotentialKind, PotentialSpec};
use crate::propagator::PropagationConfig;
use crate::state::GaussianSpec;
use crate::trajectories::{SamplingScheme, DEFAULT_SUBSTEPS, DEFAULT_SUPPORT_CUT};
use crate::tubes::{Domain, DEFAULT_BRANCH_TOL, DEFAULT_SEPARATRIX_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Tunnel,
    Grating,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub count: usize,
    pub scheme: SamplingScheme,
    pub support_cut: f64,
    pub substeps: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { count: 200, scheme: SamplingScheme::Even, support_cut: DEFAULT_SUPPORT_CUT, substeps: DEFAULT_SUBSTEPS }
    }
}

/// Bisection search for the trajectory separating arrivals in `target`
/// from the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixConfig {
    pub bracket: (f64, f64),
    pub tol: f64,
    pub target: String,
    /// Also require a non-negative final velocity.
    pub require_forward: bool,
}

/// The asymptotic regime starts once the probability in `domain` first
/// drops to `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConfig {
    pub domain: String,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingConfig {
    pub spacing: f64,
    /// Times at which peaks are segmented and tubes built.
    pub analysis_times: Vec<f64>,
    pub orders: Vec<i32>,
    /// Time at which branching and per-slit contributions are evaluated.
    pub branch_time: f64,
    pub swarm_width: f64,
    pub swarm_count: usize,
    /// Relative density defining the support searched for minima.
    pub pattern_cut: f64,
    pub branch_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub export_snapshots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub packets: Vec<GaussianSpec>,
    pub propagation: PropagationConfig,
    pub trajectories: TrajectoryConfig,
    pub separatrix: Option<SeparatrixConfig>,
    pub domains: Vec<Domain>,
    pub asymptotic: Option<AsymptoticConfig>,
    pub grating: Option<GratingConfig>,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Barrier-tunneling preset: three-packet superposition hitting a
    /// smooth square barrier of height 150 between x = ±2.
    pub fn tunnel() -> Self {
        let inf = f64::INFINITY;
        Self {
            scenario: Scenario::Tunnel,
            grid: GridConfig { x_min: -40.0, x_max: 60.0, n_points: 8192 },
            potential: PotentialSpec {
                kind: PotentialKind::TanhBarrier,
                v0: 150.0,
                alpha: 10.0,
                x_minus: -2.0,
                x_plus: 2.0,
            },
            packets: vec![
                GaussianSpec::new(-10.0, 10.0, 0.2).with_weight(1.0),
                GaussianSpec::new(-12.0, 20.0, 1.6).with_weight(0.75),
                GaussianSpec::new(-9.0, 15.0, 0.8).with_weight(0.5),
            ],
            propagation: PropagationConfig { dt: 1.5e-4, n_steps: 10_000, snapshot_stride: 20, mass: 1.0 },
            trajectories: TrajectoryConfig::default(),
            separatrix: Some(SeparatrixConfig {
                bracket: (-12.5, -8.5),
                tol: DEFAULT_SEPARATRIX_TOL,
                target: "T".into(),
                require_forward: true,
            }),
            domains: vec![
                Domain { label: "T".into(), a: 2.0, b: inf },
                Domain { label: "R".into(), a: -inf, b: -2.0 },
                Domain { label: "I".into(), a: -2.0, b: 2.0 },
            ],
            asymptotic: Some(AsymptoticConfig { domain: "I".into(), threshold: 5e-3 }),
            grating: None,
            output: OutputConfig { dir: PathBuf::from("out"), export_snapshots: false },
        }
    }

    /// Five-slit grating preset: unit-weight packets of width 0.2 centred
    /// at x = -4, -2, 0, 2, 4, propagated freely to t = 20.
    pub fn grating() -> Self {
        Self {
            scenario: Scenario::Grating,
            grid: GridConfig { x_min: -256.0, x_max: 256.0, n_points: 16384 },
            potential: PotentialSpec::free(),
            packets: (0..5).map(|i| GaussianSpec::new(-4.0 + 2.0 * i as f64, 0.0, 0.2)).collect(),
            propagation: PropagationConfig { dt: 1e-3, n_steps: 20_000, snapshot_stride: 20, mass: 1.0 },
            trajectories: TrajectoryConfig::default(),
            separatrix: None,
            domains: Vec::new(),
            asymptotic: None,
            grating: Some(GratingConfig {
                spacing: 2.0,
                analysis_times: vec![10.0, 20.0],
                orders: vec![0, 1],
                branch_time: 10.0,
                swarm_width: 0.030,
                swarm_count: 31,
                pattern_cut: 1e-8,
                branch_tol: DEFAULT_BRANCH_TOL,
            }),
            output: OutputConfig { dir: PathBuf::from("out"), export_snapshots: false },
        }
    }

    pub fn preset(scenario: Scenario) -> Option<Self> {
        match scenario {
            Scenario::Tunnel => Some(Self::tunnel()),
            Scenario::Grating => Some(Self::grating()),
            Scenario::Custom => None,
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n_points)
            .map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.potential.validate()?;
        if self.packets.is_empty() {
            return Err(Error::Config("at least one packet is required".into()));
        }
        for p in &self.packets {
            p.validate()?;
        }
        self.propagation.validate()?;
        let tr = &self.trajectories;
        if tr.count < 2 {
            return Err(Error::Config("trajectories.count must be at least 2".into()));
        }
        if !(tr.support_cut > 0.0 && tr.support_cut < 1.0) {
            return Err(Error::Config("trajectories.support_cut must lie in (0, 1)".into()));
        }
        if tr.substeps == 0 {
            return Err(Error::Config("trajectories.substeps must be at least 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.domains {
            if d.a.is_nan() || d.b.is_nan() || d.a > d.b {
                return Err(Error::Config(format!("domain '{}' has invalid bounds", d.label)));
            }
            if !seen.insert(d.label.as_str()) {
                return Err(Error::Config(format!("duplicate domain label '{}'", d.label)));
            }
        }
        if !self.domains.is_empty() {
            crate::tubes::validate_domains(&self.sorted_domains()).map_err(|e| Error::Config(e.to_string()))?;
        }
        let has = |label: &str| self.domains.iter().any(|d| d.label == label);
        if let Some(s) = &self.separatrix {
            if !(s.bracket.0 < s.bracket.1) || !(s.tol > 0.0) {
                return Err(Error::Config("separatrix needs bracket lo < hi and tol > 0".into()));
            }
            if !has(&s.target) {
                return Err(Error::Config(format!("separatrix target '{}' is not a domain", s.target)));
            }
        }
        if let Some(a) = &self.asymptotic {
            if !has(&a.domain) {
                return Err(Error::Config(format!("asymptotic domain '{}' is not a domain", a.domain)));
            }
        }
        match (&self.grating, self.scenario) {
            (None, Scenario::Grating) => return Err(Error::Config("grating scenario needs a [grating] section".into())),
            (Some(g), _) => {
                if !(g.spacing > 0.0) || g.analysis_times.is_empty() || g.swarm_count < 2 || !(g.swarm_width > 0.0) {
                    return Err(Error::Config("grating: spacing, analysis_times or swarm settings invalid".into()));
                }
                if !(g.pattern_cut > 0.0 && g.pattern_cut < 1.0) || !(g.branch_tol > 0.0) {
                    return Err(Error::Config("grating: pattern_cut must lie in (0, 1) and branch_tol be positive".into()));
                }
                let t_final = self.propagation.t_final();
                if g.analysis_times.iter().chain([&g.branch_time]).any(|&t| t <= 0.0 || t > t_final + 1e-9) {
                    return Err(Error::Config(format!("grating times must lie in (0, {t_final}]")));
                }
            }
            _ => {}
        }
        if self.scenario != Scenario::Grating && self.domains.is_empty() {
            return Err(Error::Config("at least one analysis domain is required".into()));
        }
        Ok(())
    }

    /// Domains ordered by their left edge.
    pub fn sorted_domains(&self) -> Vec<Domain> {
        let mut d = self.domains.clone();
        d.sort_by(|x, y| x.a.total_cmp(&y.a));
        d
    }

    /// Reads a TOML document. Sections present in the file override the
    /// preset of its scenario key by key; `custom` runs have no preset.
    pub fn from_toml_str(text: &str, scenario: Option<Scenario>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let scenario = match (raw.scenario, scenario) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config declares scenario {a:?} but {b:?} was requested")))
            }
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => return Err(Error::Config("scenario not specified".into())),
        };
        let cfg = raw.apply(scenario)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, scenario: Option<Scenario>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, scenario)
    }
}

macro_rules! take {
    ($target:expr, $raw:expr, $($field:ident),+) => {
        $( if let Some(v) = $raw.$field { $target.$field = v; } )+
    };
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    grid: Option<RawGrid>,
    potential: Option<RawPotential>,
    packets: Option<Vec<GaussianSpec>>,
    propagation: Option<RawPropagation>,
    trajectories: Option<RawTrajectories>,
    separatrix: Option<RawSeparatrix>,
    domains: Option<Vec<Domain>>,
    asymptotic: Option<RawAsymptotic>,
    grating: Option<RawGrating>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x_min: Option<f64>,
    x_max: Option<f64>,
    n_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Option<PotentialKind>,
    v0: Option<f64>,
    alpha: Option<f64>,
    x_minus: Option<f64>,
    x_plus: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPropagation {
    dt: Option<f64>,
    n_steps: Option<usize>,
    snapshot_stride: Option<usize>,
    mass: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectories {
    count: Option<usize>,
    scheme: Option<SamplingScheme>,
    support_cut: Option<f64>,
    substeps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeparatrix {
    enabled: Option<bool>,
    bracket: Option<(f64, f64)>,
    tol: Option<f64>,
    target: Option<String>,
    require_forward: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAsymptotic {
    enabled: Option<bool>,
    domain: Option<String>,
    threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrating {
    spacing: Option<f64>,
    analysis_times: Option<Vec<f64>>,
    orders: Option<Vec<i32>>,
    branch_time: Option<f64>,
    swarm_width: Option<f64>,
    swarm_count: Option<usize>,
    pattern_cut: Option<f64>,
    branch_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    export_snapshots: Option<bool>,
}

fn missing(section: &str, field: &str) -> Error {
    Error::Config(format!("{section}.{field} is required"))
}

impl RawConfig {
    fn apply(self, scenario: Scenario) -> Result<RunConfig> {
        let mut cfg = match RunConfig::preset(scenario) {
            Some(preset) => preset,
            None => {
                let grid = self.grid.as_ref().ok_or_else(|| missing("grid", "x_min"))?;
                let prop = self.propagation.as_ref().ok_or_else(|| missing("propagation", "dt"))?;
                let potential = self.potential.as_ref().ok_or_else(|| missing("potential", "kind"))?;
                RunConfig {
                    scenario,
                    grid: GridConfig {
                        x_min: grid.x_min.ok_or_else(|| missing("grid", "x_min"))?,
                        x_max: grid.x_max.ok_or_else(|| missing("grid", "x_max"))?,
                        n_points: grid.n_points.ok_or_else(|| missing("grid", "n_points"))?,
                    },
                    potential: PotentialSpec {
                        kind: potential.kind.ok_or_else(|| missing("potential", "kind"))?,
                        ..PotentialSpec::free()
                    },
                    packets: Vec::new(),
                    propagation: PropagationConfig {
                        dt: prop.dt.ok_or_else(|| missing("propagation", "dt"))?,
                        n_steps: prop.n_steps.ok_or_else(|| missing("propagation", "n_steps"))?,
                        snapshot_stride: prop.snapshot_stride.ok_or_else(|| missing("propagation", "snapshot_stride"))?,
                        mass: 1.0,
                    },
                    trajectories: TrajectoryConfig::default(),
                    separatrix: None,
                    domains: Vec::new(),
                    asymptotic: None,
                    grating: None,
                    output: OutputConfig { dir: PathBuf::from("out"), export_snapshots: false },
                }
            }
        };
        if let Some(g) = self.grid {
            take!(cfg.grid, g, x_min, x_max, n_points);
        }
        if let Some(p) = self.potential {
            take!(cfg.potential, p, kind, v0, alpha, x_minus, x_plus);
        }
        if let Some(p) = self.packets {
            cfg.packets = p;
        }
        if let Some(p) = self.propagation {
            take!(cfg.propagation, p, dt, n_steps, snapshot_stride, mass);
        }
        if let Some(t) = self.trajectories {
            take!(cfg.trajectories, t, count, scheme, support_cut, substeps);
        }
        if let Some(s) = self.separatrix {
            if s.enabled == Some(false) {
                cfg.separatrix = None;
            } else {
                let mut sep = match cfg.separatrix.take() {
                    Some(existing) => existing,
                    None => SeparatrixConfig {
                        bracket: s.bracket.ok_or_else(|| missing("separatrix", "bracket"))?,
                        tol: DEFAULT_SEPARATRIX_TOL,
                        target: s.target.clone().ok_or_else(|| missing("separatrix", "target"))?,
                        require_forward: false,
                    },
                };
                take!(sep, s, bracket, tol, target, require_forward);
                cfg.separatrix = Some(sep);
            }
        }
        if let Some(d) = self.domains {
            cfg.domains = d;
        }
        if let Some(a) = self.asymptotic {
            if a.enabled == Some(false) {
                cfg.asymptotic = None;
            } else {
                let mut asym = match cfg.asymptotic.take() {
                    Some(existing) => existing,
                    None => AsymptoticConfig {
                        domain: a.domain.clone().ok_or_else(|| missing("asymptotic", "domain"))?,
                        threshold: a.threshold.ok_or_else(|| missing("asymptotic", "threshold"))?,
                    },
                };
                take!(asym, a, domain, threshold);
                cfg.asymptotic = Some(asym);
            }
        }
        if let Some(g) = self.grating {
            let mut gr = cfg.grating.take().unwrap_or(GratingConfig {
                spacing: 0.0,
                analysis_times: Vec::new(),
                orders: vec![0, 1],
                branch_time: 0.0,
                swarm_width: 0.030,
                swarm_count: 31,
                pattern_cut: 1e-8,
                branch_tol: DEFAULT_BRANCH_TOL,
            });
            take!(gr, g, spacing, analysis_times, orders, branch_time, swarm_width, swarm_count, pattern_cut, branch_tol);
            cfg.grating = Some(gr);
        }
        if let Some(o) = self.output {
            take!(cfg.output, o, dir, export_snapshots);
        }
        Ok(cfg)
    }
}
