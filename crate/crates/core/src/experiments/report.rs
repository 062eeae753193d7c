use serde::{Deserialize, Serialize};

use crate::experiments::config::{GridConfig, TrajectoryConfig};
use crate::potential::PotentialSpec;
use crate::propagator::PropagationConfig;
use crate::state::GaussianSpec;
use crate::tubes::{BranchRecord, ConservationStats, GratingGeometry, PeakSegment, PerSlitMatrix};

/// Everything a run computes, serialized to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub setup: SetupSummary,
    pub diagnostics: DiagnosticsSummary,
    pub times: Vec<f64>,
    pub domains: Vec<DomainProbabilities>,
    pub asymptotic: Option<AsymptoticSummary>,
    pub ensemble: EnsembleSummary,
    pub separatrix: Option<SeparatrixSummary>,
    pub flux: Vec<FluxSummary>,
    pub born_rule: BornSummary,
    pub branches: Vec<BranchRecord>,
    pub grating: Option<GratingSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub packets: Vec<GaussianSpec>,
    pub propagation: PropagationConfig,
    pub trajectories: TrajectoryConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub snapshots: usize,
    pub initial_energy: f64,
    pub max_norm_drift: f64,
    pub max_relative_energy_drift: f64,
}

/// Probability inside a fixed domain at every snapshot. Bounds are clipped
/// to the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainProbabilities {
    pub label: String,
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelValue {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub domain: String,
    pub threshold: f64,
    /// First snapshot time after the domain probability peaks at which it is
    /// at or below threshold.
    pub reached_at: Option<f64>,
    pub final_probabilities: Vec<LabelValue>,
    /// Largest `|P(t) − P(t_final)|` per domain once the regime is reached.
    pub drift_after_reached: Vec<LabelValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub count: usize,
    pub support: (f64, f64),
    pub min_gap: f64,
    pub violations: usize,
    /// Final domain of each trajectory, empty when no domains are defined.
    pub final_labels: Vec<String>,
    pub label_changes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSummary {
    pub initial_region: (f64, f64),
    pub probabilities: Vec<f64>,
    pub stats: ConservationStats,
    /// Probability of the target region computed directly from the final state.
    pub final_domain_probability: f64,
    /// `(P(0) − final_domain_probability) / final_domain_probability`.
    pub closure_relative_error: f64,
    pub flux_rms: f64,
    pub flux_max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixSummary {
    pub target: String,
    pub x_init: f64,
    pub bracket: (f64, f64),
    pub bisection_probes: usize,
    pub tube: TubeSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxSummary {
    pub label: String,
    pub rms_residual: f64,
    pub max_abs_rate: f64,
    /// `rms_residual / max_abs_rate`.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BornSummary {
    pub eligible_pairs: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub fraction_above_tolerance: f64,
    pub resolution_warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderValue {
    pub order: i32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderSeries {
    pub order: i32,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FraunhoferEstimate {
    pub order: i32,
    pub lower: f64,
    pub upper: f64,
    pub probability: f64,
}

/// Tube whose walls end on the edges of a final region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakTube {
    pub order: i32,
    pub initial_region: (f64, f64),
    pub final_region: (f64, f64),
    /// `∫ ρ0` over the initial region.
    pub initial_probability: f64,
    /// `∫ ρ` over the final region at the final time.
    pub final_probability: f64,
    pub closure_relative_error: f64,
    pub stats: ConservationStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub t: f64,
    pub peaks: Vec<PeakSegment>,
    pub lobe_count: usize,
    /// Sum of all lobe areas between adjacent minima.
    pub resolved_total: f64,
    pub fraunhofer: Vec<FraunhoferEstimate>,
    pub tubes: Vec<PeakTube>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarFieldOrder {
    pub order: i32,
    /// Momentum-space minima around the principal maximum.
    pub k_region: (f64, f64),
    pub momentum_area: f64,
    pub tube: PeakTube,
    pub fraunhofer_at_final: FraunhoferEstimate,
    /// `(tube − fraunhofer) / tube` at the final time.
    pub fraunhofer_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSeparatrix {
    pub t: f64,
    pub x_init: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingSummary {
    pub t: f64,
    /// Upper initial edge of the central peak's tube.
    pub central_upper_edge: f64,
    /// Initial position separating the order 0 and +1 basins.
    pub basin_separatrix: f64,
    pub swarm: (f64, f64),
    pub labels: Vec<String>,
    pub record: Option<BranchRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingSummary {
    pub geometry: GratingGeometry,
    pub fraunhofer_series: Vec<OrderSeries>,
    pub patterns: Vec<PatternSummary>,
    pub far_field: Vec<FarFieldOrder>,
    /// `(asymptotic − tube) / asymptotic` for the tubes of the first analysis time.
    pub early_tube_deficit: Vec<OrderValue>,
    pub split_separatrices: Vec<SplitSeparatrix>,
    pub branching: Option<BranchingSummary>,
    pub per_slit: Option<PerSlitMatrix>,
}
