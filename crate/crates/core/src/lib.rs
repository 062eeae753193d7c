//! One-dimensional wave-packet dynamics with Bohmian trajectories and
//! probability-tube analysis.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod grid;
pub mod potential;
pub mod propagator;
pub mod state;
pub mod trajectories;
pub mod tubes;

pub use error::{Error, Result};
pub use grid::{integrate, quantile, spectral_derivative, ComplexField, Grid1D, RealField};
pub use potential::{sample_potential, PotentialKind, PotentialSpec};
pub use propagator::{propagate, step, PropagationConfig, Propagator, SnapshotStore, SolverDiagnostics};
pub use state::{
    current_density, density, gaussian_packet, mean_energy, momentum_expectation, restricted_probability, superpose,
    velocity_field, GaussianSpec, WaveFunction,
};
pub use trajectories::{
    born_rule_residual, check_noncrossing, integrate_trajectories, pairwise_jacobian, sample_initial_conditions,
    velocity_at, JacobianRecord, SamplingScheme, Trajectory, TrajectoryEnsemble,
};
pub use tubes::{
    classify_final, detect_branching, find_minima, find_separatrix, flux_balance, fraunhofer_boundary,
    peak_intensity_area, per_slit_contribution, tube_probability, BranchRecord, Domain, DomainSeries,
    GratingGeometry, ProbabilityTube,
};
