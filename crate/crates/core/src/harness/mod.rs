//! Monte-Carlo sweeps, optimal-flux searches and scene reconstruction.

mod metrics;
mod reconstruct;
mod sweep;

pub use metrics::{mae, nrmse, rmse, write_metrics, KahanSum, MetricRow, METRIC_HEADER};
pub use reconstruct::{estimate_pixels, run_reconstruction, DepthMetrics, Reconstruction, ReconstructionFailure};
pub use sweep::{
    find_optimal_flux, log_grid, run_sweep, write_optima, write_trials, EstimatorKind, ExperimentConfig, OptimalFlux,
    OptimalFluxReport, SweepCell, SweepResult, SweepVariable, TrialRecord, OPTIMAL_HEADER, TRIAL_HEADER,
};
