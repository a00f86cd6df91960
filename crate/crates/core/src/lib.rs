//! Single-photon lidar with detector dead time: simulation of ideal,
//! synchronous and free-running detectors, maximum-likelihood estimation of
//! signal flux, background flux and depth, and score-based depth
//! regularization over raster scans.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod harness;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod scene;
pub mod sim;
pub mod ssdr;

pub use error::{Error, Result};
pub use estimation::{joint_ml, Estimate, EstimateFlags, JointConfig, Refinement};
pub use likelihood::{loglik, LogLikResult, Observations};
pub use model::{AcquisitionConfig, DetectorMode, PulseProfile, SceneParams};
pub use scene::SceneSpec;
pub use sim::{DetectionSet, Histogram, RngSeed};
pub use ssdr::{ScanGrid, ScoreModel, SsdrConfig};
