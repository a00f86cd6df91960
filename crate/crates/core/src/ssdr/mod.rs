//! Score-based depth regularization of multi-pixel depth maps.

mod bridge;
mod geometry;
mod median;
mod run;
mod score;

pub use bridge::{serve, BridgeScoreModel, DEFAULT_TIMEOUT};
pub use geometry::{
    depth_score, direction, dot, threshold_scores, to_cartesian, to_depth, Point, ScanGrid,
};
pub use median::median_smooth_init;
pub use run::{ssdr_run, PixelInput, SsdrConfig, SsdrFailure, SsdrOutput, TracePoint};
pub use score::{PlaneScore, ScoreModel};
