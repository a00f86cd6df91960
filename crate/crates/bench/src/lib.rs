//! Shared fixtures for the estimator benchmarks.

use spl_core::sim::{quantize, simulate};
use spl_core::{AcquisitionConfig, DetectionSet, DetectorMode, Histogram, RngSeed, SceneParams};

/// One simulated pixel at the default acquisition settings
/// (`M = 10⁴` bins of 10 ps).
pub struct Pixel {
    pub cfg: AcquisitionConfig,
    pub truth: SceneParams,
    pub detections: DetectionSet,
    pub histogram: Histogram,
}

pub fn pixel(mode: DetectorMode, signal: f64, background: f64, seed: u64) -> Pixel {
    let cfg = AcquisitionConfig::simulation_default(mode);
    let truth = SceneParams::new(signal, background, 0.4 * cfg.max_depth()).expect("valid fluxes");
    let detections = simulate(&truth, &cfg, &RngSeed::new(seed, 0));
    let histogram = quantize(&detections, &cfg).expect("default bins tile the period");
    Pixel {
        cfg,
        truth,
        detections,
        histogram,
    }
}
