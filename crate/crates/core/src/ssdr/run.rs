//! The noisy score-regularized depth iteration.
//!
//! Each iteration queries the score model once on the whole cloud at the
//! previous depths, thresholds the line-of-sight scores and moves every
//! pixel by `γ (∂ℒ/∂z + α σ̄) + √(2γ) ξ`, with the likelihood gradient taken
//! at the pixel's fixed flux estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{depth_score, threshold_scores, to_cartesian, ScanGrid};
use super::median::median_smooth_init;
use super::score::ScoreModel;
use crate::error::{Error, Result};
use crate::likelihood::{loglik, Observations};
use crate::model::{AcquisitionConfig, DetectorMode, SceneParams};

const DEPTH_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsdrConfig {
    /// Score threshold `ε`.
    pub threshold: f64,
    /// Outlier threshold `ε_init` for median initialization.
    pub init_threshold: f64,
    /// Step size `γ`.
    pub step: f64,
    /// Prior weight `α`.
    pub alpha: f64,
    pub iterations: usize,
    /// Neighbours used by the median initialization.
    pub knn: usize,
    pub median_init: bool,
    pub thresholding: bool,
    pub noise: bool,
}

impl Default for SsdrConfig {
    fn default() -> Self {
        Self {
            threshold: 4.78e-3,
            init_threshold: 1.09e-3,
            step: 3.74e-6,
            alpha: 9.70e6,
            iterations: 200,
            knn: 8,
            median_init: true,
            thresholding: true,
            noise: true,
        }
    }
}

impl SsdrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.init_threshold > 0.0 && self.step > 0.0) {
            return Err(Error::config("ssdr", "thresholds and step size must be > 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be finite and >= 0"));
        }
        if self.iterations == 0 || self.knn == 0 {
            return Err(Error::config("ssdr", "iterations and knn must be >= 1"));
        }
        Ok(())
    }
}

/// Per-pixel data and fixed flux estimates.
#[derive(Debug, Clone, Copy)]
pub struct PixelInput<'a> {
    pub data: Observations<'a>,
    pub signal: f64,
    pub background: f64,
}

/// Depth error of one iterate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    /// 0 is the initialization.
    pub iteration: usize,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdrOutput {
    pub depths: Vec<f64>,
    /// Final line-of-sight scores (unthresholded).
    pub sigma: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// A run that stopped early; `depths` holds the last completed iterate.
#[derive(Debug, thiserror::Error)]
#[error("regularization stopped after {completed} iterations: {error}")]
pub struct SsdrFailure {
    pub error: Error,
    pub depths: Vec<f64>,
    pub completed: usize,
    pub trace: Vec<TracePoint>,
}

/// Standard normal for iteration `k`, pixel `p`, independent of any other
/// `(k, p)` and of evaluation order.
fn noise(seed: u64, k: usize, p: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | p as u64);
    rng.sample(StandardNormal)
}

fn depth_errors(depths: &[f64], truth: &[f64], iteration: usize) -> TracePoint {
    let n = depths.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (z, t) in depths.iter().zip(truth) {
        se += (z - t) * (z - t);
        ae += (z - t).abs();
    }
    TracePoint {
        iteration,
        rmse: (se / n).sqrt(),
        mae: ae / n,
    }
}

fn sigma_at(grid: &ScanGrid, depths: &[f64], model: &dyn ScoreModel) -> Result<Vec<f64>> {
    let cloud = to_cartesian(grid, depths)?;
    let scores = model.scores(&cloud)?;
    if scores.len() != cloud.len() {
        return Err(Error::ScoreModelFailure(format!(
            "model returned {} scores for {} points",
            scores.len(),
            cloud.len()
        )));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::ScoreModelFailure("model returned non-finite scores".into()));
    }
    depth_score(&cloud, &grid.origin, &scores)
}

#[allow(clippy::too_many_arguments)]
pub fn ssdr_run(
    grid: &ScanGrid,
    pixels: &[PixelInput<'_>],
    depths: &[f64],
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    ssdr: &SsdrConfig,
    model: &dyn ScoreModel,
    seed: u64,
    truth: Option<&[f64]>,
) -> std::result::Result<SsdrOutput, SsdrFailure> {
    let fail = |error: Error, depths: &[f64], completed: usize, trace: &[TracePoint]| SsdrFailure {
        error,
        depths: depths.to_vec(),
        completed,
        trace: trace.to_vec(),
    };
    let p_count = grid.len();
    if let Err(e) = ssdr.validate().and_then(|_| {
        if pixels.len() != p_count || depths.len() != p_count || truth.is_some_and(|t| t.len() != p_count) {
            Err(Error::InvalidInput("grid, pixels, depths and truth lengths differ".into()))
        } else {
            Ok(())
        }
    }) {
        return Err(fail(e, depths, 0, &[]));
    }

    let z_max = cfg.max_depth();
    let clamp = |z: f64| z.clamp(DEPTH_MARGIN, z_max - DEPTH_MARGIN);
    let mut z: Vec<f64> = depths.iter().map(|&d| clamp(d)).collect();
    let mut trace = Vec::new();

    if ssdr.median_init {
        match sigma_at(grid, &z, model) {
            Ok(sigma) => z = median_smooth_init(grid, &z, &sigma, ssdr.init_threshold, ssdr.knn),
            Err(e) => return Err(fail(e, &z, 0, &trace)),
        }
    }
    if let Some(t) = truth {
        trace.push(depth_errors(&z, t, 0));
    }

    let drift = ssdr.step;
    let spread = (2.0 * ssdr.step).sqrt();
    let mut sigma = Vec::new();
    for k in 1..=ssdr.iterations {
        sigma = match sigma_at(grid, &z, model) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, &z, k - 1, &trace)),
        };
        let prior = if ssdr.thresholding {
            threshold_scores(&sigma, ssdr.threshold)
        } else {
            sigma.clone()
        };
        let next: Result<Vec<f64>> = (0..p_count)
            .into_par_iter()
            .map(|p| {
                let px = &pixels[p];
                let params = SceneParams {
                    signal: px.signal,
                    background: px.background,
                    depth: z[p],
                };
                let g = loglik(mode, &params, cfg, px.data)?.grad[2];
                let xi = if ssdr.noise { noise(seed, k, p) } else { 0.0 };
                Ok(clamp(z[p] + drift * (g + ssdr.alpha * prior[p]) + spread * xi))
            })
            .collect();
        z = match next {
            Ok(v) => v,
            Err(e) => return Err(fail(e, &z, k - 1, &trace)),
        };
        if let Some(t) = truth {
            trace.push(depth_errors(&z, t, k));
        }
    }
    Ok(SsdrOutput { depths: z, sigma, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DetectionSet;
    use crate::ssdr::{PlaneScore, Point};

    struct Broken;

    impl ScoreModel for Broken {
        fn scores(&self, points: &[Point]) -> Result<Vec<Point>> {
            Ok(vec![[0.0; 3]; points.len().saturating_sub(1)])
        }
    }

    fn setup() -> (ScanGrid, Vec<DetectionSet>, AcquisitionConfig) {
        let grid = ScanGrid::uniform([1.4, 1.7], [1.4, 1.7], [4, 4]).unwrap();
        let cfg = AcquisitionConfig::simulation_default(DetectorMode::FreeRunning);
        let data = (0..16)
            .map(|_| DetectionSet {
                armed_periods: 100,
                ..Default::default()
            })
            .collect();
        (grid, data, cfg)
    }

    #[test]
    fn tiny_steps_barely_move() {
        let (grid, data, cfg) = setup();
        let pixels: Vec<PixelInput> = data
            .iter()
            .map(|d| PixelInput {
                data: d.into(),
                signal: 0.0,
                background: 1.0,
            })
            .collect();
        let depths = vec![5.0; 16];
        let ssdr = SsdrConfig {
            alpha: 0.0,
            step: 1e-12,
            noise: false,
            median_init: false,
            iterations: 10,
            ..Default::default()
        };
        let model = PlaneScore::new([0.0, 0.0, -1.0], 4.0, 1.0).unwrap();
        let out = ssdr_run(&grid, &pixels, &depths, DetectorMode::FreeRunning, &cfg, &ssdr, &model, 1, Some(&depths)).unwrap();
        assert!(out.depths.iter().all(|&z| (z - 5.0).abs() < 1e-9));
        assert_eq!(out.trace.len(), 11);
        assert_eq!(out.trace[0].mae, 0.0);
    }

    #[test]
    fn model_failure_keeps_partial_output() {
        let (grid, data, cfg) = setup();
        let pixels: Vec<PixelInput> = data
            .iter()
            .map(|d| PixelInput {
                data: d.into(),
                signal: 0.0,
                background: 1.0,
            })
            .collect();
        let depths = vec![5.0; 16];
        let err = ssdr_run(&grid, &pixels, &depths, DetectorMode::FreeRunning, &cfg, &SsdrConfig::default(), &Broken, 1, None)
            .unwrap_err();
        assert!(matches!(err.error, Error::ScoreModelFailure(_)));
        assert_eq!(err.depths, depths);
        assert_eq!(err.completed, 0);
    }

    #[test]
    fn noise_is_keyed() {
        assert_eq!(noise(3, 4, 5), noise(3, 4, 5));
        assert_ne!(noise(3, 4, 5), noise(3, 5, 4));
        let n = 20_000;
        let mean: f64 = (0..n).map(|p| noise(9, 1, p)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }
}
