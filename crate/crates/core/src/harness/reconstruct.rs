//! Scene reconstruction: pixelwise joint ML, optionally followed by SSDR.

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{mae, rmse};
use crate::error::{Error, Result};
use crate::estimation::{joint_ml, Estimate, JointConfig};
use crate::io::CloudVertex;
use crate::likelihood::loglik;
use crate::model::AcquisitionConfig;
use crate::scene::{simulate_scene, SceneSpec};
use crate::sim::{quantize, Histogram};
use crate::ssdr::{ssdr_run, to_cartesian, PixelInput, ScoreModel, SsdrConfig, TracePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Per-pixel results over the hit pixels of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Scene pixel index of every row below.
    pub pixels: Vec<usize>,
    pub histograms: Vec<Histogram>,
    /// Final estimates; depths are SSDR output when it ran.
    pub estimates: Vec<Estimate>,
    pub pixelwise_depths: Vec<f64>,
    /// Final line-of-sight scores, zero without SSDR.
    pub sigma: Vec<f64>,
    pub pixelwise: DepthMetrics,
    pub regularized: Option<DepthMetrics>,
    pub trace: Vec<TracePoint>,
}

impl Reconstruction {
    pub fn vertices(&self, scene: &SceneSpec) -> Result<Vec<CloudVertex>> {
        let grid = scene.grid.subset(&self.pixels);
        let depths: Vec<f64> = self.estimates.iter().map(|e| e.depth).collect();
        let cloud = to_cartesian(&grid, &depths)?;
        Ok(cloud
            .into_iter()
            .zip(&self.estimates)
            .zip(&self.sigma)
            .map(|((position, e), &sigma)| CloudVertex {
                position,
                signal: e.signal,
                background: e.background,
                sigma,
            })
            .collect())
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &Estimate)> {
        self.pixels.iter().copied().zip(&self.estimates)
    }
}

/// A score-model failure during SSDR; `partial` holds the pixelwise result.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct ReconstructionFailure {
    pub error: Error,
    pub partial: Option<Box<Reconstruction>>,
}

impl From<Error> for ReconstructionFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

fn metrics(depths: &[f64], truth: &[f64]) -> DepthMetrics {
    DepthMetrics {
        mae: mae(depths.iter().copied().zip(truth.iter().copied())),
        rmse: rmse(depths.iter().copied().zip(truth.iter().copied())),
    }
}

/// Pixelwise estimates of already-binned data, in input order.
pub fn estimate_pixels(histograms: &[Histogram], cfg: &AcquisitionConfig, jc: &JointConfig) -> Result<Vec<Estimate>> {
    histograms.par_iter().map(|h| joint_ml(h.into(), cfg.mode, cfg, jc)).collect()
}

/// Simulates `scene`, estimates every hit pixel from its histogram and runs
/// SSDR with `model` when `ssdr` is given.
pub fn run_reconstruction(
    scene: &SceneSpec,
    cfg: &AcquisitionConfig,
    jc: &JointConfig,
    ssdr: Option<(&SsdrConfig, &dyn ScoreModel)>,
    seed: u64,
) -> std::result::Result<Reconstruction, ReconstructionFailure> {
    let pixels = scene.hit_pixels();
    if pixels.is_empty() {
        return Err(Error::InvalidInput("scene has no hit pixels".into()).into());
    }
    let detections = simulate_scene(scene, cfg, seed)?;
    let histograms: Vec<Histogram> = pixels
        .iter()
        .map(|&p| quantize(detections[p].as_ref().expect("hit pixel"), cfg))
        .collect::<Result<_>>()?;
    let truth: Vec<f64> = pixels.iter().map(|&p| scene.pixels[p].expect("hit pixel").depth).collect();
    let estimates = estimate_pixels(&histograms, cfg, jc)?;
    let pixelwise_depths: Vec<f64> = estimates.iter().map(|e| e.depth).collect();
    let mut rec = Reconstruction {
        pixelwise: metrics(&pixelwise_depths, &truth),
        sigma: vec![0.0; pixels.len()],
        pixels,
        histograms,
        estimates,
        pixelwise_depths,
        regularized: None,
        trace: Vec::new(),
    };
    let Some((sc, model)) = ssdr else {
        return Ok(rec);
    };

    let grid = scene.grid.subset(&rec.pixels);
    let inputs: Vec<PixelInput> = rec
        .histograms
        .iter()
        .zip(&rec.estimates)
        .map(|(h, e)| PixelInput {
            data: h.into(),
            signal: e.signal,
            background: e.background,
        })
        .collect();
    let out = match ssdr_run(&grid, &inputs, &rec.pixelwise_depths, cfg.mode, cfg, sc, model, seed, Some(&truth)) {
        Ok(out) => out,
        Err(fail) => {
            rec.trace = fail.trace;
            return Err(ReconstructionFailure {
                error: fail.error,
                partial: Some(Box::new(rec)),
            });
        }
    };
    drop(inputs);
    let updated: Vec<Estimate> = rec
        .estimates
        .par_iter()
        .zip(&rec.histograms)
        .zip(&out.depths)
        .map(|((e, h), &z)| {
            let mut e = *e;
            e.depth = z;
            e.objective = loglik(cfg.mode, &e.params(), cfg, h.into())?.value;
            Ok(e)
        })
        .collect::<Result<_>>()?;
    rec.estimates = updated;
    rec.regularized = Some(metrics(&out.depths, &truth));
    rec.sigma = out.sigma;
    rec.trace = out.trace;
    Ok(rec)
}
