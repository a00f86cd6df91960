//! Multi-pixel ground-truth scenes from closed-form surfaces or meshes.

mod file;
mod mesh;
mod parametric;
mod raycast;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

pub use file::{FluxSpec, GridSpec, SceneFile};
pub use mesh::{parse_obj, parse_ply, TriangleMesh, MIN_TRIANGLE_AREA};
pub use parametric::{parametric_scene, Reflectance, Surface};
pub use raycast::{cast, intersect, raycast_scene};

use crate::error::Result;
use crate::model::{AcquisitionConfig, SceneParams};
use crate::sim::{simulate, DetectionSet, RngSeed};
use crate::ssdr::ScanGrid;

/// Ground truth per pixel; `None` marks a pixel whose ray hit nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub generator: String,
    pub grid: ScanGrid,
    pub pixels: Vec<Option<SceneParams>>,
}

impl SceneSpec {
    /// Indices of pixels with a surface hit.
    pub fn hit_pixels(&self) -> Vec<usize> {
        (0..self.pixels.len()).filter(|&p| self.pixels[p].is_some()).collect()
    }

    pub fn validate(&self, cfg: &AcquisitionConfig) -> Result<()> {
        self.pixels.iter().flatten().try_for_each(|p| p.validate(cfg))
    }

    /// Writes `pixel,theta,phi,S,B,z` for every hit pixel.
    pub fn write_ground_truth(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "pixel,theta,phi,S,B,z")?;
        for (p, px) in self.pixels.iter().enumerate() {
            if let Some(px) = px {
                writeln!(
                    out,
                    "{p},{},{},{},{},{}",
                    self.grid.theta[p], self.grid.phi[p], px.signal, px.background, px.depth
                )?;
            }
        }
        Ok(())
    }

    pub fn save_ground_truth(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ground_truth(f)
    }
}

/// Independent simulation of every hit pixel with stream `pixel`.
pub fn simulate_scene(spec: &SceneSpec, cfg: &AcquisitionConfig, seed: u64) -> Result<Vec<Option<DetectionSet>>> {
    spec.validate(cfg)?;
    Ok(spec
        .pixels
        .par_iter()
        .enumerate()
        .map(|(p, px)| px.map(|px| simulate(&px, cfg, &RngSeed::new(seed, p as u64))))
        .collect())
}
