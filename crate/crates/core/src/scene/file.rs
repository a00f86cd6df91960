//! JSON scene description:
//! `{generator, grid: {theta_range, phi_range, counts}, flux: {S_max, B}, mesh_path?, params?}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use super::parametric::{parametric_scene, Reflectance, Surface};
use super::raycast::raycast_scene;
use super::SceneSpec;
use crate::error::{Error, Result};
use crate::ssdr::{Point, ScanGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_range: [f64; 2],
    pub phi_range: [f64; 2],
    /// `[n_θ, n_φ]`.
    pub counts: [usize; 2],
    #[serde(default)]
    pub origin: Point,
}

impl GridSpec {
    pub fn build(&self) -> Result<ScanGrid> {
        let mut g = ScanGrid::uniform(self.theta_range, self.phi_range, self.counts)?;
        g.origin = self.origin;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSpec {
    #[serde(rename = "S_max", default = "default_s_max")]
    pub s_max: f64,
    #[serde(rename = "B", default = "default_background")]
    pub background: f64,
}

fn default_s_max() -> f64 {
    0.3
}

fn default_background() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    /// `plane`, `sphere`, `step` or `mesh`.
    pub generator: String,
    pub grid: GridSpec,
    pub flux: FluxSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<PathBuf>,
    /// Surface parameters for parametric generators, plus an optional
    /// `reflectance` pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct Params {
    #[serde(flatten)]
    surface: Surface,
    #[serde(default)]
    reflectance: Reflectance,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }

    /// Builds the scene; relative mesh paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<SceneSpec> {
        if !(self.flux.s_max >= 0.0 && self.flux.background >= 0.0) {
            return Err(Error::config("flux", "S_max and B must be >= 0"));
        }
        let grid = self.grid.build()?;
        match self.generator.as_str() {
            "mesh" => {
                let rel = self
                    .mesh_path
                    .as_ref()
                    .ok_or_else(|| Error::config("mesh_path", "required for the mesh generator"))?;
                let mesh = TriangleMesh::load(&base.join(rel))?;
                Ok(raycast_scene(&mesh, &grid, self.flux.s_max, self.flux.background))
            }
            kind @ ("plane" | "sphere" | "step") => {
                let mut value = self
                    .params
                    .clone()
                    .ok_or_else(|| Error::config("params", format!("required for the {kind} generator")))?;
                if let Some(obj) = value.as_object_mut() {
                    obj.insert("kind".into(), kind.into());
                }
                let params: Params =
                    serde_json::from_value(value).map_err(|e| Error::config("params", e.to_string()))?;
                parametric_scene(
                    params.surface,
                    &grid,
                    self.grid.counts,
                    self.flux.s_max,
                    self.flux.background,
                    params.reflectance,
                )
            }
            other => Err(Error::config("generator", format!("unknown generator `{other}`"))),
        }
    }
}
