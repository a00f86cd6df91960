//! Closed-form surfaces for controlled scenes.

use serde::{Deserialize, Serialize};

use super::SceneSpec;
use crate::error::{Error, Result};
use crate::model::SceneParams;
use crate::ssdr::{dot, Point, ScanGrid};

/// Per-pixel reflectance in `[0, 1]` on the `n_θ × n_φ` raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reflectance {
    Uniform { value: f64 },
    /// `cells × cells` checkerboard alternating `low` and `high`.
    Checker { cells: usize, low: f64, high: f64 },
    /// Linear in the azimuth index from `low` to `high`.
    Ramp { low: f64, high: f64 },
}

impl Default for Reflectance {
    fn default() -> Self {
        Reflectance::Uniform { value: 1.0 }
    }
}

impl Reflectance {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        let fine = match *self {
            Reflectance::Uniform { value } => ok(value),
            Reflectance::Checker { cells, low, high } => cells >= 1 && ok(low) && ok(high),
            Reflectance::Ramp { low, high } => ok(low) && ok(high),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::config("reflectance", "values must lie in [0, 1] and cells >= 1"))
        }
    }

    pub fn at(&self, i: usize, j: usize, counts: [usize; 2]) -> f64 {
        match *self {
            Reflectance::Uniform { value } => value,
            Reflectance::Checker { cells, low, high } => {
                let a = i * cells / counts[0];
                let b = j * cells / counts[1];
                if (a + b).is_multiple_of(2) {
                    high
                } else {
                    low
                }
            }
            Reflectance::Ramp { low, high } => {
                if counts[1] == 1 {
                    high
                } else {
                    low + (high - low) * j as f64 / (counts[1] - 1) as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    /// Points with `⟨n, x⟩ = offset`.
    Plane { normal: Point, offset: f64 },
    Sphere { center: Point, radius: f64 },
    /// Plane at `near` for `φ < split_phi`, else at `far`.
    Step { normal: Point, near: f64, far: f64, split_phi: f64 },
}

fn unit(n: &Point) -> Result<Point> {
    let len = dot(n, n).sqrt();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::config("normal", "must be non-zero"));
    }
    Ok(n.map(|v| v / len))
}

fn plane_depth(normal: &Point, offset: f64, origin: &Point, dir: &Point) -> Option<f64> {
    let denom = dot(normal, dir);
    let z = (offset - dot(normal, origin)) / denom;
    (denom != 0.0 && z > 0.0 && z.is_finite()).then_some(z)
}

impl Surface {
    /// Depth along the ray from `origin` in unit direction `dir`.
    pub fn depth(&self, origin: &Point, dir: &Point, phi: f64) -> Option<f64> {
        match *self {
            Surface::Plane { normal, offset } => plane_depth(&normal, offset, origin, dir),
            Surface::Step {
                normal,
                near,
                far,
                split_phi,
            } => plane_depth(&normal, if phi < split_phi { near } else { far }, origin, dir),
            Surface::Sphere { center, radius } => {
                let oc = [center[0] - origin[0], center[1] - origin[1], center[2] - origin[2]];
                let b = dot(dir, &oc);
                let disc = b * b - (dot(&oc, &oc) - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                [b - root, b + root].into_iter().find(|&z| z > 0.0)
            }
        }
    }

    fn normalized(self) -> Result<Self> {
        Ok(match self {
            Surface::Plane { normal, offset } => Surface::Plane {
                normal: unit(&normal)?,
                offset: offset / dot(&normal, &normal).sqrt(),
            },
            Surface::Step {
                normal,
                near,
                far,
                split_phi,
            } => {
                let len = dot(&normal, &normal).sqrt();
                Surface::Step {
                    normal: unit(&normal)?,
                    near: near / len,
                    far: far / len,
                    split_phi,
                }
            }
            Surface::Sphere { radius, .. } if !(radius > 0.0) => {
                return Err(Error::config("radius", "must be > 0"));
            }
            s => s,
        })
    }
}

/// Closed-form scene on a uniform raster; `S_p = S_max · reflectance_p`.
pub fn parametric_scene(
    surface: Surface,
    grid: &ScanGrid,
    counts: [usize; 2],
    s_max: f64,
    background: f64,
    reflectance: Reflectance,
) -> Result<SceneSpec> {
    if counts[0] * counts[1] != grid.len() {
        return Err(Error::config("counts", "do not match the grid size"));
    }
    reflectance.validate()?;
    let surface = surface.normalized()?;
    let pixels = (0..grid.len())
        .map(|p| {
            let depth = surface.depth(&grid.origin, &grid.direction(p), grid.phi[p])?;
            Some(SceneParams {
                signal: s_max * reflectance.at(p / counts[1], p % counts[1], counts),
                background,
                depth,
            })
        })
        .collect();
    let generator = match surface {
        Surface::Plane { .. } => "plane",
        Surface::Sphere { .. } => "sphere",
        Surface::Step { .. } => "step",
    };
    Ok(SceneSpec {
        generator: generator.into(),
        grid: grid.clone(),
        pixels,
    })
}
