use rayon::prelude::*;

use super::mesh::{TriangleMesh, MIN_TRIANGLE_AREA};
use super::SceneSpec;
use crate::model::SceneParams;
use crate::ssdr::{dot, Point, ScanGrid};

/// Hits closer than this to the ray origin are ignored.
const MIN_HIT_DISTANCE: f64 = 1e-12;
/// A new hit replaces the current one only if nearer by more than this.
const DEPTH_SLACK: f64 = 1e-12;

#[inline]
fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Ray/triangle intersection; returns `(t, u, v)` with barycentric
/// weights `(1 - u - v, u, v)` on `(a, b, c)`.
pub fn intersect(origin: &Point, dir: &Point, a: &Point, b: &Point, c: &Point) -> Option<(f64, f64, f64)> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(dir, &e2);
    let det = dot(&e1, &p);
    let scale = dot(&e1, &e1).sqrt() * dot(&e2, &e2).sqrt();
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(origin, a);
    let u = dot(&s, &p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(&s, &e1);
    let v = dot(dir, &q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(&e2, &q) * inv;
    (t > MIN_HIT_DISTANCE).then_some((t, u, v))
}

/// Nearest hit along the ray and the interpolated colour there.
pub fn cast(mesh: &TriangleMesh, valid: &[usize], origin: &Point, dir: &Point) -> Option<(f64, [f64; 3])> {
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for &t in valid {
        let [i, j, k] = mesh.triangles[t];
        let v = &mesh.vertices;
        if let Some((d, u, w)) = intersect(origin, dir, &v[i], &v[j], &v[k]) {
            if best.is_none_or(|b| d < b.0 - DEPTH_SLACK) {
                best = Some((d, t, u, w));
            }
        }
    }
    best.map(|(d, t, u, w)| {
        let color = match &mesh.colors {
            Some(c) => {
                let [i, j, k] = mesh.triangles[t];
                let a = 1.0 - u - w;
                [0, 1, 2].map(|ch| a * c[i][ch] + u * c[j][ch] + w * c[k][ch])
            }
            None => [1.0; 3],
        };
        (d, color)
    })
}

/// Casts one ray per pixel; `S_p = S_max (r + g + b) / 3`. Misses leave the
/// pixel empty.
pub fn raycast_scene(mesh: &TriangleMesh, grid: &ScanGrid, s_max: f64, background: f64) -> SceneSpec {
    let valid: Vec<usize> = (0..mesh.triangles.len())
        .filter(|&t| mesh.triangle_area(t) > MIN_TRIANGLE_AREA)
        .collect();
    let skipped = mesh.triangles.len() - valid.len();
    if skipped > 0 {
        log::warn!("skipping {skipped} degenerate triangles");
    }
    let pixels = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            cast(mesh, &valid, &grid.origin, &grid.direction(p)).map(|(depth, c)| SceneParams {
                signal: s_max * (c[0] + c[1] + c[2]) / 3.0,
                background,
                depth,
            })
        })
        .collect();
    SceneSpec {
        generator: "mesh".into(),
        grid: grid.clone(),
        pixels,
    }
}
