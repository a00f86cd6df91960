//! Raster-scan geometry: scan angles, spherical/Cartesian transforms and
//! line-of-sight projection of scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Unit line-of-sight direction `(sinθ cosφ, cosθ, -sinθ sinφ)`.
#[inline]
pub fn direction(theta: f64, phi: f64) -> Point {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, ct, -st * sp]
}

/// Scan angles of every pixel and the detector position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(default)]
    pub origin: Point,
}

impl ScanGrid {
    pub fn new(theta: Vec<f64>, phi: Vec<f64>, origin: Point) -> Result<Self> {
        let grid = Self { theta, phi, origin };
        grid.validate()?;
        Ok(grid)
    }

    /// Equal angular steps over `theta_range × phi_range`, pixel
    /// `p = i · n_φ + j` at `(θ_i, φ_j)`. A single count samples the middle
    /// of its range.
    pub fn uniform(theta_range: [f64; 2], phi_range: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::config("counts", "grid counts must be >= 1"));
        }
        let steps = |range: [f64; 2], n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (range[0] + range[1])];
            }
            (0..n)
                .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let ts = steps(theta_range, counts[0]);
        let ps = steps(phi_range, counts[1]);
        let mut theta = Vec::with_capacity(counts[0] * counts[1]);
        let mut phi = Vec::with_capacity(theta.capacity());
        for &t in &ts {
            for &p in &ps {
                theta.push(t);
                phi.push(p);
            }
        }
        Self::new(theta, phi, [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() || self.theta.len() != self.phi.len() {
            return Err(Error::config("grid", "needs P >= 1 and matching theta/phi lengths"));
        }
        if let Some(t) = self
            .theta
            .iter()
            .find(|t| !(t.is_finite() && (0.0..=std::f64::consts::PI).contains(*t)))
        {
            return Err(Error::config("theta", format!("{t} outside [0, π]")));
        }
        if self.phi.iter().any(|p| !p.is_finite()) || self.origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("grid", "angles and origin must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    #[inline]
    pub fn direction(&self, p: usize) -> Point {
        direction(self.theta[p], self.phi[p])
    }

    /// Grid restricted to the listed pixels.
    pub fn subset(&self, pixels: &[usize]) -> Self {
        Self {
            theta: pixels.iter().map(|&p| self.theta[p]).collect(),
            phi: pixels.iter().map(|&p| self.phi[p]).collect(),
            origin: self.origin,
        }
    }

    /// Angular distance `√((θ_p - θ_q)² + (φ_p - φ_q)²)`.
    #[inline]
    pub fn angular_distance(&self, p: usize, q: usize) -> f64 {
        (self.theta[p] - self.theta[q]).hypot(self.phi[p] - self.phi[q])
    }
}

/// `x_p = c + z_p r̂_p`.
pub fn to_cartesian(grid: &ScanGrid, depths: &[f64]) -> Result<Vec<Point>> {
    if depths.len() != grid.len() {
        return Err(Error::InvalidInput(format!("{} depths for {} pixels", depths.len(), grid.len())));
    }
    depths
        .iter()
        .enumerate()
        .map(|(p, &z)| {
            if !(z > 0.0) {
                return Err(Error::NonPositiveDepth(z));
            }
            let r = grid.direction(p);
            Ok([grid.origin[0] + z * r[0], grid.origin[1] + z * r[1], grid.origin[2] + z * r[2]])
        })
        .collect()
}

/// `z_p = ‖x_p - c‖`.
pub fn to_depth(grid: &ScanGrid, cloud: &[Point]) -> Result<Vec<f64>> {
    cloud
        .iter()
        .map(|x| {
            let z = norm(&sub(x, &grid.origin));
            if z > 0.0 {
                Ok(z)
            } else {
                Err(Error::NonPositiveDepth(z))
            }
        })
        .collect()
}

/// `σ_p = ⟨s_p, x_p - c⟩ / ‖x_p - c‖`.
pub fn depth_score(cloud: &[Point], origin: &Point, scores: &[Point]) -> Result<Vec<f64>> {
    if cloud.len() != scores.len() {
        return Err(Error::InvalidInput(format!("{} scores for {} points", scores.len(), cloud.len())));
    }
    cloud
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(p, (x, s))| {
            let v = sub(x, origin);
            let r = norm(&v);
            if r == 0.0 {
                return Err(Error::ZeroRange(p));
            }
            Ok(dot(s, &v) / r)
        })
        .collect()
}

/// `σ̄ = σ` where `|σ| > ε`, else 0.
pub fn threshold_scores(sigma: &[f64], eps: f64) -> Vec<f64> {
    sigma.iter().map(|&s| if s.abs() > eps { s } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn single(theta: f64, phi: f64) -> ScanGrid {
        ScanGrid::new(vec![theta], vec![phi], [0.0; 3]).unwrap()
    }

    #[test]
    fn axis_and_pole() {
        let x = to_cartesian(&single(FRAC_PI_2, 0.0), &[1.0]).unwrap()[0];
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1].abs() < 1e-15 && x[2].abs() < 1e-15);
        let x = to_cartesian(&single(0.0, 1.234), &[2.0]).unwrap()[0];
        assert_eq!(x, [0.0, 2.0, -0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(to_cartesian(&single(1.0, 1.0), &[0.0]), Err(Error::NonPositiveDepth(_))));
        assert!(ScanGrid::new(vec![4.0], vec![0.0], [0.0; 3]).is_err());
        assert!(matches!(
            depth_score(&[[1.0, 1.0, 1.0]], &[1.0, 1.0, 1.0], &[[0.0; 3]]),
            Err(Error::ZeroRange(0))
        ));
    }

    #[test]
    fn projection_cases() {
        let c = [0.5, -1.0, 2.0];
        let x = [1.5, 1.0, 0.0];
        let v = [1.0, 2.0, -2.0];
        let s_perp = [2.0, -1.0, 0.0];
        assert_eq!(depth_score(&[x], &c, &[s_perp]).unwrap()[0], 0.0);
        assert!((depth_score(&[x], &c, &[v]).unwrap()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_cases() {
        let eps = 0.25;
        assert_eq!(threshold_scores(&[-2.0 * eps, eps / 2.0, 3.0 * eps], eps), vec![-0.5, 0.0, 0.75]);
        assert_eq!(threshold_scores(&[eps, -eps], eps), vec![0.0, 0.0]);
        let s = [1e-3, -2.0, 0.0];
        assert_eq!(threshold_scores(&s, f64::MIN_POSITIVE), s.to_vec());
    }

    #[test]
    fn uniform_grid_layout() {
        let g = ScanGrid::uniform([1.0, 2.0], [0.0, 1.0], [2, 3]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.theta, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(g.phi, vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    fn rotate(r: &[[f64; 3]; 3], x: &Point) -> Point {
        [dot(&r[0], x), dot(&r[1], x), dot(&r[2], x)]
    }

    fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
        let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
                }
            }
            out
        };
        mul(mul(rz, ry), rx)
    }

    proptest! {
        #[test]
        fn round_trip(theta in 0.0f64..PI, phi in -PI..PI, z in 1e-3f64..20.0) {
            let g = single(theta, phi);
            let back = to_depth(&g, &to_cartesian(&g, &[z]).unwrap()).unwrap()[0];
            prop_assert!((back - z).abs() <= 1e-12 * z);
        }

        #[test]
        fn rotation_invariance(
            pts in proptest::collection::vec(((-5.0f64..5.0, -5.0f64..5.0, 1.0f64..5.0), (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)), 1..20),
            a in -PI..PI, b in -PI..PI, c in -PI..PI,
        ) {
            let r = rotation(a, b, c);
            let origin = [0.3, -0.2, 0.1];
            let cloud: Vec<Point> = pts.iter().map(|(x, _)| [x.0, x.1, x.2]).collect();
            let scores: Vec<Point> = pts.iter().map(|(_, s)| [s.0, s.1, s.2]).collect();
            let base = depth_score(&cloud, &origin, &scores).unwrap();
            let rc: Vec<Point> = cloud.iter().map(|x| rotate(&r, x)).collect();
            let rs: Vec<Point> = scores.iter().map(|s| rotate(&r, s)).collect();
            let rotated = depth_score(&rc, &rotate(&r, &origin), &rs).unwrap();
            for (u, v) in base.iter().zip(&rotated) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn threshold_idempotent(sigma in proptest::collection::vec(-1.0f64..1.0, 0..50), eps in 1e-4f64..0.5) {
            let once = threshold_scores(&sigma, eps);
            prop_assert_eq!(threshold_scores(&once, eps), once);
        }
    }
}
