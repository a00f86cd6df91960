use super::geometry::{dot, Point};
use crate::error::{Error, Result};

/// Stein score `∇ log π` of a point-cloud prior, evaluated on whole clouds.
///
/// Implementations may be shared across threads; each call is a pure
/// function of its input.
pub trait ScoreModel: Send + Sync {
    fn scores(&self, points: &[Point]) -> Result<Vec<Point>>;
}

/// Gaussian-blurred plane prior `π(x) ∝ exp(-(⟨n, x⟩ - d)² / (2σ_b²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneScore {
    normal: Point,
    offset: f64,
    blur: f64,
}

impl PlaneScore {
    pub fn new(normal: Point, offset: f64, blur: f64) -> Result<Self> {
        let len = dot(&normal, &normal).sqrt();
        if !((len - 1.0).abs() < 1e-9) {
            return Err(Error::config("normal", format!("must be a unit vector, |n| = {len}")));
        }
        if !(blur > 0.0 && blur.is_finite()) || !offset.is_finite() {
            return Err(Error::config("blur", "must be > 0 with a finite offset"));
        }
        Ok(Self { normal, offset, blur })
    }

    /// Parses `nx,ny,nz,d,sigma`.
    pub fn parse(spec: &str) -> Result<Self> {
        let v: Vec<f64> = spec
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config("plane", format!("`{spec}`: {e}")))?;
        if v.len() != 5 {
            return Err(Error::config("plane", format!("expected nx,ny,nz,d,sigma, got `{spec}`")));
        }
        Self::new([v[0], v[1], v[2]], v[3], v[4])
    }

    pub fn normal(&self) -> Point {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn blur(&self) -> f64 {
        self.blur
    }

    /// Unnormalized `log π(x)`.
    pub fn log_density(&self, x: &Point) -> f64 {
        let e = dot(&self.normal, x) - self.offset;
        -0.5 * e * e / (self.blur * self.blur)
    }

    /// `s(x) = -((⟨n, x⟩ - d) / σ_b²) n`.
    #[inline]
    pub fn score(&self, x: &Point) -> Point {
        let k = -(dot(&self.normal, x) - self.offset) / (self.blur * self.blur);
        [k * self.normal[0], k * self.normal[1], k * self.normal[2]]
    }
}

impl ScoreModel for PlaneScore {
    fn scores(&self, points: &[Point]) -> Result<Vec<Point>> {
        Ok(points.iter().map(|x| self.score(x)).collect())
    }
}
