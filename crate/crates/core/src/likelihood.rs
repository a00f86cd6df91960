//! Log-likelihoods of the three detector modes and their analytic gradients
//! with respect to `(S, B, z)`.
//!
//! * ideal: `-n_r Λ + Σ log λ̃(X_i)`
//! * synchronous (conditioned on the armed-period count `N_r'`):
//!   `-(N_r' - N) Λ + Σ [log λ̃(X_i) - Φ̃(X_i)]`
//! * free-running:
//!   `-n_r Λ + Σ [log λ̃(X_i) + Φ̃(Y_i) + 1{X_i + t_d >= t_r} Λ - Φ̃(X_i)]`
//!   with `Y_i = (X_i + t_d) mod t_r`.
//!
//! Evaluation never clamps fluxes; callers keep `S, B` above the flux floor.

use crate::error::{Error, Result};
use crate::model::{split_time, AcquisitionConfig, DetectorMode, SceneParams, SPEED_OF_LIGHT};
use crate::sim::{DetectionSet, Histogram};

/// Value and gradient `(∂/∂S, ∂/∂B, ∂/∂z)` of a log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikResult {
    pub value: f64,
    pub grad: [f64; 3],
}

/// Relative detection times, either exact or quantized to bin centers.
#[derive(Debug, Clone, Copy)]
pub enum Observations<'a> {
    Exact(&'a DetectionSet),
    Binned(&'a Histogram),
}

impl<'a> From<&'a DetectionSet> for Observations<'a> {
    fn from(d: &'a DetectionSet) -> Self {
        Observations::Exact(d)
    }
}

impl<'a> From<&'a Histogram> for Observations<'a> {
    fn from(h: &'a Histogram) -> Self {
        Observations::Binned(h)
    }
}

impl Observations<'_> {
    /// Number of detections `N`.
    pub fn count(&self) -> u64 {
        match self {
            Observations::Exact(d) => d.count() as u64,
            Observations::Binned(h) => h.total,
        }
    }

    pub fn armed_periods(&self) -> Option<u64> {
        match self {
            Observations::Exact(d) => Some(d.armed_periods),
            Observations::Binned(h) => h.armed_periods,
        }
    }

    /// Calls `f(x, multiplicity)` for every distinct detection time.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(f64, f64)) {
        match self {
            Observations::Exact(d) => d.relative_times.iter().for_each(|&x| f(x, 1.0)),
            Observations::Binned(h) => h.nonzero().for_each(|(m, c)| f(h.bin_center(m), c as f64)),
        }
    }
}

/// Dispatches on `mode`.
pub fn loglik(
    mode: DetectorMode,
    p: &SceneParams,
    cfg: &AcquisitionConfig,
    data: Observations<'_>,
) -> Result<LogLikResult> {
    match mode {
        DetectorMode::Ideal => loglik_ideal(p, cfg, data),
        DetectorMode::Synchronous => loglik_sync(p, cfg, data),
        DetectorMode::FreeRunning => loglik_free(p, cfg, data),
    }
}

pub fn loglik_ideal(p: &SceneParams, cfg: &AcquisitionConfig, data: Observations<'_>) -> Result<LogLikResult> {
    evaluate(DetectorMode::Ideal, p, cfg, data)
}

pub fn loglik_sync(p: &SceneParams, cfg: &AcquisitionConfig, data: Observations<'_>) -> Result<LogLikResult> {
    evaluate(DetectorMode::Synchronous, p, cfg, data)
}

pub fn loglik_free(p: &SceneParams, cfg: &AcquisitionConfig, data: Observations<'_>) -> Result<LogLikResult> {
    evaluate(DetectorMode::FreeRunning, p, cfg, data)
}

fn evaluate(
    mode: DetectorMode,
    p: &SceneParams,
    cfg: &AcquisitionConfig,
    data: Observations<'_>,
) -> Result<LogLikResult> {
    let period = cfg.period;
    let tau = p.tof();
    let (s, b) = (p.signal, p.background);
    let lambda = s + b;
    let inv_w2 = 1.0 / (cfg.pulse.width() * cfg.pulse.width());
    let dtau = 2.0 / SPEED_OF_LIGHT;
    let bg = b / period;
    let n = data.count() as f64;

    // coefficient of -Λ in the value
    let periods = match mode {
        DetectorMode::Synchronous => {
            let armed = data.armed_periods().ok_or(Error::MissingArmedCount)?;
            armed as f64 - n
        }
        _ => cfg.pulses as f64,
    };

    let mut value = -periods * lambda;
    let (mut gs, mut gb, mut gz) = (-periods, -periods, 0.0);
    let mut failure = None;

    data.for_each(|x, wt| {
        let dx = x - tau;
        let f = cfg.pulse.pdf(dx);
        let lam = s * f + bg;
        if !(lam > 0.0 && lam.is_finite()) {
            failure.get_or_insert(Error::NonFiniteLikelihood { time: x, intensity: lam });
            return;
        }
        value += wt * lam.ln();
        gs += wt * f / lam;
        gb += wt / (period * lam);
        gz += wt * dtau * s * dx * inv_w2 * f / lam;
        match mode {
            DetectorMode::Ideal => {}
            DetectorMode::Synchronous => {
                let cdf = cfg.pulse.cdf(dx);
                value -= wt * (s * cdf + b * x / period);
                gs -= wt * cdf;
                gb -= wt * x / period;
                gz += wt * dtau * s * f;
            }
            DetectorMode::FreeRunning => {
                let shifted = x + cfg.dead_time;
                let wrapped = shifted >= period;
                let y = if wrapped { shifted - period } else { shifted };
                let wrap = if wrapped { 1.0 } else { 0.0 };
                let (fx, fy) = (f, cfg.pulse.pdf(y - tau));
                let (cx, cy) = (cfg.pulse.cdf(dx), cfg.pulse.cdf(y - tau));
                value += wt * (s * (cy - cx) + b * (y - x) / period + wrap * lambda);
                gs += wt * (cy - cx + wrap);
                gb += wt * ((y - x) / period + wrap);
                gz += wt * dtau * s * (fx - fy);
            }
        }
    });

    match failure {
        Some(e) => Err(e),
        None => Ok(LogLikResult {
            value,
            grad: [gs, gb, gz],
        }),
    }
}

/// Armed periods of a synchronous acquisition, `n_r - #{i : X_i >= t_r - t_d}`.
///
/// A spill-over from the final period does not remove an armed period since
/// there is no following period, so those detections are not counted.
pub fn count_armed_periods(d: &DetectionSet, cfg: &AcquisitionConfig) -> u64 {
    let spill = cfg.period - cfg.dead_time;
    let lost = d
        .absolute_times
        .iter()
        .filter(|&&t| {
            let (k, x) = split_time(t, cfg.period);
            x >= spill && k + 1 < cfg.pulses
        })
        .count() as u64;
    cfg.pulses - lost
}

/// A log-likelihood restricted to `(S, B)` at fixed depth:
/// `Σ_i w_i log(S u_i + B) + a_S S + a_B B + c` with `u_i = t_r f(X_i - τ)`.
///
/// It is exactly the mode's log-likelihood at that depth, and concave.
#[derive(Debug, Clone)]
pub struct FluxObjective {
    terms: Vec<(f64, f64)>,
    linear: [f64; 2],
    constant: f64,
    count: f64,
}

impl FluxObjective {
    pub fn new(mode: DetectorMode, cfg: &AcquisitionConfig, data: Observations<'_>, depth: f64) -> Result<Self> {
        let period = cfg.period;
        let tau = crate::model::depth_to_tof(depth);
        let n = data.count() as f64;
        let periods = match mode {
            DetectorMode::Synchronous => data.armed_periods().ok_or(Error::MissingArmedCount)? as f64 - n,
            _ => cfg.pulses as f64,
        };
        let mut linear = [-periods, -periods];
        let mut terms = Vec::new();
        data.for_each(|x, wt| {
            let dx = x - tau;
            terms.push((period * cfg.pulse.pdf(dx), wt));
            match mode {
                DetectorMode::Ideal => {}
                DetectorMode::Synchronous => {
                    linear[0] -= wt * cfg.pulse.cdf(dx);
                    linear[1] -= wt * x / period;
                }
                DetectorMode::FreeRunning => {
                    let shifted = x + cfg.dead_time;
                    let wrapped = shifted >= period;
                    let y = if wrapped { shifted - period } else { shifted };
                    let wrap = if wrapped { 1.0 } else { 0.0 };
                    linear[0] += wt * (cfg.pulse.cdf(y - tau) - cfg.pulse.cdf(dx) + wrap);
                    linear[1] += wt * ((y - x) / period + wrap);
                }
            }
        });
        Ok(Self {
            terms,
            linear,
            constant: -n * period.ln(),
            count: n,
        })
    }

    /// Number of detections behind the objective.
    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn value(&self, s: f64, b: f64) -> f64 {
        let mut v = self.constant + self.linear[0] * s + self.linear[1] * b;
        for &(u, wt) in &self.terms {
            let lam = s * u + b;
            if lam <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += wt * lam.ln();
        }
        v
    }

    pub fn gradient(&self, s: f64, b: f64) -> [f64; 2] {
        let mut g = self.linear;
        for &(u, wt) in &self.terms {
            let lam = s * u + b;
            g[0] += wt * u / lam;
            g[1] += wt / lam;
        }
        g
    }

    /// Negative semidefinite Hessian `-Σ w a aᵀ / λ²`, `a = (u, 1)`.
    pub fn hessian(&self, s: f64, b: f64) -> [[f64; 2]; 2] {
        let (mut hss, mut hsb, mut hbb) = (0.0, 0.0, 0.0);
        for &(u, wt) in &self.terms {
            let lam = s * u + b;
            let inv = wt / (lam * lam);
            hss -= inv * u * u;
            hsb -= inv * u;
            hbb -= inv;
        }
        [[hss, hsb], [hsb, hbb]]
    }
}
