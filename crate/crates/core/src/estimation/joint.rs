//! Alternating maximum-likelihood estimation of `(S, B, z)`.

use serde::{Deserialize, Serialize};

use super::filter::mf_depth;
use super::flux::maximize_flux;
use super::init::{init_censored_ideal, init_censored_sync, InitConfig};
use super::refine::refine_depth;
use super::{Estimate, EstimateFlags};
use crate::error::{Error, Result};
use crate::likelihood::{loglik, Observations};
use crate::model::{tof_to_depth, AcquisitionConfig, DetectorMode, SceneParams};
use crate::sim::{quantize, Histogram};

/// Continuous refinement after the grid iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Keep the bin-centre depth.
    None,
    /// Refine the depth, then re-maximize the fluxes at the refined depth.
    #[default]
    Depth,
    /// Alternate flux and depth refinement until neither moves.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    /// Maximum number of flux / matched-filter rounds `K`.
    pub iterations: usize,
    pub init: InitConfig,
    pub refinement: Refinement,
}

impl JointConfig {
    pub fn new(cfg: &AcquisitionConfig) -> Self {
        Self {
            iterations: 5,
            init: InitConfig::new(cfg),
            refinement: Refinement::Depth,
        }
    }
}

const FLUX_CHANGE_TOL: f64 = 1e-6;
const JOINT_ROUNDS: usize = 20;

struct Tracker<'a> {
    mode: DetectorMode,
    cfg: &'a AcquisitionConfig,
    data: Observations<'a>,
    best: Estimate,
}

impl Tracker<'_> {
    fn objective(&self, s: f64, b: f64, z: f64) -> Result<f64> {
        let p = SceneParams {
            signal: s,
            background: b,
            depth: z,
        };
        Ok(loglik(self.mode, &p, self.cfg, self.data)?.value)
    }

    fn offer(&mut self, s: f64, b: f64, z: f64, value: f64) {
        if value > self.best.objective || self.best.objective.is_nan() {
            self.best.signal = s;
            self.best.background = b;
            self.best.depth = z;
            self.best.objective = value;
        }
    }
}

/// Joint ML estimate for one pixel.
///
/// Exact detection times are quantized for the matched-filter steps; flux
/// steps, refinement and the reported objective use `data` as given. The
/// returned estimate is the best state visited, so its objective is never
/// below the initializer's.
pub fn joint_ml(
    data: Observations<'_>,
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    jc: &JointConfig,
) -> Result<Estimate> {
    let h: Histogram = match data {
        Observations::Exact(d) => {
            let mut h = quantize(d, cfg)?;
            h.armed_periods = Some(d.armed_periods);
            h
        }
        Observations::Binned(h) => h.clone(),
    };
    let armed = match mode {
        DetectorMode::Synchronous => Some(h.armed_periods.ok_or(Error::MissingArmedCount)?),
        _ => None,
    };

    let mut init = match armed {
        Some(n) => init_censored_sync(&h, n, cfg, &jc.init)?,
        None => init_censored_ideal(&h, cfg, &jc.init)?,
    };
    let mut tracker = Tracker {
        mode,
        cfg,
        data,
        best: init,
    };
    init.objective = tracker.objective(init.signal, init.background, init.depth)?;
    tracker.best = init;
    if h.total == 0 {
        tracker.best.flags |= EstimateFlags::DEGENERATE;
        return Ok(tracker.best);
    }

    let mut flags = init.flags;
    let (mut s, mut b, mut z) = (init.signal, init.background, init.depth);
    let bin_depth = tof_to_depth(cfg.bin_size);
    let mut iterations = 0;
    for _ in 0..jc.iterations {
        iterations += 1;
        let sol = maximize_flux(data, z, mode, cfg, (s, b))?;
        if !sol.converged {
            flags |= EstimateFlags::NON_CONVERGENCE;
        }
        tracker.offer(sol.signal, sol.background, z, sol.value);
        let z_new = mf_depth(mode, &h, sol.signal, sol.background, cfg)?;
        let flux_change = (sol.signal - s).abs().max((sol.background - b).abs());
        let depth_change = (z_new - z).abs();
        (s, b, z) = (sol.signal, sol.background, z_new);
        let v = tracker.objective(s, b, z)?;
        tracker.offer(s, b, z, v);
        if depth_change < 0.1 * bin_depth && flux_change < FLUX_CHANGE_TOL {
            break;
        }
    }

    // continue from the best grid state
    let (mut s, mut b, mut z) = (tracker.best.signal, tracker.best.background, tracker.best.depth);
    let rounds = match jc.refinement {
        Refinement::None => 0,
        Refinement::Depth => 1,
        Refinement::Joint => JOINT_ROUNDS,
    };
    for _ in 0..rounds {
        let (z_new, v) = refine_depth(data, s, b, z, mode, cfg)?;
        tracker.offer(s, b, z_new, v);
        let sol = maximize_flux(data, z_new, mode, cfg, (s, b))?;
        if !sol.converged {
            flags |= EstimateFlags::NON_CONVERGENCE;
        }
        tracker.offer(sol.signal, sol.background, z_new, sol.value);
        let moved = (z_new - z).abs() > 1e-12 * bin_depth
            || (sol.signal - s).abs().max((sol.background - b).abs()) > FLUX_CHANGE_TOL;
        (s, b, z) = (tracker.best.signal, tracker.best.background, tracker.best.depth);
        if !moved {
            break;
        }
    }

    let mut out = tracker.best;
    out.iterations = iterations;
    out.flags = flags;
    Ok(out)
}
