//! Depth and flux estimation: matched filters, Coates's correction,
//! censoring initializers and the alternating joint maximum-likelihood
//! estimator.

mod coates;
mod filter;
mod flux;
mod init;
mod joint;
mod refine;

use std::fmt;

use bitflags::bitflags;

pub use coates::{coates_correction, CoatesEstimate};
pub use filter::{
    argmax_first, matched_filter_scores, matched_filter_scores_direct, mf_depth, mf_depth_free,
    mf_depth_ideal, mf_depth_sync,
};
pub use flux::{flux_upper_bound, maximize_flux, maximize_flux_objective, FluxSolution};
pub use init::{coates_peak, init_censored_ideal, init_censored_sync, InitConfig};
pub use joint::{joint_ml, JointConfig, Refinement};
pub use refine::refine_depth;

/// Smallest flux an estimate may take.
pub const FLUX_FLOOR: f64 = 1e-5;

bitflags! {
    /// Conditions encountered while producing an [`Estimate`].
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct EstimateFlags: u8 {
        /// No detections; the estimate is the initializer's floor output.
        const DEGENERATE = 1;
        /// A flux maximization stopped at its iteration cap.
        const NON_CONVERGENCE = 1 << 1;
        /// Coates's correction met one or more saturated bins.
        const SATURATED = 1 << 2;
    }
}

impl fmt::Display for EstimateFlags {
    /// Writes `degenerate|saturated` style names, or nothing when empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .iter()
            .map(|flag| match flag {
                EstimateFlags::DEGENERATE => "degenerate",
                EstimateFlags::NON_CONVERGENCE => "non_convergence",
                _ => "saturated",
            })
            .collect();
        f.write_str(&names.join("|"))
    }
}

/// Per-pixel estimate of `(S, B, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub signal: f64,
    pub background: f64,
    pub depth: f64,
    /// Outer iterations used.
    pub iterations: usize,
    /// Log-likelihood at the estimate; `NaN` when not evaluated.
    pub objective: f64,
    pub flags: EstimateFlags,
}

impl Estimate {
    pub fn params(&self) -> crate::model::SceneParams {
        crate::model::SceneParams {
            signal: self.signal,
            background: self.background,
            depth: self.depth,
        }
    }
}
