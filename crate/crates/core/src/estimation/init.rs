//! Censoring initializers.
//!
//! The time of flight comes from the ideal log-matched filter
//! `log(S₀ f + b₀)` with equal provisional fluxes, and the signal flux from
//! the counts (or Coates intensities) inside a window of width `t_win`
//! around it. A pure `log f` filter is avoided because it is dominated by
//! its far quadratic tails and degenerates to a centroid estimate.

use super::coates::coates_correction;
use super::filter::{argmax_first, log_filter_scores};
use super::{Estimate, EstimateFlags, FLUX_FLOOR};
use crate::error::{Error, Result};
use crate::model::{tof_to_depth, AcquisitionConfig};
use crate::sim::Histogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Censoring window width `t_win` in seconds.
    pub window: f64,
    /// Flux floor `ε`.
    pub floor: f64,
}

impl InitConfig {
    /// `t_win = 4w`, `ε = 1e-5`.
    pub fn new(cfg: &AcquisitionConfig) -> Self {
        Self {
            window: 4.0 * cfg.pulse.width(),
            floor: FLUX_FLOOR,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(Error::config("window", "must be > 0"));
        }
        if !(self.floor > 0.0) {
            return Err(Error::config("floor", "must be > 0"));
        }
        Ok(())
    }
}

fn check_shape(h: &Histogram, cfg: &AcquisitionConfig) -> Result<usize> {
    let m = cfg.num_bins()?;
    if h.num_bins() != m {
        return Err(Error::InvalidInput(format!("histogram has {} bins, expected {m}", h.num_bins())));
    }
    Ok(m)
}

/// Peak bin of the provisional log filter and the sum of `weights` over
/// the cyclic window around it.
fn censor(weights: &[f64], provisional: f64, cfg: &AcquisitionConfig, ic: &InitConfig) -> (usize, f64) {
    let scores = log_filter_scores(weights, provisional, provisional / cfg.period, cfg);
    let m = argmax_first(&scores);
    let tau = (m as f64 + 0.5) * cfg.bin_size;
    let half = 0.5 * ic.window;
    let inside: f64 = weights
        .iter()
        .enumerate()
        .filter(|&(j, _)| {
            let d = ((j as f64 + 0.5) * cfg.bin_size - tau).abs();
            d.min(cfg.period - d) <= half
        })
        .map(|(_, &w)| w)
        .sum();
    (m, inside)
}

fn estimate(m: usize, signal: f64, background: f64, cfg: &AcquisitionConfig, flags: EstimateFlags) -> Estimate {
    Estimate {
        signal,
        background,
        depth: tof_to_depth((m as f64 + 0.5) * cfg.bin_size),
        iterations: 0,
        objective: f64::NAN,
        flags,
    }
}

/// Initializer for ideal and free-running data:
/// `Ŝ = max(N_cl / n_r, ε)`, `B̂ = max(N / n_r - Ŝ, ε)`.
pub fn init_censored_ideal(h: &Histogram, cfg: &AcquisitionConfig, ic: &InitConfig) -> Result<Estimate> {
    ic.validate()?;
    check_shape(h, cfg)?;
    let n = h.total as f64;
    let nr = cfg.pulses as f64;
    let weights: Vec<f64> = h.bins.iter().map(|&c| c as f64).collect();
    let (m, inside) = censor(&weights, (n / (2.0 * nr)).max(ic.floor), cfg, ic);
    let signal = (inside / nr).max(ic.floor);
    let background = (n / nr - signal).max(ic.floor);
    Ok(estimate(m, signal, background, cfg, EstimateFlags::empty()))
}

/// Initializer for synchronous data on the Coates-corrected histogram with
/// `trials` armed periods: `Ŝ = max(Σ_win λ̂, ε)`, `B̂ = max(Σ λ̂ - Ŝ, ε)`.
/// Saturated bins are left out of every sum.
pub fn init_censored_sync(h: &Histogram, trials: u64, cfg: &AcquisitionConfig, ic: &InitConfig) -> Result<Estimate> {
    ic.validate()?;
    check_shape(h, cfg)?;
    let coates = coates_correction(h, trials)?;
    let flags = if coates.saturated.is_empty() {
        EstimateFlags::empty()
    } else {
        EstimateFlags::SATURATED
    };
    let lam = coates.finite_intensity();
    let total: f64 = lam.iter().sum();
    let (m, inside) = censor(&lam, (0.5 * total).max(ic.floor), cfg, ic);
    let signal = inside.max(ic.floor);
    let background = (total - signal).max(ic.floor);
    Ok(estimate(m, signal, background, cfg, flags))
}

/// Coates-corrected baseline: the synchronous initializer's depth and fluxes.
pub fn coates_peak(h: &Histogram, trials: u64, cfg: &AcquisitionConfig) -> Result<Estimate> {
    init_censored_sync(h, trials, cfg, &InitConfig::new(cfg))
}
