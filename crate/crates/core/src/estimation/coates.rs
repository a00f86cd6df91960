use crate::error::{Error, Result};
use crate::sim::Histogram;

/// Per-bin intensity recovered from a pile-up distorted histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct CoatesEstimate {
    /// `λ̂[m]`, mean arrivals per period in bin `m`; `+∞` where saturated.
    pub intensity: Vec<f64>,
    /// Bins whose denominator reached zero.
    pub saturated: Vec<usize>,
}

impl CoatesEstimate {
    /// Intensities with saturated bins replaced by zero.
    pub fn finite_intensity(&self) -> Vec<f64> {
        self.intensity.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect()
    }
}

/// Coates's correction `λ̂[m] = log((N - Σ_{m'<m} h) / (N - Σ_{m'<=m} h))`.
///
/// `trials` is the number of periods in which the detector was armed; it
/// must bound the total count.
pub fn coates_correction(h: &Histogram, trials: u64) -> Result<CoatesEstimate> {
    if h.total > trials {
        return Err(Error::InvalidInput(format!(
            "histogram holds {} counts but only {trials} armed periods",
            h.total
        )));
    }
    let n = trials as f64;
    let mut before = 0u64;
    let mut intensity = Vec::with_capacity(h.num_bins());
    let mut saturated = Vec::new();
    for (m, &c) in h.bins.iter().enumerate() {
        let after = before + c;
        let den = n - after as f64;
        if den <= 0.0 {
            intensity.push(f64::INFINITY);
            saturated.push(m);
        } else {
            intensity.push(((n - before as f64) / den).ln());
        }
        before = after;
    }
    if !saturated.is_empty() {
        log::debug!("coates correction: {} saturated bins", saturated.len());
    }
    Ok(CoatesEstimate { intensity, saturated })
}
