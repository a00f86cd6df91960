//! Photon arrival sampling, detector models and histogramming.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{split_time, AcquisitionConfig, DetectorMode, SceneParams};

/// Seed for one reproducible stream of randomness (typically one pixel or
/// one Monte-Carlo trial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Detections recorded over one acquisition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    /// Sorted absolute detection times on `[0, n_r t_r)`.
    pub absolute_times: Vec<f64>,
    /// `absolute_times[i] mod t_r`.
    pub relative_times: Vec<f64>,
    /// Number of armed repetition periods. Equals `n_r` outside of
    /// synchronous mode.
    pub armed_periods: u64,
}

impl DetectionSet {
    fn from_absolute(absolute_times: Vec<f64>, armed_periods: u64, period: f64) -> Self {
        let relative_times = absolute_times.iter().map(|&t| split_time(t, period).1).collect();
        Self {
            absolute_times,
            relative_times,
            armed_periods,
        }
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.absolute_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.absolute_times.is_empty()
    }
}

/// Quantized relative detection times.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub bin_size: f64,
    pub total: u64,
    /// Armed-period count carried along for synchronous data.
    pub armed_periods: Option<u64>,
}

impl Histogram {
    pub fn from_bins(bins: Vec<u64>, bin_size: f64, armed_periods: Option<u64>) -> Self {
        let total = bins.iter().sum();
        Self {
            bins,
            bin_size,
            total,
            armed_periods,
        }
    }

    #[inline]
    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    /// Center of bin `m`, `(m + 1/2) Δ`.
    #[inline]
    pub fn bin_center(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.bin_size
    }

    /// Iterator over `(bin index, count)` for non-empty bins.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.bins.iter().enumerate().filter(|(_, &c)| c > 0).map(|(m, &c)| (m, c))
    }
}

/// Draws photon arrivals over `[0, n_r t_r)`.
///
/// Each period receives `Poisson(S)` signal photons at `k t_r + τ + N(0, w²)`
/// and `Poisson(B)` background photons uniform over the period.
pub fn sample_arrivals(p: &SceneParams, cfg: &AcquisitionConfig, seed: &RngSeed) -> Vec<f64> {
    sample_arrivals_with(p, cfg, &mut seed.rng())
}

pub fn sample_arrivals_with<R: Rng + ?Sized>(
    p: &SceneParams,
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Vec<f64> {
    let end = cfg.acquisition_time();
    let tof = p.tof();
    let w = cfg.pulse.width();
    let signal = (p.signal > 0.0).then(|| Poisson::new(p.signal).expect("finite flux"));
    let background = (p.background > 0.0).then(|| Poisson::new(p.background).expect("finite flux"));
    let expected = (p.total_flux() * cfg.pulses as f64).ceil() as usize;
    let mut out = Vec::with_capacity(expected + expected / 4 + 8);
    for k in 0..cfg.pulses {
        let start = k as f64 * cfg.period;
        if let Some(d) = &signal {
            let n: f64 = d.sample(rng);
            for _ in 0..n as u64 {
                let jitter: f64 = rng.sample(StandardNormal);
                let t = start + tof + w * jitter;
                if (0.0..end).contains(&t) {
                    out.push(t);
                }
            }
        }
        if let Some(d) = &background {
            let n: f64 = d.sample(rng);
            for _ in 0..n as u64 {
                let u: f64 = rng.random();
                out.push(start + u * cfg.period);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Ideal detector: every arrival is detected.
pub fn detect_ideal(arrivals: &[f64], cfg: &AcquisitionConfig) -> DetectionSet {
    DetectionSet::from_absolute(arrivals.to_vec(), cfg.pulses, cfg.period)
}

/// Synchronous detector.
///
/// A period is armed unless the previous period's detection left the
/// detector dead past the next pulse emission, i.e. at relative time
/// `X >= t_r - t_d`. Only the first arrival of each armed period is kept.
pub fn detect_synchronous(arrivals: &[f64], cfg: &AcquisitionConfig) -> DetectionSet {
    let gate = cfg.gate_window.unwrap_or(f64::INFINITY);
    let spill = cfg.period - cfg.dead_time;
    let mut kept = Vec::new();
    let mut armed = 0u64;
    let mut blocked = None;
    let mut idx = 0usize;
    for k in 0..cfg.pulses {
        let start = k as f64 * cfg.period;
        let end = start + cfg.period;
        let first = idx;
        while idx < arrivals.len() && arrivals[idx] < end {
            idx += 1;
        }
        if blocked == Some(k) {
            continue;
        }
        armed += 1;
        let hit = arrivals[first..idx]
            .iter()
            .copied()
            .find(|&t| t >= start && split_time(t, cfg.period).1 < gate);
        if let Some(t) = hit {
            kept.push(t);
            if split_time(t, cfg.period).1 >= spill {
                blocked = Some(k + 1);
            }
        }
    }
    DetectionSet::from_absolute(kept, armed, cfg.period)
}

/// Free-running detector: keeps an arrival iff it comes strictly after the
/// previous kept detection plus the dead time. Starts armed at `t = 0`.
pub fn detect_free_running(arrivals: &[f64], cfg: &AcquisitionConfig) -> DetectionSet {
    if cfg.dead_time == 0.0 {
        return detect_ideal(arrivals, cfg);
    }
    let mut kept: Vec<f64> = Vec::with_capacity(arrivals.len());
    let mut ready = f64::NEG_INFINITY;
    for &t in arrivals {
        if t > ready {
            kept.push(t);
            ready = t + cfg.dead_time;
        }
    }
    DetectionSet::from_absolute(kept, cfg.pulses, cfg.period)
}

/// Applies the detector model selected by `cfg.mode`.
pub fn detect(arrivals: &[f64], cfg: &AcquisitionConfig) -> DetectionSet {
    match cfg.mode {
        DetectorMode::Ideal => detect_ideal(arrivals, cfg),
        DetectorMode::Synchronous => detect_synchronous(arrivals, cfg),
        DetectorMode::FreeRunning => detect_free_running(arrivals, cfg),
    }
}

/// Samples arrivals and runs them through the configured detector.
pub fn simulate(p: &SceneParams, cfg: &AcquisitionConfig, seed: &RngSeed) -> DetectionSet {
    detect(&sample_arrivals(p, cfg, seed), cfg)
}

/// Bins relative detection times into `M = t_r / Δ` bins.
pub fn quantize(d: &DetectionSet, cfg: &AcquisitionConfig) -> Result<Histogram> {
    let m = cfg.num_bins()?;
    let mut bins = vec![0u64; m];
    for &x in &d.relative_times {
        let idx = ((x / cfg.bin_size).floor().max(0.0) as usize).min(m - 1);
        bins[idx] += 1;
    }
    let armed = (cfg.mode == DetectorMode::Synchronous).then_some(d.armed_periods);
    Ok(Histogram::from_bins(bins, cfg.bin_size, armed))
}

/// Cyclic shift of a histogram by `round(shift / Δ)` bins, so that a count at
/// relative time `X` moves to `(X + shift) mod t_r`.
pub fn shift_histogram(h: &Histogram, shift: f64) -> Histogram {
    let m = h.num_bins();
    if m == 0 {
        return h.clone();
    }
    let k = ((shift / h.bin_size).round() as i64).rem_euclid(m as i64) as usize;
    let mut bins = vec![0u64; m];
    for (i, &c) in h.bins.iter().enumerate() {
        bins[(i + k) % m] = c;
    }
    Histogram {
        bins,
        bin_size: h.bin_size,
        total: h.total,
        armed_periods: h.armed_periods,
    }
}
