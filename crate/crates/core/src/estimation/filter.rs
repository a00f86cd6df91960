//! Matched-filter ranging on a histogram.
//!
//! For each candidate time of flight `τ_m = (m + ½)Δ` the score is the
//! mode's log-likelihood with all detections placed at their bin centres,
//! so the lag between bin `j` and candidate `m` is exactly `(j - m)Δ`.
//! The pulse is not periodic, so correlations run over linear lags in
//! `(-M, M)` rather than cyclically.
//!
//! The fast path splits the filters into a banded part and a step:
//! `log(S f + b) = log b + log1p(S f / b)` where the second term vanishes a
//! few pulse widths away from zero lag, and `F = 1{l >= 0} + (F - 1{l >= 0})`
//! where the step becomes a suffix sum.

use crate::error::{Error, Result};
use crate::model::{tof_to_depth, AcquisitionConfig, DetectorMode};
use crate::sim::{shift_histogram, Histogram};

/// Relative size below which a banded kernel entry is dropped.
const KERNEL_CUTOFF: f64 = 1e-18;
/// Half-width, in pulse widths, of the banded CDF remainder.
const CDF_HALF_WIDTH: f64 = 9.5;

/// Index of the first maximum; `NaN` entries never win.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

struct LogKernel {
    log_b: f64,
    taps: Vec<f64>,
    half: usize,
}

fn log_kernel(signal: f64, b: f64, cfg: &AcquisitionConfig, m: usize) -> LogKernel {
    let w = cfg.pulse.width();
    let peak = signal * cfg.pulse.pdf(0.0) / b;
    let half = if peak > KERNEL_CUTOFF {
        let u = (2.0 * (peak / KERNEL_CUTOFF).ln()).sqrt();
        ((u * w / cfg.bin_size).ceil() as usize + 1).min(m.saturating_sub(1))
    } else {
        0
    };
    let taps = (0..=2 * half)
        .map(|i| {
            let lag = (i as f64 - half as f64) * cfg.bin_size;
            (signal * cfg.pulse.pdf(lag) / b).ln_1p()
        })
        .collect();
    LogKernel {
        log_b: b.ln(),
        taps,
        half,
    }
}

/// `out[m] = Σ_j w[j] k[j - m]` for `|j - m| <= half`, `k` stored from lag
/// `-half`.
fn banded(weights: &[f64], taps: &[f64], half: usize) -> Vec<f64> {
    let m = weights.len();
    let mut out = vec![0.0; m];
    for (j, &wj) in weights.iter().enumerate() {
        if wj == 0.0 {
            continue;
        }
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(m - 1);
        for (i, o) in out[lo..=hi].iter_mut().enumerate() {
            let pos = lo + i;
            *o += wj * taps[j + half - pos];
        }
    }
    out
}

/// `Σ_j w[j] log(S f((j-m)Δ) + b)` for every candidate `m`.
pub(crate) fn log_filter_scores(weights: &[f64], signal: f64, b: f64, cfg: &AcquisitionConfig) -> Vec<f64> {
    let kernel = log_kernel(signal, b, cfg, weights.len());
    let total: f64 = weights.iter().sum();
    let mut out = banded(weights, &kernel.taps, kernel.half);
    for o in out.iter_mut() {
        *o += total * kernel.log_b;
    }
    out
}

/// `Σ_j w[j] F((j-m)Δ)` for every candidate `m`.
fn cdf_sums(weights: &[f64], cfg: &AcquisitionConfig) -> Vec<f64> {
    let m = weights.len();
    let half = ((CDF_HALF_WIDTH * cfg.pulse.width() / cfg.bin_size).ceil() as usize + 1).min(m - 1);
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let l = i as i64 - half as i64;
            let step = if l >= 0 { 1.0 } else { 0.0 };
            cfg.pulse.cdf(l as f64 * cfg.bin_size) - step
        })
        .collect();
    let mut out = banded(weights, &taps, half);
    let mut suffix = 0.0;
    for j in (0..m).rev() {
        suffix += weights[j];
        out[j] += suffix;
    }
    out
}

fn counts(h: &Histogram) -> Vec<f64> {
    h.bins.iter().map(|&c| c as f64).collect()
}

fn check_inputs(h: &Histogram, signal: f64, background: f64, cfg: &AcquisitionConfig) -> Result<usize> {
    let m = cfg.num_bins()?;
    if h.num_bins() != m || (h.bin_size - cfg.bin_size).abs() > 1e-9 * cfg.bin_size {
        return Err(Error::InvalidInput(format!(
            "histogram has {} bins of {} s, configuration expects {m} bins of {} s",
            h.num_bins(),
            h.bin_size,
            cfg.bin_size
        )));
    }
    if !(signal >= 0.0 && signal.is_finite()) || !(background > 0.0 && background.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "matched filter needs S >= 0 and B > 0, got S = {signal}, B = {background}"
        )));
    }
    Ok(m)
}

/// Shift of the free-running auxiliary histogram in whole bins.
fn dead_time_bins(cfg: &AcquisitionConfig, m: usize) -> usize {
    ((cfg.dead_time / cfg.bin_size).round() as usize) % m
}

/// Terms of the score that do not depend on the candidate bin.
fn constant_terms(
    mode: DetectorMode,
    h: &Histogram,
    g: Option<&Histogram>,
    signal: f64,
    background: f64,
    cfg: &AcquisitionConfig,
) -> Result<f64> {
    let lambda = signal + background;
    let n = h.total as f64;
    let first_moment =
        |hist: &Histogram| hist.nonzero().map(|(j, c)| c as f64 * hist.bin_center(j)).sum::<f64>() / cfg.period;
    Ok(match mode {
        DetectorMode::Ideal => -(cfg.pulses as f64) * lambda,
        DetectorMode::Synchronous => {
            let armed = h.armed_periods.ok_or(Error::MissingArmedCount)? as f64;
            -(armed - n) * lambda - background * first_moment(h)
        }
        DetectorMode::FreeRunning => {
            let g = g.expect("free-running scores need the shifted histogram");
            let m = h.num_bins();
            let k = dead_time_bins(cfg, m);
            let wraps: u64 = if k == 0 { 0 } else { h.bins[m - k..].iter().sum() };
            -(cfg.pulses as f64) * lambda + background * (first_moment(g) - first_moment(h)) + lambda * wraps as f64
        }
    })
}

fn scores_with(
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    h: &Histogram,
    g: Option<&Histogram>,
    signal: f64,
    background: f64,
) -> Result<Vec<f64>> {
    check_inputs(h, signal, background, cfg)?;
    let constant = constant_terms(mode, h, g, signal, background, cfg)?;
    let wh = counts(h);
    let mut out = log_filter_scores(&wh, signal, background / cfg.period, cfg);
    match mode {
        DetectorMode::Ideal => {}
        DetectorMode::Synchronous => {
            for (o, c) in out.iter_mut().zip(cdf_sums(&wh, cfg)) {
                *o -= signal * c;
            }
        }
        DetectorMode::FreeRunning => {
            let wg = counts(g.expect("checked above"));
            for ((o, ch), cg) in out.iter_mut().zip(cdf_sums(&wh, cfg)).zip(cdf_sums(&wg, cfg)) {
                *o += signal * (cg - ch);
            }
        }
    }
    for o in out.iter_mut() {
        *o += constant;
    }
    Ok(out)
}

/// Log-likelihood of every bin-centre candidate `τ_m` at fixed `(S, B)`.
///
/// Free-running scores use `g = shift_histogram(h, t_d)`; dead times that
/// are not a multiple of the bin size are rounded to the nearest bin.
pub fn matched_filter_scores(
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    h: &Histogram,
    signal: f64,
    background: f64,
) -> Result<Vec<f64>> {
    let g = (mode == DetectorMode::FreeRunning).then(|| shift_histogram(h, cfg.dead_time));
    scores_with(mode, cfg, h, g.as_ref(), signal, background)
}

/// Dense `O(M · nnz)` evaluation of [`matched_filter_scores`].
pub fn matched_filter_scores_direct(
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    h: &Histogram,
    signal: f64,
    background: f64,
) -> Result<Vec<f64>> {
    let m = check_inputs(h, signal, background, cfg)?;
    let g = (mode == DetectorMode::FreeRunning).then(|| shift_histogram(h, cfg.dead_time));
    let constant = constant_terms(mode, h, g.as_ref(), signal, background, cfg)?;
    let b = background / cfg.period;
    let hn: Vec<(usize, f64)> = h.nonzero().map(|(j, c)| (j, c as f64)).collect();
    let gn: Vec<(usize, f64)> = g
        .as_ref()
        .map(|g| g.nonzero().map(|(j, c)| (j, c as f64)).collect())
        .unwrap_or_default();
    let lag = |j: usize, m: usize| (j as f64 - m as f64) * cfg.bin_size;
    Ok((0..m)
        .map(|mm| {
            let mut v = constant;
            for &(j, c) in &hn {
                let t = lag(j, mm);
                v += c * (signal * cfg.pulse.pdf(t) + b).ln();
                if mode != DetectorMode::Ideal {
                    v -= c * signal * cfg.pulse.cdf(t);
                }
            }
            for &(j, c) in &gn {
                v += c * signal * cfg.pulse.cdf(lag(j, mm));
            }
            v
        })
        .collect())
}

fn center_depth(cfg: &AcquisitionConfig, m: usize) -> f64 {
    tof_to_depth((m as f64 + 0.5) * cfg.bin_size)
}

fn require_counts(h: &Histogram) -> Result<()> {
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(())
}

/// Ideal-mode matched-filter time of flight `τ̂ = (m* + ½)Δ`.
pub fn mf_depth_ideal(h: &Histogram, signal: f64, background: f64, cfg: &AcquisitionConfig) -> Result<f64> {
    require_counts(h)?;
    let s = scores_with(DetectorMode::Ideal, cfg, h, None, signal, background)?;
    Ok((argmax_first(&s) as f64 + 0.5) * cfg.bin_size)
}

/// Synchronous-mode matched-filter time of flight; `h.armed_periods` is
/// required.
pub fn mf_depth_sync(h: &Histogram, signal: f64, background: f64, cfg: &AcquisitionConfig) -> Result<f64> {
    require_counts(h)?;
    let s = scores_with(DetectorMode::Synchronous, cfg, h, None, signal, background)?;
    Ok((argmax_first(&s) as f64 + 0.5) * cfg.bin_size)
}

/// Free-running matched-filter time of flight with `g` the histogram shifted
/// by the dead time.
pub fn mf_depth_free(
    h: &Histogram,
    g: &Histogram,
    signal: f64,
    background: f64,
    cfg: &AcquisitionConfig,
) -> Result<f64> {
    require_counts(h)?;
    if g.num_bins() != h.num_bins() {
        return Err(Error::InvalidInput("shifted histogram has a different length".into()));
    }
    let s = scores_with(DetectorMode::FreeRunning, cfg, h, Some(g), signal, background)?;
    Ok((argmax_first(&s) as f64 + 0.5) * cfg.bin_size)
}

/// Matched-filter depth in meters for any mode.
pub fn mf_depth(mode: DetectorMode, h: &Histogram, signal: f64, background: f64, cfg: &AcquisitionConfig) -> Result<f64> {
    require_counts(h)?;
    let s = matched_filter_scores(mode, cfg, h, signal, background)?;
    Ok(center_depth(cfg, argmax_first(&s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PulseProfile, SceneParams};
    use crate::sim::{detect, quantize, sample_arrivals, RngSeed};
    use rand::{Rng, SeedableRng};

    fn coarse(mode: DetectorMode) -> AcquisitionConfig {
        AcquisitionConfig::new(100e-9, 100, 20e-9, mode, 100e-12, PulseProfile::new(0.1e-9).unwrap()).unwrap()
    }

    fn random_histogram(mode: DetectorMode, cfg: &AcquisitionConfig, rng: &mut impl Rng, t: u64) -> (Histogram, SceneParams) {
        let p = SceneParams::new(
            rng.random_range(0.05..3.0),
            rng.random_range(0.05..5.0),
            rng.random_range(0.3..14.5),
        )
        .unwrap();
        let a = sample_arrivals(&p, cfg, &RngSeed::new(77, t));
        let h = quantize(&detect(&a, &cfg.with_mode(mode)), &cfg.with_mode(mode)).unwrap();
        (h, p)
    }

    #[test]
    fn argmax_ties_pick_first() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_first(&[0.0; 5]), 0);
        assert_eq!(argmax_first(&[f64::NAN, -1.0]), 1);
    }

    #[test]
    fn spike_histogram() {
        let cfg = coarse(DetectorMode::Ideal);
        let mut bins = vec![0; 1000];
        bins[417] = 30;
        let h = Histogram::from_bins(bins, cfg.bin_size, Some(100));
        let tau = mf_depth_ideal(&h, 0.3, 0.01, &cfg).unwrap();
        assert!((tau - 417.5 * cfg.bin_size).abs() < 1e-20);
        let tau = mf_depth_sync(&h, 0.3, 0.01, &cfg).unwrap();
        assert!((tau - 417.5 * cfg.bin_size).abs() < 1e-20);
    }

    #[test]
    fn uniform_histogram_ideal_tie_break() {
        // the banded kernel has no edge effects only when it never crosses
        // the first bin, so a flat histogram ties on every interior bin
        let cfg = coarse(DetectorMode::Ideal);
        let h = Histogram::from_bins(vec![1; 1000], cfg.bin_size, None);
        let s = matched_filter_scores(DetectorMode::Ideal, &cfg, &h, 1e-6, 1.0).unwrap();
        let m = argmax_first(&s);
        let best = s[m];
        assert!(s.iter().all(|&v| v <= best));
        assert!(s[..m].iter().all(|&v| v < best));
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let cfg = coarse(DetectorMode::Ideal);
        let h = Histogram::from_bins(vec![0; 1000], cfg.bin_size, Some(100));
        assert!(matches!(mf_depth_ideal(&h, 1.0, 1.0, &cfg), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn small_signal_sync_scores_are_flat() {
        let cfg = coarse(DetectorMode::Synchronous);
        let mut bins = vec![0; 1000];
        bins[10] = 3;
        bins[900] = 2;
        let h = Histogram::from_bins(bins, cfg.bin_size, Some(100));
        let s = matched_filter_scores(DetectorMode::Synchronous, &cfg, &h, 0.0, 1.0).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
        assert_eq!(mf_depth_sync(&h, 0.0, 1.0, &cfg).unwrap(), 0.5 * cfg.bin_size);
    }

    #[test]
    fn fast_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for mode in DetectorMode::ALL {
            let cfg = coarse(mode);
            for t in 0..20 {
                let (h, _) = random_histogram(mode, &cfg, &mut rng, t);
                let s = rng.random_range(0.01..4.0);
                let b = rng.random_range(0.01..4.0);
                let fast = matched_filter_scores(mode, &cfg, &h, s, b).unwrap();
                let direct = matched_filter_scores_direct(mode, &cfg, &h, s, b).unwrap();
                for (a, d) in fast.iter().zip(&direct) {
                    assert!((a - d).abs() <= 1e-9 * d.abs().max(1.0), "{mode}: {a} vs {d}");
                }
            }
        }
    }

    #[test]
    fn scores_equal_binned_loglik() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for mode in DetectorMode::ALL {
            let cfg = coarse(mode);
            let (h, p) = random_histogram(mode, &cfg, &mut rng, 5);
            let s = matched_filter_scores(mode, &cfg, &h, p.signal, p.background).unwrap();
            for m in [0usize, 1, 250, 733, 999] {
                let q = SceneParams::new(p.signal, p.background, center_depth(&cfg, m)).unwrap();
                let l = crate::likelihood::loglik(mode, &q, &cfg, (&h).into()).unwrap().value;
                assert!((s[m] - l).abs() <= 1e-9 * l.abs(), "{mode} m={m}: {} vs {l}", s[m]);
            }
        }
    }

    #[test]
    fn equivariant_under_shifts_away_from_edges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for mode in [DetectorMode::Ideal, DetectorMode::FreeRunning] {
            let cfg = coarse(mode);
            for t in 0..20 {
                let p = SceneParams::new(2.0, 0.2, rng.random_range(4.0..6.0)).unwrap();
                let a = sample_arrivals(&p, &cfg, &RngSeed::new(31, t));
                let h = quantize(&detect(&a, &cfg), &cfg).unwrap();
                let k = rng.random_range(1..300usize);
                let shifted = shift_histogram(&h, k as f64 * cfg.bin_size);
                let m0 = argmax_first(&matched_filter_scores(mode, &cfg, &h, 2.0, 0.2).unwrap());
                let m1 = argmax_first(&matched_filter_scores(mode, &cfg, &shifted, 2.0, 0.2).unwrap());
                assert_eq!(m1, m0 + k, "{mode}");
            }
        }
    }

    #[test]
    fn free_without_dead_time_reduces_to_ideal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(24);
        let cfg = coarse(DetectorMode::FreeRunning).with_dead_time(0.0).unwrap();
        for t in 0..10 {
            let (h, p) = random_histogram(DetectorMode::FreeRunning, &cfg, &mut rng, t);
            if h.total == 0 {
                continue;
            }
            let a = mf_depth_free(&h, &h, p.signal, p.background, &cfg).unwrap();
            let b = mf_depth_ideal(&h, p.signal, p.background, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }
}
