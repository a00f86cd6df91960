//! Scene and acquisition parameters together with the closed-form pulse,
//! intensity and cumulative-flux functions.
//!
//! Times are seconds throughout. The pulse CDF is the Gaussian CDF centred
//! at zero, so `F(-inf) = 0` and `F(+inf) = 1`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Half-width of the region, in pulse widths, where the pulse is considered
/// non-negligible when checking period-boundary truncation.
const PULSE_SUPPORT_WIDTHS: f64 = 8.0;

/// Converts a depth in meters to a round-trip time of flight.
#[inline]
pub fn depth_to_tof(depth: f64) -> f64 {
    2.0 * depth / SPEED_OF_LIGHT
}

/// Converts a round-trip time of flight to a depth in meters.
#[inline]
pub fn tof_to_depth(tof: f64) -> f64 {
    0.5 * SPEED_OF_LIGHT * tof
}

/// Gaussian laser pulse profile with RMS width `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    width: f64,
}

impl PulseProfile {
    pub fn new(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::config("pulse_width", format!("must be > 0, got {width}")));
        }
        Ok(Self { width })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.width
    }

    /// `f(t) = exp(-t²/(2w²)) / (√(2π) w)`.
    #[inline]
    pub fn pdf(&self, t: f64) -> f64 {
        let u = t / self.width;
        (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * self.width)
    }

    /// `f'(t) = -t/w² · f(t)`.
    #[inline]
    pub fn pdf_derivative(&self, t: f64) -> f64 {
        -t / (self.width * self.width) * self.pdf(t)
    }

    /// Gaussian CDF `F(t) = ∫_{-∞}^t f`.
    #[inline]
    pub fn cdf(&self, t: f64) -> f64 {
        0.5 * libm::erfc(-t / (SQRT_2 * self.width))
    }

    /// `log f(t)`, finite everywhere.
    #[inline]
    pub fn log_pdf(&self, t: f64) -> f64 {
        let u = t / self.width;
        -0.5 * u * u - ((2.0 * PI).sqrt() * self.width).ln()
    }
}

/// Detector reactivation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorMode {
    #[serde(rename = "ideal")]
    Ideal,
    #[serde(rename = "sync")]
    Synchronous,
    #[serde(rename = "free")]
    FreeRunning,
}

impl DetectorMode {
    pub const ALL: [DetectorMode; 3] = [
        DetectorMode::Ideal,
        DetectorMode::Synchronous,
        DetectorMode::FreeRunning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorMode::Ideal => "ideal",
            DetectorMode::Synchronous => "sync",
            DetectorMode::FreeRunning => "free",
        }
    }
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(DetectorMode::Ideal),
            "sync" | "synchronous" => Ok(DetectorMode::Synchronous),
            "free" | "free-running" | "freerunning" => Ok(DetectorMode::FreeRunning),
            other => Err(Error::config("mode", format!("unknown detector mode `{other}`"))),
        }
    }
}

/// Per-pixel unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Mean signal detections per repetition period.
    pub signal: f64,
    /// Mean background detections per repetition period.
    pub background: f64,
    /// Depth in meters.
    pub depth: f64,
}

impl SceneParams {
    pub fn new(signal: f64, background: f64, depth: f64) -> Result<Self> {
        let p = Self {
            signal,
            background,
            depth,
        };
        p.check_fluxes()?;
        Ok(p)
    }

    fn check_fluxes(&self) -> Result<()> {
        if !(self.signal.is_finite() && self.signal >= 0.0) {
            return Err(Error::config("signal", format!("must be >= 0, got {}", self.signal)));
        }
        if !(self.background.is_finite() && self.background >= 0.0) {
            return Err(Error::config(
                "background",
                format!("must be >= 0, got {}", self.background),
            ));
        }
        if !self.depth.is_finite() {
            return Err(Error::config("depth", "must be finite"));
        }
        Ok(())
    }

    /// Checks fluxes and `0 <= z < z_max`.
    pub fn validate(&self, cfg: &AcquisitionConfig) -> Result<()> {
        self.check_fluxes()?;
        if !(self.depth >= 0.0 && self.depth < cfg.max_depth()) {
            return Err(Error::config(
                "depth",
                format!("must lie in [0, {}), got {}", cfg.max_depth(), self.depth),
            ));
        }
        let tof = self.tof();
        let margin = PULSE_SUPPORT_WIDTHS * cfg.pulse.width();
        if self.signal > 0.0 && (tof < margin || tof > cfg.period - margin) {
            log::warn!(
                "time of flight {tof:e} s is within {PULSE_SUPPORT_WIDTHS} pulse widths of a period boundary; pulse tails are truncated"
            );
        }
        Ok(())
    }

    #[inline]
    pub fn tof(&self) -> f64 {
        depth_to_tof(self.depth)
    }

    #[inline]
    pub fn total_flux(&self) -> f64 {
        self.signal + self.background
    }

    /// Signal-to-background ratio; infinite when there is no background.
    pub fn sbr(&self) -> f64 {
        self.signal / self.background
    }

    /// `b = B / t_r`.
    #[inline]
    pub fn background_intensity(&self, period: f64) -> f64 {
        self.background / period
    }
}

/// System constants shared by every pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Repetition period `t_r` in seconds.
    pub period: f64,
    /// Number of laser pulses `n_r`.
    pub pulses: u64,
    /// Dead time `t_d` in seconds.
    pub dead_time: f64,
    pub mode: DetectorMode,
    /// Histogram bin size in seconds.
    pub bin_size: f64,
    pub pulse: PulseProfile,
    /// Optional synchronous gate: the detector only accepts relative times
    /// below this value. `None` arms the full period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_window: Option<f64>,
}

impl AcquisitionConfig {
    pub fn new(
        period: f64,
        pulses: u64,
        dead_time: f64,
        mode: DetectorMode,
        bin_size: f64,
        pulse: PulseProfile,
    ) -> Result<Self> {
        let cfg = Self {
            period,
            pulses,
            dead_time,
            mode,
            bin_size,
            pulse,
            gate_window: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Simulation defaults: `t_r = 100 ns`, `n_r = 100`, `t_d = 20 ns`,
    /// 10 ps bins and a 0.1 ns pulse.
    pub fn simulation_default(mode: DetectorMode) -> Self {
        Self {
            period: 100e-9,
            pulses: 100,
            dead_time: 20e-9,
            mode,
            bin_size: 10e-12,
            pulse: PulseProfile { width: 0.1e-9 },
            gate_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::config("period", format!("must be > 0, got {}", self.period)));
        }
        if self.pulses == 0 {
            return Err(Error::config("pulses", "must be >= 1"));
        }
        if !(self.dead_time >= 0.0 && self.dead_time < self.period) {
            return Err(Error::config(
                "dead_time",
                format!("must lie in [0, period), got {}", self.dead_time),
            ));
        }
        if !(self.bin_size.is_finite() && self.bin_size > 0.0) {
            return Err(Error::config("bin_size", format!("must be > 0, got {}", self.bin_size)));
        }
        PulseProfile::new(self.pulse.width)?;
        if let Some(gate) = self.gate_window {
            if !(gate > 0.0 && gate <= self.period) {
                return Err(Error::config("gate_window", "must lie in (0, period]"));
            }
        }
        self.num_bins().map(|_| ())
    }

    /// `M = t_r / Δ`; errors when the bin size does not tile the period.
    pub fn num_bins(&self) -> Result<usize> {
        let ratio = self.period / self.bin_size;
        let m = ratio.round();
        if m < 1.0 || ((m * self.bin_size - self.period).abs() > 1e-9 * self.period) {
            return Err(Error::config(
                "bin_size",
                format!("{} s does not tile the period {} s", self.bin_size, self.period),
            ));
        }
        Ok(m as usize)
    }

    /// Unambiguous range `z_max = c t_r / 2`.
    #[inline]
    pub fn max_depth(&self) -> f64 {
        tof_to_depth(self.period)
    }

    #[inline]
    pub fn acquisition_time(&self) -> f64 {
        self.period * self.pulses as f64
    }

    pub fn with_mode(mut self, mode: DetectorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_dead_time(mut self, dead_time: f64) -> Result<Self> {
        self.dead_time = dead_time;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bin_size(mut self, bin_size: f64) -> Result<Self> {
        self.bin_size = bin_size;
        self.validate()?;
        Ok(self)
    }
}

/// `λ̃(t) = S f(t - 2z/c) + B/t_r` for `t` in `[0, t_r)`.
pub fn single_period_intensity(p: &SceneParams, cfg: &AcquisitionConfig, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t < cfg.period) {
        return Err(Error::Domain(format!("t = {t:e} outside [0, t_r)")));
    }
    Ok(p.signal * cfg.pulse.pdf(t - p.tof()) + p.background_intensity(cfg.period))
}

/// `Φ̃(t) = S F(t - 2z/c) + B t / t_r` for `t` in `[0, t_r]`.
pub fn single_period_cumulative_flux(
    p: &SceneParams,
    cfg: &AcquisitionConfig,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0 && t <= cfg.period) {
        return Err(Error::Domain(format!("t = {t:e} outside [0, t_r]")));
    }
    Ok(p.signal * cfg.pulse.cdf(t - p.tof()) + p.background * t / cfg.period)
}

/// Multi-period cumulative flux `Φ(t) = Φ̃(t mod t_r) + ⌊t/t_r⌋ Λ`, `t >= 0`.
pub fn cumulative_flux(p: &SceneParams, cfg: &AcquisitionConfig, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t = {t:e} must be >= 0")));
    }
    let (k, x) = split_time(t, cfg.period);
    Ok(single_period_cumulative_flux(p, cfg, x)? + k as f64 * p.total_flux())
}

/// Splits an absolute time into `(period index, relative time)` with the
/// relative time in `[0, t_r)`.
#[inline]
pub fn split_time(t: f64, period: f64) -> (u64, f64) {
    let mut k = (t / period).floor();
    let mut x = t - k * period;
    if x < 0.0 {
        k -= 1.0;
        x += period;
    } else if x >= period {
        k += 1.0;
        x -= period;
    }
    (k.max(0.0) as u64, x.clamp(0.0, period * (1.0 - f64::EPSILON)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, depth)
    }

    #[test]
    fn pdf_peak_and_symmetry() {
        let pulse = PulseProfile::new(0.1e-9).unwrap();
        let peak = pulse.pdf(0.0);
        assert!((peak * 1e-9 - 3.989_422_804_014_327).abs() < 1e-12);
        let expected = peak * (-0.5f64).exp();
        assert!((pulse.pdf(0.1e-9) - expected).abs() < 1e-6 * peak);
        assert_eq!(pulse.pdf(0.1e-9), pulse.pdf(-0.1e-9));
    }

    #[test]
    fn pdf_integrates_to_one() {
        let pulse = PulseProfile::new(0.231e-9).unwrap();
        let w = pulse.width();
        // integrate in units of w to keep the quadrature well scaled
        let f = |u: f64| pulse.pdf(u * w) * w;
        let total = simpson(&f, -8.0, 8.0, 1e-14, 40);
        assert!((total - 1.0).abs() < 1e-9, "total = {total}");
    }

    #[test]
    fn cdf_values() {
        let pulse = PulseProfile::new(0.1e-9).unwrap();
        let w = pulse.width();
        assert!((pulse.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((pulse.cdf(8.0 * w) - 1.0).abs() < 1e-9);
        let f = |u: f64| pulse.pdf(u * w) * w;
        let oracle = 0.5 + simpson(&f, 0.0, 1.0, 1e-15, 40);
        assert!((pulse.cdf(w) - oracle).abs() < 1e-12);
        assert!((pulse.cdf(w) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn intensity_closed_forms() {
        let cfg = AcquisitionConfig::simulation_default(DetectorMode::Ideal);
        let p = SceneParams::new(0.0, 1.0, 3.0).unwrap();
        for t in [0.0, 10e-9, 99e-9] {
            assert_eq!(single_period_intensity(&p, &cfg, t).unwrap(), 1.0 / cfg.period);
        }
        let p = SceneParams::new(1.0, 0.0, 7.0).unwrap();
        let v = single_period_intensity(&p, &cfg, p.tof()).unwrap();
        assert_eq!(v, cfg.pulse.pdf(0.0));
        let p = SceneParams::new(1.0, 1.0, 7.0).unwrap();
        let v = single_period_intensity(&p, &cfg, p.tof()).unwrap();
        assert!((v * 1e-9 - (3.989_422_804_014_327 + 0.01)).abs() < 1e-9);
        assert!(single_period_intensity(&p, &cfg, cfg.period).is_err());
        assert!(single_period_intensity(&p, &cfg, -1e-12).is_err());
    }

    #[test]
    fn cumulative_flux_identities() {
        let cfg = AcquisitionConfig::simulation_default(DetectorMode::Ideal);
        let p = SceneParams::new(1.0, 1.0, cfg.max_depth() / 2.0).unwrap();
        assert!(single_period_cumulative_flux(&p, &cfg, 0.0).unwrap().abs() < 1e-300);
        let full = single_period_cumulative_flux(&p, &cfg, cfg.period).unwrap();
        assert!((full - 2.0).abs() < 1e-9);
        let lhs = cumulative_flux(&p, &cfg, 2.5 * cfg.period).unwrap();
        let rhs = single_period_cumulative_flux(&p, &cfg, 0.5 * cfg.period).unwrap() + 2.0 * 2.0;
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(cumulative_flux(&p, &cfg, -1.0).is_err());
    }

    #[test]
    fn flux_derivative_matches_intensity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = AcquisitionConfig::simulation_default(DetectorMode::Ideal);
        for _ in 0..1000 {
            let p = SceneParams::new(
                rng.random_range(0.0..5.0),
                rng.random_range(0.01..5.0),
                rng.random_range(0.5..14.0),
            )
            .unwrap();
            let t = rng.random_range(1e-9..99e-9);
            let h = 1e-14;
            let d = (single_period_cumulative_flux(&p, &cfg, t + h).unwrap()
                - single_period_cumulative_flux(&p, &cfg, t - h).unwrap())
                / (2.0 * h);
            let lam = single_period_intensity(&p, &cfg, t).unwrap();
            assert!(((d - lam) / lam).abs() < 1e-6, "d = {d}, lam = {lam}");
        }
    }

    #[test]
    fn config_validation() {
        let pulse = PulseProfile::new(1e-10).unwrap();
        assert!(AcquisitionConfig::new(1e-7, 0, 0.0, DetectorMode::Ideal, 1e-11, pulse).is_err());
        assert!(AcquisitionConfig::new(1e-7, 10, 1e-7, DetectorMode::Ideal, 1e-11, pulse).is_err());
        assert!(AcquisitionConfig::new(1e-7, 10, 0.0, DetectorMode::Ideal, 3e-11, pulse).is_err());
        let cfg = AcquisitionConfig::new(1e-7, 10, 2e-8, DetectorMode::Ideal, 1e-11, pulse).unwrap();
        assert_eq!(cfg.num_bins().unwrap(), 10_000);
        assert!((cfg.max_depth() - 14.989_622_9).abs() < 1e-6);
        assert!(PulseProfile::new(0.0).is_err());
    }

    #[test]
    fn split_time_is_consistent() {
        let (k, x) = split_time(2.5e-7, 1e-7);
        assert_eq!(k, 2);
        assert!((x - 0.5e-7).abs() < 1e-20);
        let (k, x) = split_time(0.0, 1e-7);
        assert_eq!((k, x), (0, 0.0));
    }
}
