//! Monte-Carlo parameter sweeps.
//!
//! Trial `t` uses the random stream `t` at every sweep point and for every
//! detector mode, so all modes see the same photon arrivals (common random
//! numbers). Trials run in parallel and are aggregated in trial order, which
//! makes the output independent of the thread count.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mae, nrmse, rmse, MetricRow};
use crate::error::{Error, Result};
use crate::estimation::{coates_peak, joint_ml, mf_depth, Estimate, EstimateFlags, JointConfig, Refinement};
use crate::model::{AcquisitionConfig, DetectorMode, PulseProfile, SceneParams};
use crate::sim::{detect, quantize, sample_arrivals_with, RngSeed};

/// Quantity varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "S")]
    Signal,
    #[serde(rename = "SBR")]
    Sbr,
    #[serde(rename = "z")]
    Depth,
    #[serde(rename = "t_d")]
    DeadTime,
    /// Total flux `Λ = S + B` at fixed SBR.
    #[serde(rename = "Lambda", alias = "Λ")]
    TotalFlux,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::Signal => "S",
            SweepVariable::Sbr => "SBR",
            SweepVariable::Depth => "z",
            SweepVariable::DeadTime => "t_d",
            SweepVariable::TotalFlux => "Lambda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Joint ML over `(S, B, z)`.
    Joint,
    /// Matched-filter depth with the true fluxes.
    KnownFluxMf,
    /// Coates-corrected histogram peak; synchronous data only.
    CoatesPeak,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Joint => "joint",
            EstimatorKind::KnownFluxMf => "known_flux_mf",
            EstimatorKind::CoatesPeak => "coates_peak",
        }
    }

    fn applies_to(&self, mode: DetectorMode) -> bool {
        *self != EstimatorKind::CoatesPeak || mode == DetectorMode::Synchronous
    }
}

fn default_signal() -> f64 {
    1.0
}
fn default_period() -> f64 {
    100e-9
}
fn default_pulses() -> u64 {
    100
}
fn default_dead_time() -> f64 {
    20e-9
}
fn default_bin_size() -> f64 {
    10e-12
}
fn default_pulse_width() -> f64 {
    0.1e-9
}
fn default_modes() -> Vec<DetectorMode> {
    DetectorMode::ALL.to_vec()
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Joint]
}
fn default_trials() -> usize {
    1000
}

/// A sweep description. Exactly one of `sbr` and `background` fixes the
/// background flux; a missing `depth` draws it per trial from
/// `U(0.1, 0.9) z_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default = "default_signal")]
    pub signal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_pulses")]
    pub pulses: u64,
    #[serde(default = "default_dead_time")]
    pub dead_time: f64,
    #[serde(default = "default_bin_size")]
    pub bin_size: f64,
    #[serde(default = "default_pulse_width")]
    pub pulse_width: f64,
    #[serde(default = "default_modes")]
    pub modes: Vec<DetectorMode>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub refinement: Refinement,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Adds a mean-runtime column; wall times make the output
    /// non-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(variable: SweepVariable, values: Vec<f64>) -> Self {
        Self {
            variable,
            values,
            signal: default_signal(),
            sbr: None,
            background: None,
            depth: None,
            period: default_period(),
            pulses: default_pulses(),
            dead_time: default_dead_time(),
            bin_size: default_bin_size(),
            pulse_width: default_pulse_width(),
            modes: default_modes(),
            estimators: default_estimators(),
            refinement: Refinement::default(),
            trials: default_trials(),
            seed: 0,
            timing: false,
            output: None,
        }
    }

    /// Parses JSON; errors name the file, line and offending field.
    pub fn from_json(text: &str, file: &std::path::Path) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::config("experiment", format!("{}:{}: {e}", file.display(), e.line())))
    }

    /// Base acquisition config for `mode` at the fixed dead time.
    pub fn acquisition(&self, mode: DetectorMode) -> Result<AcquisitionConfig> {
        AcquisitionConfig::new(
            self.period,
            self.pulses,
            self.dead_time,
            mode,
            self.bin_size,
            PulseProfile::new(self.pulse_width)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.values.is_empty() {
            return Err(Error::config("values", "sweep grid is empty"));
        }
        if self.modes.is_empty() || self.estimators.is_empty() {
            return Err(Error::config("modes", "need at least one mode and one estimator"));
        }
        if let Some(r) = self.sbr {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config("sbr", "must be > 0"));
            }
        }
        match self.variable {
            SweepVariable::Sbr => {
                if self.sbr.is_some() || self.background.is_some() {
                    return Err(Error::config("sbr", "an SBR sweep derives the background from `signal`"));
                }
            }
            SweepVariable::TotalFlux => {
                if self.sbr.is_none() || self.background.is_some() {
                    return Err(Error::config("sbr", "a total-flux sweep needs `sbr` and no `background`"));
                }
            }
            _ => {
                if self.sbr.is_some() == self.background.is_some() {
                    return Err(Error::config("sbr", "set exactly one of `sbr` and `background`"));
                }
            }
        }
        for &v in &self.values {
            let (p, cfg) = self.point(v, self.modes[0])?;
            p.validate(&cfg)?;
        }
        Ok(())
    }

    /// True parameters at sweep value `v`. Without a fixed depth the
    /// returned depth is a placeholder replaced in every trial.
    fn point(&self, v: f64, mode: DetectorMode) -> Result<(SceneParams, AcquisitionConfig)> {
        let mut cfg = self.acquisition(mode)?;
        let mut s = self.signal;
        let mut depth = self.depth;
        let background = |s: f64| match (self.background, self.sbr) {
            (Some(b), _) => b,
            (None, Some(r)) => s / r,
            (None, None) => f64::NAN,
        };
        let b = match self.variable {
            SweepVariable::Signal => {
                s = v;
                background(s)
            }
            SweepVariable::Sbr => {
                if !(v > 0.0) {
                    return Err(Error::config("values", "SBR values must be > 0"));
                }
                s / v
            }
            SweepVariable::Depth => {
                depth = Some(v);
                background(s)
            }
            SweepVariable::DeadTime => {
                cfg = cfg.with_dead_time(v)?;
                background(s)
            }
            SweepVariable::TotalFlux => {
                let r = self.sbr.unwrap_or(f64::NAN);
                s = v * r / (1.0 + r);
                v / (1.0 + r)
            }
        };
        let z = depth.unwrap_or(0.5 * cfg.max_depth());
        Ok((SceneParams::new(s, b, z)?, cfg))
    }
}

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub truth: SceneParams,
    pub estimate: Estimate,
    pub runtime: f64,
}

/// Every trial of one `(sweep value, mode, estimator)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub mode: DetectorMode,
    pub estimator: EstimatorKind,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<MetricRow>,
}

fn run_estimator(
    kind: EstimatorKind,
    h: &crate::sim::Histogram,
    truth: &SceneParams,
    cfg: &AcquisitionConfig,
    jc: &JointConfig,
) -> Result<Estimate> {
    match kind {
        EstimatorKind::Joint => joint_ml(h.into(), cfg.mode, cfg, jc),
        EstimatorKind::KnownFluxMf => Ok(Estimate {
            signal: truth.signal,
            background: truth.background,
            depth: mf_depth(cfg.mode, h, truth.signal, truth.background, cfg)?,
            iterations: 1,
            objective: f64::NAN,
            flags: if h.total == 0 {
                EstimateFlags::DEGENERATE
            } else {
                EstimateFlags::empty()
            },
        }),
        EstimatorKind::CoatesPeak => coates_peak(h, h.armed_periods.ok_or(Error::MissingArmedCount)?, cfg),
    }
}

/// One trial for every mode and estimator, in `(mode, estimator)` order.
fn run_trial(
    cfg: &ExperimentConfig,
    t: usize,
    acq: &[AcquisitionConfig],
    template: &SceneParams,
) -> Result<Vec<TrialRecord>> {
    let mut rng = RngSeed::new(cfg.seed, t as u64).rng();
    let mut truth = *template;
    if cfg.depth.is_none() && cfg.variable != SweepVariable::Depth {
        let zmax = acq[0].max_depth();
        truth.depth = zmax * rng.random_range(0.1..0.9);
    }
    let arrivals = sample_arrivals_with(&truth, &acq[0], &mut rng);
    let mut out = Vec::new();
    for a in acq {
        let h = quantize(&detect(&arrivals, a), a)?;
        let jc = JointConfig {
            refinement: cfg.refinement,
            ..JointConfig::new(a)
        };
        for &kind in cfg.estimators.iter().filter(|k| k.applies_to(a.mode)) {
            let start = Instant::now();
            let estimate = run_estimator(kind, &h, &truth, a, &jc)?;
            out.push(TrialRecord {
                trial: t,
                truth,
                estimate,
                runtime: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(out)
}

fn summarize(variable: SweepVariable, cell: &SweepCell, timing: bool) -> MetricRow {
    let r = &cell.records;
    let truth = r[0].truth;
    let rmse_s = rmse(r.iter().map(|x| (x.estimate.signal, x.truth.signal)));
    let rmse_b = rmse(r.iter().map(|x| (x.estimate.background, x.truth.background)));
    MetricRow {
        variable: variable.as_str().into(),
        value: cell.value,
        mode: cell.mode,
        estimator: cell.estimator.as_str().into(),
        trials: r.len(),
        signal: truth.signal,
        background: truth.background,
        rmse_signal: rmse_s,
        nrmse_signal: nrmse(rmse_s, truth.signal),
        rmse_background: rmse_b,
        nrmse_background: nrmse(rmse_b, truth.background),
        rmse_depth: rmse(r.iter().map(|x| (x.estimate.depth, x.truth.depth))),
        mae_depth: mae(r.iter().map(|x| (x.estimate.depth, x.truth.depth))),
        mean_runtime: timing.then(|| r.iter().map(|x| x.runtime).collect::<super::KahanSum>().value() / r.len() as f64),
    }
}

/// Runs every sweep point, mode and estimator.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &v in &cfg.values {
        let mut acq = Vec::with_capacity(cfg.modes.len());
        let mut template = None;
        for &mode in &cfg.modes {
            let (p, a) = cfg.point(v, mode)?;
            template = Some(p);
            acq.push(a);
        }
        let template = template.expect("validated: at least one mode");
        let trials: Result<Vec<Vec<TrialRecord>>> =
            (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t, &acq, &template)).collect();
        let trials = trials?;
        let mut slot = 0;
        for a in &acq {
            for &kind in cfg.estimators.iter().filter(|k| k.applies_to(a.mode)) {
                cells.push(SweepCell {
                    value: v,
                    mode: a.mode,
                    estimator: kind,
                    records: trials.iter().map(|t| t[slot]).collect(),
                });
                slot += 1;
            }
        }
    }
    let rows = cells.iter().map(|c| summarize(cfg.variable, c, cfg.timing)).collect();
    Ok(SweepResult {
        variable: cfg.variable,
        cells,
        rows,
    })
}

pub const TRIAL_HEADER: &str = "variable,value,mode,estimator,trial,S,B,z,S_hat,B_hat,z_hat,flags";

/// Raw per-trial dump, one line per trial and cell.
pub fn write_trials(result: &SweepResult, mut out: impl Write) -> Result<()> {
    writeln!(out, "{TRIAL_HEADER}")?;
    for c in &result.cells {
        for r in &c.records {
            writeln!(
                out,
                "{},{:e},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                result.variable.as_str(),
                c.value,
                c.mode,
                c.estimator.as_str(),
                r.trial,
                r.truth.signal,
                r.truth.background,
                r.truth.depth,
                r.estimate.signal,
                r.estimate.background,
                r.estimate.depth,
                r.estimate.flags
            )?;
        }
    }
    Ok(())
}

/// Grid flux minimizing `RMSE(ẑ)` for one SBR, mode and estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalFlux {
    pub sbr: f64,
    pub mode: DetectorMode,
    pub estimator: String,
    pub flux: f64,
    pub rmse_depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalFluxReport {
    pub optima: Vec<OptimalFlux>,
    /// Full `RMSE` curves, one sweep per SBR.
    pub curves: Vec<MetricRow>,
}

/// Total-flux sweeps of `base` at each SBR; ties go to the smaller flux.
pub fn find_optimal_flux(base: &ExperimentConfig, sbrs: &[f64], grid: &[f64]) -> Result<OptimalFluxReport> {
    if sbrs.is_empty() || grid.is_empty() {
        return Err(Error::config("grid", "need at least one SBR and one flux value"));
    }
    let mut optima = Vec::new();
    let mut curves = Vec::new();
    for &sbr in sbrs {
        let cfg = ExperimentConfig {
            variable: SweepVariable::TotalFlux,
            values: grid.to_vec(),
            sbr: Some(sbr),
            background: None,
            ..base.clone()
        };
        let result = run_sweep(&cfg)?;
        let mut keys: Vec<(DetectorMode, String)> = Vec::new();
        for r in &result.rows {
            if !keys.iter().any(|k| k.0 == r.mode && k.1 == r.estimator) {
                keys.push((r.mode, r.estimator.clone()));
            }
        }
        for (mode, est) in keys {
            let best = result
                .rows
                .iter()
                .filter(|r| r.mode == mode && r.estimator == est)
                .fold(None::<&MetricRow>, |acc, r| match acc {
                    Some(a) if a.rmse_depth <= r.rmse_depth || r.rmse_depth.is_nan() => Some(a),
                    _ => Some(r),
                })
                .expect("every key has rows");
            optima.push(OptimalFlux {
                sbr,
                mode,
                estimator: est,
                flux: best.value,
                rmse_depth: best.rmse_depth,
            });
        }
        curves.extend(result.rows);
    }
    Ok(OptimalFluxReport { optima, curves })
}

pub const OPTIMAL_HEADER: &str = "SBR,mode,estimator,flux_opt,rmse_z";

pub fn write_optima(optima: &[OptimalFlux], mut out: impl Write) -> Result<()> {
    writeln!(out, "{OPTIMAL_HEADER}")?;
    for o in optima {
        writeln!(out, "{:e},{},{},{:e},{:e}", o.sbr, o.mode, o.estimator, o.flux, o.rmse_depth)?;
    }
    Ok(())
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
