//! Error metrics with compensated summation.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::model::DetectorMode;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        iter.into_iter().for_each(|x| k.add(x));
        k
    }
}

/// `sqrt(mean((est - truth)²))`; `NaN` for empty input.
pub fn rmse(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut n, mut k) = (0usize, KahanSum::default());
    for (e, t) in pairs {
        k.add((e - t) * (e - t));
        n += 1;
    }
    (k.value() / n as f64).sqrt()
}

/// `mean(|est - truth|)`; `NaN` for empty input.
pub fn mae(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut n, mut k) = (0usize, KahanSum::default());
    for (e, t) in pairs {
        k.add((e - t).abs());
        n += 1;
    }
    k.value() / n as f64
}

/// `RMSE / truth`; `NaN` when the true value is zero.
pub fn nrmse(rmse: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        f64::NAN
    } else {
        rmse / truth.abs()
    }
}

/// Aggregate accuracy of one estimator at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub variable: String,
    pub value: f64,
    pub mode: DetectorMode,
    pub estimator: String,
    pub trials: usize,
    pub signal: f64,
    pub background: f64,
    pub rmse_signal: f64,
    pub nrmse_signal: f64,
    pub rmse_background: f64,
    pub nrmse_background: f64,
    pub rmse_depth: f64,
    pub mae_depth: f64,
    /// Mean estimator wall time per trial, simulation excluded.
    pub mean_runtime: Option<f64>,
}

pub const METRIC_HEADER: &str =
    "variable,value,mode,estimator,trials,S,B,rmse_S,nrmse_S,rmse_B,nrmse_B,rmse_z,mae_z";

/// Writes the metric table. The runtime column appears only when every
/// row carries a runtime.
pub fn write_metrics(rows: &[MetricRow], mut out: impl Write) -> Result<()> {
    let timing = !rows.is_empty() && rows.iter().all(|r| r.mean_runtime.is_some());
    write!(out, "{METRIC_HEADER}")?;
    if timing {
        write!(out, ",mean_runtime_s")?;
    }
    writeln!(out)?;
    for r in rows {
        write!(
            out,
            "{},{:e},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.variable,
            r.value,
            r.mode,
            r.estimator,
            r.trials,
            r.signal,
            r.background,
            r.rmse_signal,
            r.nrmse_signal,
            r.rmse_background,
            r.nrmse_background,
            r.rmse_depth,
            r.mae_depth
        )?;
        if timing {
            write!(out, ",{:e}", r.mean_runtime.unwrap_or(f64::NAN))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
