//! File formats: histogram CSV with a JSON sidecar, detection-time lists,
//! per-pixel estimate tables and ASCII PLY point clouds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Estimate;
use crate::model::{AcquisitionConfig, DetectorMode, PulseProfile};
use crate::sim::{DetectionSet, Histogram};
use crate::ssdr::Point;

/// Acquisition metadata stored next to a histogram as `<stem>.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub t_r: f64,
    pub n_r: u64,
    pub t_d: f64,
    pub bin_size: f64,
    pub mode: DetectorMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub armed_periods: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_width: Option<f64>,
}

impl Sidecar {
    pub fn new(cfg: &AcquisitionConfig, h: &Histogram) -> Self {
        Self {
            t_r: cfg.period,
            n_r: cfg.pulses,
            t_d: cfg.dead_time,
            bin_size: h.bin_size,
            mode: cfg.mode,
            armed_periods: h.armed_periods,
            pulse_width: Some(cfg.pulse.width()),
        }
    }

    /// Acquisition config; the pulse width defaults to `default_width`.
    pub fn config(&self, default_width: f64) -> Result<AcquisitionConfig> {
        let pulse = PulseProfile::new(self.pulse_width.unwrap_or(default_width))?;
        AcquisitionConfig::new(self.t_r, self.n_r, self.t_d, self.mode, self.bin_size, pulse)
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_histogram_csv(h: &Histogram, mut out: impl Write) -> Result<()> {
    writeln!(out, "bin_index,count")?;
    for (m, c) in h.bins.iter().enumerate() {
        writeln!(out, "{m},{c}")?;
    }
    Ok(())
}

/// Writes `path` and its sidecar.
pub fn save_histogram(path: &Path, h: &Histogram, cfg: &AcquisitionConfig) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_histogram_csv(h, &mut out)?;
    out.flush()?;
    let json = serde_json::to_string_pretty(&Sidecar::new(cfg, h)).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads the bin counts; rows may come in any order but must cover
/// `0..M` exactly once.
pub fn read_histogram_csv(path: &Path, input: impl BufRead) -> Result<Vec<u64>> {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut header = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !header {
            if line.replace(' ', "") != "bin_index,count" {
                return Err(Error::format(path, n, format!("expected header `bin_index,count`, got `{line}`")));
            }
            header = true;
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::format(path, n, "expected two comma-separated fields"))?;
        let idx: usize = a.trim().parse().map_err(|e| Error::format(path, n, format!("bad bin index: {e}")))?;
        let c: u64 = b.trim().parse().map_err(|e| Error::format(path, n, format!("bad count: {e}")))?;
        if counts.insert(idx, c).is_some() {
            return Err(Error::format(path, n, format!("duplicate bin index {idx}")));
        }
    }
    if !header {
        return Err(Error::format(path, 1, "empty file"));
    }
    let m = counts.len();
    if let Some((&last, _)) = counts.last_key_value() {
        if last + 1 != m {
            return Err(Error::format(path, 0, format!("bin indices do not cover 0..{m}")));
        }
    }
    Ok(counts.into_values().collect())
}

/// Loads a histogram and its sidecar, checking the bin count against the
/// period.
pub fn load_histogram(path: &Path, default_width: f64) -> Result<(Histogram, AcquisitionConfig)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::format(&side, 0, format!("cannot read sidecar: {e}")))?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(&side, e.line(), e.to_string()))?;
    let cfg = meta.config(default_width).map_err(|e| Error::format(&side, 0, e.to_string()))?;
    let f = File::open(path).map_err(|e| Error::format(path, 0, format!("cannot open: {e}")))?;
    let bins = read_histogram_csv(path, BufReader::new(f))?;
    let m = cfg.num_bins()?;
    if bins.len() != m {
        return Err(Error::format(path, 0, format!("{} bins but the sidecar implies {m}", bins.len())));
    }
    if cfg.mode == DetectorMode::Synchronous && meta.armed_periods.is_none() {
        return Err(Error::format(&side, 0, "synchronous data needs `armed_periods`"));
    }
    Ok((Histogram::from_bins(bins, meta.bin_size, meta.armed_periods), cfg))
}

/// Histograms of a directory of `<name>_<pixel>.csv` files.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedSet {
    pub config: AcquisitionConfig,
    /// Sorted by pixel index.
    pub pixels: Vec<(usize, Histogram)>,
}

fn pixel_index(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit_once('_')?.1.parse().ok()
}

/// Reads every `*_<index>.csv` in `dir`. All files must agree on the
/// acquisition config, in particular the bin size.
pub fn ingest_histograms(dir: &Path, default_width: f64) -> Result<IngestedSet> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            match pixel_index(&path) {
                Some(idx) => files.push((idx, path)),
                None => log::debug!("skipping {}: no `_<pixel>` suffix", path.display()),
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir, 0, "no histogram files found"));
    }
    let mut config: Option<AcquisitionConfig> = None;
    let mut pixels = Vec::with_capacity(files.len());
    for (k, (idx, path)) in files.iter().enumerate() {
        if k > 0 && files[k - 1].0 == *idx {
            return Err(Error::format(path, 0, format!("pixel {idx} appears twice")));
        }
        let (h, cfg) = load_histogram(path, default_width)?;
        match &config {
            None => config = Some(cfg),
            Some(c) if c.bin_size != cfg.bin_size => {
                return Err(Error::format(
                    path,
                    0,
                    format!("bin size {} differs from {} used by earlier files", cfg.bin_size, c.bin_size),
                ))
            }
            Some(c) if *c != cfg => return Err(Error::format(path, 0, "acquisition config differs from earlier files")),
            Some(_) => {}
        }
        pixels.push((*idx, h));
    }
    Ok(IngestedSet {
        config: config.expect("at least one file"),
        pixels,
    })
}

/// One absolute time per line with 17 significant digits.
pub fn write_detections(d: &DetectionSet, mut out: impl Write) -> Result<()> {
    for t in &d.absolute_times {
        writeln!(out, "{t:.16e}")?;
    }
    Ok(())
}

pub fn read_detections(path: &Path, input: impl BufRead) -> Result<Vec<f64>> {
    let mut times = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        times.push(line.parse().map_err(|e| Error::format(path, i + 1, format!("bad time: {e}")))?);
    }
    Ok(times)
}

pub const ESTIMATE_HEADER: &str = "pixel,S_hat,B_hat,z_hat,loglik,iters,flags";

pub fn write_estimates<'a>(rows: impl IntoIterator<Item = (usize, &'a Estimate)>, mut out: impl Write) -> Result<()> {
    writeln!(out, "{ESTIMATE_HEADER}")?;
    for (p, e) in rows {
        writeln!(
            out,
            "{p},{:e},{:e},{:e},{:e},{},{}",
            e.signal, e.background, e.depth, e.objective, e.iterations, e.flags
        )?;
    }
    Ok(())
}

/// Per-vertex attributes of an exported point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudVertex {
    pub position: Point,
    pub signal: f64,
    pub background: f64,
    pub sigma: f64,
}

pub fn write_ply(vertices: &[CloudVertex], mut out: impl Write) -> Result<()> {
    writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", vertices.len())?;
    for name in ["x", "y", "z", "S_hat", "B_hat", "sigma"] {
        writeln!(out, "property double {name}")?;
    }
    writeln!(out, "end_header")?;
    for v in vertices {
        let [x, y, z] = v.position;
        writeln!(out, "{x:e} {y:e} {z:e} {:e} {:e} {:e}", v.signal, v.background, v.sigma)?;
    }
    Ok(())
}
