use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use spl_core::estimation::{joint_ml, JointConfig, Refinement};
use spl_core::harness::{
    estimate_pixels, find_optimal_flux, log_grid, run_reconstruction, run_sweep, write_metrics, write_optima,
    write_trials, EstimatorKind, ExperimentConfig, SweepVariable,
};
use spl_core::io::{ingest_histograms, load_histogram, save_histogram, write_detections, write_estimates, write_ply};
use spl_core::scene::{simulate_scene, SceneFile};
use spl_core::sim::{quantize, simulate};
use spl_core::ssdr::{serve, BridgeScoreModel, PlaneScore, ScoreModel};
use spl_core::{AcquisitionConfig, DetectorMode, Error, PulseProfile, RngSeed, SceneParams, SsdrConfig};

/// Single-photon lidar simulation, estimation and reconstruction.
#[derive(Parser)]
#[command(name = "spl", version)]
struct Cli {
    /// Base random seed; overrides a config file's seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one pixel or a scene file and write histograms.
    Simulate(SimulateArgs),
    /// Joint ML estimates for a histogram file or directory.
    Estimate(EstimateArgs),
    /// Monte-Carlo sweep from a JSON experiment config.
    Sweep(SweepArgs),
    /// Flux minimizing the depth RMSE per SBR and mode.
    OptimalFlux(OptimalFluxArgs),
    /// Reconstruct a scene with optional score-based regularization.
    Reconstruct(ReconstructArgs),
    /// Validate a histogram directory and print a summary.
    Ingest(IngestArgs),
    /// Serve an analytic plane prior over the bridge protocol on stdio.
    #[command(hide = true)]
    ServeMockPlane {
        /// `nx,ny,nz,d,sigma`
        #[arg(long)]
        plane: String,
    },
}

#[derive(Args, Clone)]
struct AcquisitionArgs {
    #[arg(long, default_value = "free")]
    mode: DetectorMode,
    /// Repetition period in seconds.
    #[arg(long, default_value_t = 100e-9)]
    period: f64,
    #[arg(long, default_value_t = 100)]
    pulses: u64,
    /// Dead time in seconds.
    #[arg(long, default_value_t = 20e-9)]
    dead_time: f64,
    /// Bin size in seconds.
    #[arg(long, default_value_t = 10e-12)]
    bin_size: f64,
    /// Gaussian pulse standard deviation in seconds.
    #[arg(long, default_value_t = 0.1e-9)]
    pulse_width: f64,
}

impl AcquisitionArgs {
    fn config(&self) -> Result<AcquisitionConfig, Error> {
        AcquisitionConfig::new(
            self.period,
            self.pulses,
            self.dead_time,
            self.mode,
            self.bin_size,
            PulseProfile::new(self.pulse_width)?,
        )
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    acq: AcquisitionArgs,
    /// Scene file; without it a single pixel is simulated.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 1.0)]
    background: f64,
    /// Depth in meters.
    #[arg(long, default_value_t = 5.0)]
    depth: f64,
    /// Also write absolute detection times.
    #[arg(long)]
    detections: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Likelihood to use; defaults to the sidecar's mode.
    #[arg(long)]
    mode: Option<DetectorMode>,
    /// Histogram CSV or a directory of `<name>_<pixel>.csv` files.
    #[arg(long)]
    histogram: PathBuf,
    #[arg(long, default_value = "depth")]
    refinement: RefinementArg,
    /// Pulse width when the sidecar has none, in seconds.
    #[arg(long, default_value_t = 0.1e-9)]
    pulse_width: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RefinementArg {
    None,
    Depth,
    Joint,
}

impl From<RefinementArg> for Refinement {
    fn from(r: RefinementArg) -> Self {
        match r {
            RefinementArg::None => Refinement::None,
            RefinementArg::Depth => Refinement::Depth,
            RefinementArg::Joint => Refinement::Joint,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Per-trial dump CSV.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Metrics CSV; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimalFluxArgs {
    /// Base experiment config; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1")]
    sbr: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    flux_min: f64,
    #[arg(long, default_value_t = 30.0)]
    flux_max: f64,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, value_delimiter = ',')]
    modes: Vec<DetectorMode>,
    #[arg(long)]
    trials: Option<usize>,
    /// Full RMSE curves CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Optima CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    acq: AcquisitionArgs,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "depth")]
    refinement: RefinementArg,
    /// Run score-based depth regularization.
    #[arg(long)]
    ssdr: bool,
    /// SSDR settings JSON; missing fields take their defaults.
    #[arg(long)]
    ssdr_config: Option<PathBuf>,
    /// Analytic plane prior `nx,ny,nz,d,sigma`.
    #[arg(long, conflicts_with = "bridge")]
    plane: Option<String>,
    /// Score-model program speaking the bridge protocol.
    #[arg(long)]
    bridge: Option<String>,
    /// Arguments for the bridge program.
    #[arg(long = "bridge-arg", allow_hyphen_values = true)]
    bridge_args: Vec<String>,
    /// Bridge response timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    bridge_timeout: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of `<name>_<pixel>.csv` histograms with sidecars.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 0.1e-9)]
    pulse_width: f64,
    /// Summary JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<(), Error> {
    let cfg = a.acq.config()?;
    fs::create_dir_all(&a.out)?;
    let Some(scene_path) = &a.scene else {
        let p = SceneParams::new(a.signal, a.background, a.depth)?;
        p.validate(&cfg)?;
        let d = simulate(&p, &cfg, &RngSeed::new(seed, 0));
        save_histogram(&a.out.join("pixel_0.csv"), &quantize(&d, &cfg)?, &cfg)?;
        if a.detections {
            let mut f = create(&a.out.join("pixel_0.times"))?;
            write_detections(&d, &mut f)?;
            f.flush()?;
        }
        return Ok(());
    };
    let file = SceneFile::load(scene_path)?;
    let scene = file.build(scene_path.parent().unwrap_or(Path::new(".")))?;
    let detections = simulate_scene(&scene, &cfg, seed)?;
    for (p, d) in detections.iter().enumerate() {
        let Some(d) = d else { continue };
        save_histogram(&a.out.join(format!("pixel_{p}.csv")), &quantize(d, &cfg)?, &cfg)?;
        if a.detections {
            let mut f = create(&a.out.join(format!("pixel_{p}.times")))?;
            write_detections(d, &mut f)?;
            f.flush()?;
        }
    }
    scene.save_ground_truth(&a.out.join("ground_truth.csv"))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Error> {
    let (cfg, pixels) = if a.histogram.is_dir() {
        let set = ingest_histograms(&a.histogram, a.pulse_width)?;
        (set.config, set.pixels)
    } else {
        let (h, cfg) = load_histogram(&a.histogram, a.pulse_width)?;
        (cfg, vec![(0, h)])
    };
    let cfg = a.mode.map_or(cfg, |m| cfg.with_mode(m));
    let jc = JointConfig {
        refinement: a.refinement.into(),
        ..JointConfig::new(&cfg)
    };
    let (idx, hs): (Vec<usize>, Vec<_>) = pixels.into_iter().unzip();
    let est = if hs.len() == 1 {
        vec![joint_ml((&hs[0]).into(), cfg.mode, &cfg, &jc)?]
    } else {
        estimate_pixels(&hs, &cfg, &jc)?
    };
    log::info!("estimated {} pixels in {} mode", est.len(), cfg.mode);
    let mut out = create(&a.out)?;
    write_estimates(idx.into_iter().zip(&est), &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, seed: Option<u64>) -> Result<(), Error> {
    let text = fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::from_json(&text, &a.config)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = run_sweep(&cfg)?;
    let mut out = sink(a.out.as_deref().or(cfg.output.as_deref()))?;
    write_metrics(&result.rows, &mut out)?;
    out.flush()?;
    if let Some(path) = &a.dump {
        let mut f = create(path)?;
        write_trials(&result, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_optimal_flux(a: &OptimalFluxArgs, seed: Option<u64>) -> Result<(), Error> {
    let mut base = match &a.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?, path)?,
        None => ExperimentConfig::new(SweepVariable::TotalFlux, Vec::new()),
    };
    if !a.modes.is_empty() {
        base.modes = a.modes.clone();
    }
    if let Some(t) = a.trials {
        base.trials = t;
    }
    if let Some(s) = seed {
        base.seed = s;
    }
    base.estimators = vec![EstimatorKind::Joint];
    if !(a.flux_min > 0.0 && a.flux_max >= a.flux_min) || a.points == 0 {
        return Err(Error::InvalidConfig {
            field: "flux_min",
            reason: "need 0 < flux_min <= flux_max and at least one point".into(),
        });
    }
    let report = find_optimal_flux(&base, &a.sbr, &log_grid(a.flux_min, a.flux_max, a.points))?;
    let mut out = sink(a.out.as_deref())?;
    write_optima(&report.optima, &mut out)?;
    out.flush()?;
    if let Some(path) = &a.curves {
        let mut f = create(path)?;
        write_metrics(&report.curves, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs, seed: u64) -> Result<(), Error> {
    let cfg = a.acq.config()?;
    let file = SceneFile::load(&a.scene)?;
    let scene = file.build(a.scene.parent().unwrap_or(Path::new(".")))?;
    let jc = JointConfig {
        refinement: a.refinement.into(),
        ..JointConfig::new(&cfg)
    };
    let ssdr_cfg: SsdrConfig = match &a.ssdr_config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidConfig {
                field: "ssdr_config",
                reason: format!("{}: {e}", path.display()),
            })?,
        None => SsdrConfig::default(),
    };
    let model: Option<Box<dyn ScoreModel>> = match (a.ssdr, &a.plane, &a.bridge) {
        (false, _, _) => None,
        (true, Some(spec), _) => Some(Box::new(PlaneScore::parse(spec)?)),
        (true, None, Some(program)) => Some(Box::new(BridgeScoreModel::spawn(
            program,
            &a.bridge_args,
            Duration::from_secs_f64(a.bridge_timeout),
        )?)),
        (true, None, None) => {
            return Err(Error::InvalidConfig {
                field: "ssdr",
                reason: "--ssdr needs --plane or --bridge".into(),
            })
        }
    };
    fs::create_dir_all(&a.out)?;
    scene.save_ground_truth(&a.out.join("ground_truth.csv"))?;
    let ssdr = model.as_deref().map(|m| (&ssdr_cfg, m));
    let (rec, failure) = match run_reconstruction(&scene, &cfg, &jc, ssdr, seed) {
        Ok(rec) => (rec, None),
        Err(f) => match f.partial {
            Some(rec) => (*rec, Some(f.error)),
            None => return Err(f.error),
        },
    };

    let mut est = create(&a.out.join("estimates.csv"))?;
    write_estimates(rec.rows(), &mut est)?;
    est.flush()?;
    let mut ply = create(&a.out.join("cloud.ply"))?;
    write_ply(&rec.vertices(&scene)?, &mut ply)?;
    ply.flush()?;
    let metrics = serde_json::json!({
        "pixels": rec.pixels.len(),
        "pixelwise": rec.pixelwise,
        "regularized": rec.regularized,
        "trace": rec.trace,
    });
    fs::write(a.out.join("metrics.json"), serde_json::to_string_pretty(&metrics).expect("json") + "\n")?;
    log::info!("pixelwise depth MAE {:.4e} m over {} pixels", rec.pixelwise.mae, rec.pixels.len());
    match failure {
        Some(e) => {
            log::warn!("regularization failed; pixelwise results were written to {}", a.out.display());
            Err(e)
        }
        None => Ok(()),
    }
}

fn cmd_ingest(a: &IngestArgs) -> Result<(), Error> {
    let set = ingest_histograms(&a.dir, a.pulse_width)?;
    let summary = serde_json::json!({
        "config": set.config,
        "pixels": set.pixels.iter().map(|(p, _)| p).collect::<Vec<_>>(),
        "detections": set.pixels.iter().map(|(_, h)| h.total).sum::<u64>(),
    });
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).expect("json"))?;
    out.flush()?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } => 2,
        Error::ScoreModelFailure(_) => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, seed),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a, cli.seed),
        Command::OptimalFlux(a) => cmd_optimal_flux(a, cli.seed),
        Command::Reconstruct(a) => cmd_reconstruct(a, seed),
        Command::Ingest(a) => cmd_ingest(a),
        Command::ServeMockPlane { plane } => {
            let model = PlaneScore::parse(plane)?;
            serve(&model, io::stdin().lock(), io::stdout().lock())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
