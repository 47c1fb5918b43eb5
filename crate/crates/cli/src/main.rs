//! `nnc`: train, score and evaluate cluster-wise one-class SVM anomaly detectors.

mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use nnc::augment::{AppearanceProvider, FileAppearance, HandcraftedAppearance, ZeroAppearance};
use nnc::cubes::{FRAME_HEIGHT, FRAME_WIDTH};
use nnc::detect::{
    read_maps, read_scores, score_sequence, train, upsample_map, write_maps, write_scores, AppearanceSource,
    NormalityModel,
};
use nnc::eval::{frame_level_auc, load_ground_truth, pixel_level_auc, smooth_pixel_maps, write_report, write_roc};
use nnc::ingest::{load_sequence, save_raw_gray, FrameSequence, InputFormat, ResizeMethod};
use nnc::synth::{generate, SynthSpec};

use config::{Appearance, RunConfig};

/// Video anomaly detection with cluster-wise one-class SVMs.
///
/// Settings come from built-in defaults, then `--config`, then flags.
#[derive(Parser, Debug)]
#[command(name = "nnc", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the cluster-wise one-class SVMs on a normal-only video.
    Train(TrainArgs),
    /// Score a test video with a trained model.
    Score(ScoreArgs),
    /// Frame- and pixel-level AUC of a score file against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic clip with ground truth.
    Synth(SynthArgs),
    /// Draw a score timeline as SVG.
    Plot(PlotArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Frames: directory of PGM/PNG images or a raw-gray (.nncv) file.
    #[arg(long)]
    video: PathBuf,
    /// NNCF activation maps; implies `--appearance file`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_enum)]
    appearance: Option<Appearance>,
    /// Output model file.
    #[arg(long, short)]
    out: PathBuf,
    /// One-class SVM ν [default: 0.01].
    #[arg(long)]
    nu: Option<f64>,
    /// Fixed number of k-means clusters [default: training cubes / 1000].
    #[arg(long)]
    k: Option<usize>,
    /// Clusters smaller than this are dropped [default: 500].
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// k-means restarts [default: 10].
    #[arg(long)]
    restarts: Option<usize>,
    /// Static-cube threshold on the raw gradient norm [default: 0.1].
    #[arg(long)]
    tau_static: Option<f32>,
    /// Temporal stride between training cubes [default: 1].
    #[arg(long)]
    stride: Option<usize>,
    /// Seed for k-means [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// NNCF activation maps, required for models trained with them.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output CSV: frame_index,raw,smoothed,normalized.
    #[arg(long, short)]
    out: PathBuf,
    /// Optional per-frame anomaly grids (NNCA).
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Score every n-th frame [default: 2].
    #[arg(long)]
    stride: Option<usize>,
    /// Temporal Gaussian width in frames [default: 10].
    #[arg(long)]
    sigma_t: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Column {
    Raw,
    Smoothed,
    Normalized,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Frame labels CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Pixel masks: raw-gray file or image directory.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Anomaly grids from `score --maps`; enables pixel-level AUC.
    #[arg(long)]
    maps: Option<PathBuf>,
    /// Spatial Gaussian width in pixels for pixel maps [default: 20].
    #[arg(long)]
    sigma_s: Option<f64>,
    /// Score column used for the frame-level ROC.
    #[arg(long, value_enum, default_value = "smoothed")]
    column: Column,
    /// Report CSV (metric,value).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Dump the frame-level ROC curve here.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Benchmark,
    Training,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for video.nncv, labels.csv and masks.nncv.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "benchmark")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

/// Raised for bad invocations; maps to exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nnc::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) if !p.exists() => return Err(nnc::Error::MissingPath(p.clone()).into()),
        Some(p) => RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Train(a) => cmd_train(&mut cfg, a),
        Command::Score(a) => cmd_score(&mut cfg, a),
        Command::Eval(a) => cmd_eval(&mut cfg, a),
        Command::Synth(a) => cmd_synth(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

/// Loads a video and resizes it to the working resolution.
fn load_working(path: &Path) -> Result<FrameSequence> {
    if !path.exists() {
        return Err(nnc::Error::MissingPath(path.to_path_buf()).into());
    }
    let seq = load_sequence(path, InputFormat::detect(path)?)?;
    let (w, h) = seq.dims();
    if (w, h) != (FRAME_WIDTH, FRAME_HEIGHT) {
        info!("resizing {w}x{h} frames to {FRAME_WIDTH}x{FRAME_HEIGHT}");
    }
    Ok(seq.resized(FRAME_WIDTH, FRAME_HEIGHT, ResizeMethod::Bilinear)?)
}

fn provider<'a>(
    source: AppearanceSource,
    seq: &'a FrameSequence,
    features: Option<&Path>,
) -> Result<Box<dyn AppearanceProvider + 'a>> {
    Ok(match source {
        AppearanceSource::None => Box::new(ZeroAppearance),
        AppearanceSource::Handcrafted => Box::new(HandcraftedAppearance::new(seq)?),
        AppearanceSource::File => {
            let path = features.ok_or_else(|| usage("this model needs --features with NNCF activation maps"))?;
            let file = FileAppearance::open(path)?;
            if file.n_frames() < seq.len() {
                log::warn!("feature file covers {} of {} frames", file.n_frames(), seq.len());
            }
            Box::new(file)
        }
    })
}

fn cmd_train(cfg: &mut RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(v) = a.nu {
        cfg.svm.nu = v;
    }
    if let Some(v) = a.k {
        cfg.cluster.k = v;
    }
    if let Some(v) = a.min_cluster_size {
        cfg.cluster.min_size = v;
    }
    if let Some(v) = a.restarts {
        cfg.cluster.restarts = v;
    }
    if let Some(v) = a.tau_static {
        cfg.features.tau_static = v;
    }
    if let Some(v) = a.stride {
        cfg.train.stride = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if a.features.is_some() {
        cfg.features.appearance = Appearance::File;
    }
    if let Some(v) = a.appearance {
        cfg.features.appearance = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let tc = cfg.train_config();
    info!(
        "training: nu = {}, min cluster size = {}, restarts = {}, k = {}, tau_static = {}, appearance = {:?}",
        tc.svm.nu,
        tc.min_cluster_size,
        tc.kmeans.restarts,
        tc.k.map_or("auto".to_string(), |k| k.to_string()),
        tc.features.tau_static,
        cfg.features.appearance
    );

    let seq = load_working(&a.video)?;
    let prov = provider(tc.features.appearance, &seq, a.features.as_deref())?;
    let start = Instant::now();
    let (model, report) = train(&seq, prov.as_ref(), &tc)?;
    info!(
        "{} of {} cubes active; k = {}, r = {} retained clusters, trained in {:.1}s",
        report.n_active,
        report.n_cubes,
        report.k,
        model.r(),
        start.elapsed().as_secs_f64()
    );
    info!("cluster sizes: {:?}", report.cluster_sizes);
    for (j, nu) in report.retained.iter().zip(&report.nu_checks) {
        info!(
            "cluster {j}: {} members, outlier fraction {:.4}, support fraction {:.4}",
            nu.n, nu.outlier_fraction, nu.support_fraction
        );
    }
    model.save(&a.out)?;
    info!("model written to {}", a.out.display());
    Ok(())
}

fn cmd_score(cfg: &mut RunConfig, a: ScoreArgs) -> Result<()> {
    if let Some(v) = a.stride {
        cfg.score.stride = v;
    }
    if let Some(v) = a.sigma_t {
        cfg.score.sigma_t = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = NormalityModel::load(&a.model)?;
    let seq = load_working(&a.video)?;
    let prov = provider(model.features.appearance, &seq, a.features.as_deref())?;
    let start = Instant::now();
    let (maps, series) = score_sequence(&model, &seq, prov.as_ref(), &cfg.score_config())?;
    let secs = start.elapsed().as_secs_f64();
    let fps = seq.len() as f64 / secs.max(1e-9);
    write_scores(&a.out, &series)?;
    if let Some(p) = &a.maps {
        write_maps(p, &maps)?;
    }
    println!("scored {} frames in {secs:.2}s ({fps:.1} frames/s)", seq.len());
    Ok(())
}

fn cmd_eval(cfg: &mut RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(v) = a.sigma_s {
        cfg.eval.sigma_s = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if a.labels.is_none() && a.masks.is_none() {
        return Err(usage("eval needs --labels and/or --masks"));
    }
    let series = read_scores(&a.scores)?;
    let gt = load_ground_truth(a.labels.as_deref(), a.masks.as_deref())?;
    gt.check_frames(series.len())?;
    let scores = match a.column {
        Column::Raw => &series.raw,
        Column::Smoothed => &series.smoothed,
        Column::Normalized => &series.normalized,
    };
    let frame = frame_level_auc(scores, &gt.frame_labels)?;
    println!("frame_auc {:.6}", frame.auc);
    let mut rows = vec![("frame_auc", frame.auc)];

    if let Some(p) = &a.maps {
        let masks = gt.masks.as_ref().ok_or_else(|| usage("pixel-level AUC needs --masks"))?;
        let grids = read_maps(p)?;
        if grids.len() != series.len() {
            bail!(usage(format!("{} maps for {} scored frames", grids.len(), series.len())));
        }
        let pixel_maps = grids
            .iter()
            .map(|m| upsample_map(m, masks.width, masks.height))
            .collect::<nnc::Result<Vec<_>>>()?;
        let smoothed = smooth_pixel_maps(&pixel_maps, cfg.eval.sigma_s)?;
        let pixel = pixel_level_auc(&smoothed, &gt, Some(cfg.eval.max_thresholds))?;
        println!("pixel_auc {:.6}", pixel.auc);
        rows.push(("pixel_auc", pixel.auc));
    }
    if let Some(p) = &a.out {
        write_report(p, &rows)?;
    }
    if let Some(p) = &a.roc {
        write_roc(p, &frame)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = match a.preset {
        Preset::Benchmark => SynthSpec::benchmark(),
        Preset::Training => SynthSpec::benchmark_training(),
    };
    if let Some(s) = a.seed {
        spec = spec.with_seed(s);
    }
    if let Some(n) = a.frames {
        spec = spec.with_frames(n)?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (seq, gt) = generate(&spec);
    save_raw_gray(&seq, &a.out.join("video.nncv"))?;
    gt.write_labels(&a.out.join("labels.csv"))?;
    gt.write_masks(&a.out.join("masks.nncv"))?;
    let positives = gt.frame_labels.iter().filter(|&&l| l).count();
    println!(
        "wrote {} frames ({} anomalous) to {}",
        seq.len(),
        positives,
        a.out.display()
    );
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let series = read_scores(&a.scores)?;
    let labels = a.labels.as_deref().map(nnc::eval::load_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != series.len() {
            return Err(usage(format!("{} labels for {} frames", l.len(), series.len())));
        }
    }
    let svg = plot::render_svg(&series.normalized, labels.as_deref());
    fs::write(&a.out, svg).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
