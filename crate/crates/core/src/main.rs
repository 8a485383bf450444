use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ccafuse::classifier::{accuracy, confusion_matrix};
use ccafuse::features::{de_band, default_bands, log_band_energy, stat_features, FeatureMatrix, SignalEpoch, STAT_NAMES};
use ccafuse::harness::{
    self, export_embeddings, fit_pipeline, grid_search, load_model, mi_experiment, noise_sweep, run_experiment,
    save_model, write_confusion_csv, write_dataset, write_heatmap_csv, write_mi_curve_csv, write_noise_csv,
    write_noise_table_csv, ExperimentConfig, Method, ReplaceMode, SweepConfig,
};
use ccafuse::{Matrix, RandomStream};

#[derive(Parser)]
#[command(name = "ccafuse", version, about = "Two-modality fusion experiments with deep CCA")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as view1.csv, view2.csv, groups.csv.
    GenData,
    /// Turn a raw multichannel signal CSV (one column per channel) into features.
    ExtractFeatures {
        #[arg(long)]
        input: PathBuf,
        /// Sampling rate in Hz.
        #[arg(long)]
        fs: f64,
        /// Window length in seconds.
        #[arg(long, default_value_t = 4.0)]
        window: f64,
        #[arg(long, value_enum, default_value_t = FeatureKind::De)]
        kind: FeatureKind,
        /// Label attached to every output row.
        #[arg(long)]
        label: Option<usize>,
    },
    /// Fit the pipeline on the whole dataset and save it.
    Train {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Cross-validate the configured method, or score a saved model on the dataset.
    Evaluate {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// Output dimension x EEG weight heat map for DCCA.
    GridSearch {
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Accuracy of several methods under increasing noise.
    NoiseSweep {
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// MINE estimates for raw versus DCCA-transformed views.
    Mine,
    /// Original, transformed and fused features for external plotting.
    ExportEmbeddings {
        /// Saved DCCA model; trained on the dataset when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct NoiseFlags {
    /// Replace whole feature columns instead of scalar entries.
    #[arg(long, value_enum)]
    replace_mode: Option<ReplaceModeArg>,
    /// Corrupt training folds only.
    #[arg(long)]
    noise_train_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplaceModeArg {
    Entries,
    Dims,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureKind {
    /// Differential entropy per band.
    De,
    /// Log band energy.
    Lbe,
    /// Per-channel summary statistics.
    Stat,
}

#[derive(Serialize)]
struct TrainReport {
    method: Method,
    seed: u64,
    samples: usize,
    classes: usize,
    train_accuracy: f64,
    train_correlation: Option<f64>,
    model_file: String,
    config: ExperimentConfig,
}

#[derive(Serialize)]
struct ModelEvalReport {
    method: Method,
    model_file: String,
    samples: usize,
    accuracy: f64,
    confusion: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct Timing {
    command: String,
    seconds: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reports name files without their directory so they compare equal across output dirs.
fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_noise_flags(cfg: &mut ExperimentConfig, flags: &NoiseFlags) {
    if flags.noise_train_only {
        cfg.noise_train_only = true;
    }
    if let Some(m) = flags.replace_mode {
        let mode = match m {
            ReplaceModeArg::Entries => ReplaceMode::Entries,
            ReplaceModeArg::Dims => ReplaceMode::Dims,
        };
        if let Some(n) = &mut cfg.noise {
            n.mode = mode;
        }
        if let Some(s) = &mut cfg.sweep {
            s.schemes.iter_mut().for_each(|n| n.mode = mode);
        }
    }
}

fn set_method(cfg: &mut ExperimentConfig, method: &Option<String>) -> Result<()> {
    if let Some(m) = method {
        cfg.method = Method::from_tag(m)?;
    }
    Ok(())
}

fn read_signal(path: &Path, fs: f64) -> Result<SignalEpoch<f64>> {
    let m = FeatureMatrix::<f64>::read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let channels = (0..m.cols()).map(|j| (0..m.rows()).map(|i| m.data.get(i, j)).collect()).collect();
    let mut epoch = SignalEpoch::new(channels, fs)?;
    epoch.channel_names = m.names;
    Ok(epoch)
}

fn extract(epoch: &SignalEpoch<f64>, kind: FeatureKind, window: f64) -> Result<FeatureMatrix<f64>> {
    Ok(match kind {
        FeatureKind::De => de_band(epoch, &default_bands(), window)?,
        FeatureKind::Lbe => log_band_energy(epoch, &default_bands(), window)?,
        FeatureKind::Stat => {
            let len = (window * epoch.sampling_rate).round() as usize;
            if len < 2 || len > epoch.samples() {
                bail!("window of {len} samples does not fit a {}-sample signal", epoch.samples());
            }
            let mut rows = Vec::new();
            for start in (0..=epoch.samples() - len).step_by(len) {
                let chunk = epoch.channels.iter().map(|c| c[start..start + len].to_vec()).collect();
                rows.push(stat_features(&SignalEpoch::new(chunk, epoch.sampling_rate)?)?);
            }
            let names = epoch
                .channel_names
                .iter()
                .flat_map(|c| STAT_NAMES.iter().map(move |s| format!("{c}_{s}")))
                .collect();
            let cols = rows[0].len();
            FeatureMatrix::new(Matrix::from_vec(rows.len(), cols, rows.concat())?, names)?
        }
    })
}

fn run(cli: &Cli) -> Result<&'static str> {
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let ds = cfg.load_dataset()?;
            write_dataset(&ds, out)?;
            log::info!("wrote {} samples to {}", ds.len(), out.display());
            Ok("gen-data")
        }
        Command::ExtractFeatures { input, fs, window, kind, label } => {
            let epoch = read_signal(input, *fs)?;
            let mut fm = extract(&epoch, *kind, *window)?;
            if let Some(l) = label {
                let n = fm.rows();
                fm = fm.with_labels(vec![*l; n])?;
            }
            fm.write_csv(out.join("features.csv"))?;
            Ok("extract-features")
        }
        Command::Train { method, model } => {
            set_method(&mut cfg, method)?;
            let ds = cfg.load_dataset()?;
            let stream = RandomStream::new(cfg.seed, 0).derive(2);
            let pipeline = fit_pipeline(&cfg, &ds.x1, &ds.x2, &ds.labels, &stream)?;
            let path = model.clone().unwrap_or_else(|| out.join("model.ccafuse"));
            save_model(&pipeline, &path)?;
            let pred = pipeline.predict(&ds.x1, &ds.x2)?;
            let train_correlation = match &pipeline.representation {
                Some(harness::Representation::Dcca { model }) => model.final_correlation(),
                _ => None,
            };
            let report = TrainReport {
                method: cfg.method,
                seed: cfg.seed,
                samples: ds.len(),
                classes: pipeline.classes(),
                train_accuracy: accuracy(&pred, &ds.labels),
                train_correlation,
                model_file: file_name(&path),
                config: cfg,
            };
            write_json(&report, &out.join("report.json"))?;
            Ok("train")
        }
        Command::Evaluate { method, model, noise } => {
            set_method(&mut cfg, method)?;
            apply_noise_flags(&mut cfg, noise);
            let ds = cfg.load_dataset()?;
            if let Some(path) = model {
                let pipeline = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
                let pred = pipeline.predict(&ds.x1, &ds.x2)?;
                let classes = pipeline.classes().max(ds.classes());
                let report = ModelEvalReport {
                    method: pipeline.method,
                    model_file: file_name(path),
                    samples: ds.len(),
                    accuracy: accuracy(&pred, &ds.labels),
                    confusion: confusion_matrix(&pred, &ds.labels, classes),
                };
                write_confusion_csv(&report.confusion, out.join("confusion.csv"))?;
                write_json(&report, &out.join("report.json"))?;
            } else {
                let report = run_experiment(&ds, &cfg)?;
                if !report.complete {
                    log::warn!("some folds failed; see report.json");
                }
                write_confusion_csv(&report.confusion, out.join("confusion.csv"))?;
                write_json(&report, &out.join("report.json"))?;
                println!("{}: {:.2}% ± {:.2}", cfg.method.tag(), 100.0 * report.mean_accuracy, 100.0 * report.std_accuracy);
            }
            Ok("evaluate")
        }
        Command::GridSearch { dims, alphas } => {
            let mut axes = cfg.grid.clone().unwrap_or_default();
            if let Some(d) = dims {
                axes.dims = d.clone();
            }
            if let Some(a) = alphas {
                axes.alphas = a.clone();
            }
            cfg.method = Method::Dcca;
            cfg.grid = Some(axes.clone());
            cfg.validate()?;
            let ds = cfg.load_dataset()?;
            let report = grid_search(&ds, &cfg, &axes)?;
            write_heatmap_csv(&report, out.join("heatmap.csv"))?;
            write_json(&report, &out.join("report.json"))?;
            println!("best: dim {} alpha1 {} ({:.2}%)", report.best.dim, report.best.alpha1, 100.0 * report.best.mean);
            Ok("grid-search")
        }
        Command::NoiseSweep { noise } => {
            if cfg.sweep.is_none() {
                cfg.sweep = Some(SweepConfig::default());
            }
            apply_noise_flags(&mut cfg, noise);
            let ds = cfg.load_dataset()?;
            let sweep = cfg.sweep.clone().unwrap_or_default();
            let report = noise_sweep(&ds, &cfg, &sweep)?;
            write_noise_csv(&report, out.join("noise.csv"))?;
            write_noise_table_csv(&report, out.join("noise_table.csv"))?;
            write_json(&report, &out.join("report.json"))?;
            Ok("noise-sweep")
        }
        Command::Mine => {
            let ds = cfg.load_dataset()?;
            let report = mi_experiment(&ds, &cfg)?;
            write_mi_curve_csv(&report.comparison, out.join("mi_curve.csv"))?;
            write_json(&report, &out.join("report.json"))?;
            let c = &report.comparison;
            println!("MI original {:.3}, transformed {:.3} nats", c.original.estimate, c.transformed.estimate);
            Ok("mine")
        }
        Command::ExportEmbeddings { model } => {
            let ds = cfg.load_dataset()?;
            let pipeline = match model {
                Some(p) => load_model(p).with_context(|| format!("loading model {}", p.display()))?,
                None => {
                    cfg.method = Method::Dcca;
                    let stream = RandomStream::new(cfg.seed, 0).derive(2);
                    fit_pipeline(&cfg, &ds.x1, &ds.x2, &ds.labels, &stream)?
                }
            };
            export_embeddings(&pipeline, &ds, out.join("embeddings.csv"))?;
            Ok("export-embeddings")
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let start = Instant::now();
    let command = run(&cli)?;
    let timing = Timing { command: command.into(), seconds: start.elapsed().as_secs_f64() };
    write_json(&timing, &cli.out.join("timing.json"))
}
