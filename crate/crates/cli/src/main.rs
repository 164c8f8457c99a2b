use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use facetouch::pipeline::{Task, Variant};
use facetouch::Execution;
use facetouch_cli::commands::{self, error_category, exit_code};
use facetouch_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "facetouch", version, about = "Infant face-touch detection workflow")]
struct Cli {
    /// TOML run configuration; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    RfPcaSvm,
    AutoencSvmI,
    AutoencSvmIi,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::RfPcaSvm => Variant::RfPcaSvm,
            VariantArg::AutoencSvmI => Variant::AutoencSvmI,
            VariantArg::AutoencSvmIi => Variant::AutoencSvmII,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TaskArg {
    Binary,
    Regions,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Binary => Task::BinaryTouch,
            TaskArg::Regions => Task::MultiLabelRegions,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with labels, Mullen scores and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        videos: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Target on-head prevalence; sets the touch event rate.
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        coupling: Option<f64>,
        /// Skip writing frame images (no HOG features possible).
        #[arg(long)]
        no_frames: bool,
    },
    /// Extract the per-frame feature matrix of a dataset.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append the 540 face HOG features.
        #[arg(long)]
        hog: bool,
    },
    /// Grid-search and fit one model.
    Train {
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, value_enum, default_value = "binary")]
        task: TaskArg,
        /// Manifests (file or directory) or feature CSVs; repeat to pool datasets.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score trained models on a test set, or run the cross-dataset configurations.
    Evaluate {
        /// Trained model files (fixed-model mode).
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long, requires = "models")]
        test: Option<PathBuf>,
        /// Dataset A (configuration mode).
        #[arg(long, conflicts_with = "models", requires = "dataset_b")]
        dataset_a: Option<PathBuf>,
        #[arg(long)]
        dataset_b: Option<PathBuf>,
        #[arg(long = "variant", value_enum)]
        variants: Vec<VariantArg>,
        #[arg(long, value_enum, default_value = "binary")]
        task: TaskArg,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write frame-level predictions as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Region model applied to frames predicted on-head.
        #[arg(long)]
        regions_model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Manifest giving infant ids when `--data` is a feature CSV.
        #[arg(long)]
        infants: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate predicted touch ratios with Mullen development rates.
    Correlate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        mullen: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cutoff_months: Option<f64>,
    },
    /// Serve the annotation API on localhost.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Synth { out, videos, frames, seed, prevalence, coupling, no_frames } => {
            let s = &mut config.synth;
            if let Some(v) = videos {
                s.n_videos = v;
            }
            if let Some(f) = frames {
                s.frames_per_video = f;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(p) = prevalence {
                s.touch_event_rate = facetouch::synth::rate_for_prevalence(p, s.fps);
            }
            if let Some(c) = coupling {
                s.mullen_coupling = c;
            }
            if no_frames {
                s.render_frames = false;
            }
            let summary = commands::cmd_synth(&config, &out, exec)?;
            println!("{}", summary.manifest_path.display());
        }
        Command::Extract { manifest, out, hog } => {
            commands::cmd_extract(&config, &manifest, &out, hog, exec)?;
        }
        Command::Train { variant, task, data, out, seed } => {
            if let Some(s) = seed {
                config.pipeline.seed = s;
            }
            let model = commands::cmd_train(&config, variant.into(), task.into(), &data, &out, exec)?;
            if let Some(cv) = &model.cv {
                print!("{}", cv.render_text());
            }
        }
        Command::Evaluate { models, test, dataset_a, dataset_b, variants, task, split_seed, out } => {
            if let Some(s) = split_seed {
                config.evaluation.split_seed = s;
            }
            let report = match (dataset_a, dataset_b, test) {
                (Some(a), Some(b), _) => {
                    let variants: Vec<Variant> = if variants.is_empty() {
                        vec![Variant::RfPcaSvm, Variant::AutoencSvmI]
                    } else {
                        variants.into_iter().map(Variant::from).collect()
                    };
                    commands::cmd_evaluate_protocols(&config, &variants, task.into(), &a, &b, &out, exec)?
                }
                (_, _, Some(test)) => commands::cmd_evaluate(&config, &models, &test, &out, exec)?,
                _ => anyhow::bail!("give --model and --test, or --dataset-a and --dataset-b"),
            };
            print!("{}", report.render_text());
        }
        Command::Predict { model, regions_model, data, infants, out } => {
            commands::cmd_predict(&config, &model, regions_model.as_deref(), &data, infants.as_deref(), &out, exec)?;
        }
        Command::Correlate { predictions, mullen, out, cutoff_months } => {
            if let Some(c) = cutoff_months {
                config.correlation.cutoff_months = c;
            }
            print!("{}", commands::cmd_correlate(&config, &predictions, &mullen, &out)?.render_text());
        }
        Command::Annotate { manifest, port } => commands::cmd_annotate(&manifest, port)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = error_category(&e);
            let body = serde_json::json!({ "category": category, "message": format!("{e:#}") });
            eprintln!("{body}");
            ExitCode::from(exit_code(category) as u8)
        }
    }
}
