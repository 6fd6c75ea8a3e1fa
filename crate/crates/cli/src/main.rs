use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use grading_cli::commands::{self, GradeInput};
use grading_cli::PipelineConfig;
use grading_core::fsutil::write_atomic;
use grading_core::Task;

/// Produce grading pipeline: images to spectral features to neural
/// classifiers.
#[derive(Parser)]
#[command(name = "grader", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Override any configuration field, e.g. `--set training.momentum=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic labelled corpus and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Extract a spectral pattern from every manifest image.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature file to write; failures go to `<out>.failures.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured network with early stopping.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Output directory for the model, history and validation results.
        #[arg(long)]
        out: PathBuf,
        /// Hidden layer widths, e.g. `64` or `32,16`.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Search network structures with the reactor.
    Search {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        capacity: Option<usize>,
        #[arg(long)]
        max_cycles: Option<usize>,
    },
    /// Classify an image or a feature file.
    Grade {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "features", required_unless_present = "features")]
        image: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Append `id,label` lines to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare predictions with ground truth.
    Report {
        #[arg(long)]
        predictions: PathBuf,
        /// Any CSV with `id` and `label` columns.
        #[arg(long)]
        truth: PathBuf,
        /// Metric CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hourly accuracy of human graders against the first-hour benchmark.
    Graders {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn push<T: ToString>(overrides: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={}", v.to_string()));
    }
}

fn config(common: &Common, mut extra: Vec<String>) -> Result<PipelineConfig> {
    let mut overrides = common.overrides.clone();
    push(&mut overrides, "seed", common.seed);
    push(&mut overrides, "task", common.task.map(|t| format!("\"{t}\"")));
    overrides.append(&mut extra);
    PipelineConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Synth { out, per_class, noise } => {
            let mut o = Vec::new();
            push(&mut o, "synth.per_class", per_class);
            push(&mut o, "synth.noise", noise);
            let config = config(common, o)?;
            let manifest = commands::cmd_synth(&config, &out)?;
            println!("{} images, manifest {}", manifest.len(), out.join("manifest.csv").display());
        }
        Command::Preprocess { manifest, out } => {
            let config = config(common, Vec::new())?;
            let s = commands::cmd_preprocess(&config, &manifest, &out)?;
            println!(
                "{} feature records, {} failures ({})",
                s.records,
                s.failures.len(),
                s.failures_path.display()
            );
        }
        Command::Train {
            features,
            out,
            hidden,
            learning_rate,
            momentum,
            max_epochs,
            patience,
        } => {
            let mut o = Vec::new();
            push(
                &mut o,
                "network.hidden_layers",
                hidden.map(|h| format!("{h:?}")),
            );
            push(&mut o, "training.learning_rate", learning_rate);
            push(&mut o, "training.momentum", momentum);
            push(&mut o, "training.max_epochs", max_epochs);
            push(&mut o, "training.patience", patience);
            let config = config(common, o)?;
            let s = commands::cmd_train(&config, &features, &out)?;
            println!(
                "trained {} epochs ({:?}), best epoch {}, validation accuracy {:.4}",
                s.epochs,
                s.stopped,
                s.best_epoch,
                s.validation.accuracy()
            );
            println!("model {}", s.model_path.display());
        }
        Command::Search {
            features,
            out,
            capacity,
            max_cycles,
        } => {
            let mut o = Vec::new();
            push(&mut o, "search.capacity", capacity);
            push(&mut o, "search.max_cycles", max_cycles);
            let config = config(common, o)?;
            let s = commands::cmd_search(&config, &features, &out)?;
            println!(
                "stopped after {} cycles ({:?}); best weight {:.4}: layers {:?}, jump {}, {}, lr {}, momentum {}",
                s.cycles,
                s.stopped,
                s.best.molecular_weight.unwrap_or(0.0),
                s.best.layer_widths,
                s.best.jump_flag,
                s.best.activation.name(),
                s.best.learning_rate,
                s.best.momentum
            );
            println!("model {}, log {}", s.model_path.display(), s.log_path.display());
        }
        Command::Grade {
            model,
            image,
            features,
            out,
        } => {
            let config = config(common, Vec::new())?;
            let input = match (image, features) {
                (Some(i), _) => GradeInput::Image(i),
                (None, Some(f)) => GradeInput::Features(f),
                (None, None) => unreachable!("clap requires one input"),
            };
            for (id, label) in commands::cmd_grade(&config, &model, &input, out.as_deref())? {
                println!("{id},{label}");
            }
        }
        Command::Report {
            predictions,
            truth,
            out,
        } => {
            let config = config(common, Vec::new())?;
            let r = commands::cmd_report(config.task, &predictions, &truth)?;
            print!("{}", r.table);
            if let Some(out) = out {
                write_atomic(&out, r.csv.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Graders { log, out } => {
            let config = config(common, Vec::new())?;
            let curve = commands::cmd_graders(config.task, &log)?;
            print!("{}", curve.to_table());
            if let Some(out) = out {
                write_atomic(&out, curve.to_csv().as_bytes())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
