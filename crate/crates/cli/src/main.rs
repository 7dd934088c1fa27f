use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use faceage_cli::{
    cmd_curve, cmd_evaluate, cmd_extract, cmd_learn_filters, cmd_predict, cmd_train, evaluate_outputs, CliResult, Protocol, RunConfig,
};

#[derive(Parser)]
#[command(name = "faceage", version, about = "Facial age estimation from LBP and BSIF features")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits, folds, patch sampling and ICA (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

/// Settings that several commands can override on the command line.
#[derive(Args, Default)]
struct Overrides {
    /// ROI derivation: `ratios` (eye-distance proportions) or `bbox` (landmark bounding box).
    #[arg(long)]
    roi_mode: Option<String>,
    /// Descriptors to extract: `lbp`, `bsif` or `both`.
    #[arg(long)]
    descriptors: Option<String>,
    /// BSIF filter-bank file.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Regressor: `svr` or `krr`.
    #[arg(long)]
    algorithm: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a BSIF filter bank by ICA on patches of the training faces.
    LearnFilters {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Filter side length (odd).
        #[arg(long)]
        size: Option<usize>,
        /// Number of filters (bits per code).
        #[arg(long)]
        filters: Option<usize>,
        /// Number of sampled patches.
        #[arg(long)]
        patches: Option<usize>,
        /// Use every manifest record instead of the holdout training half.
        #[arg(long)]
        all_records: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract a feature matrix for every manifest record.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Select hyperparameters by cross-validation and train a model.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the age of one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate under the holdout or leave-one-person-out protocol.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// `holdout` or `lopo`.
        #[arg(long)]
        protocol: Option<String>,
        /// Take hyperparameters from this model instead of cross-validating.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory for predictions.csv, curve.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Cumulative-score curve of a predictions file.
    Curve {
        #[arg(long)]
        predictions: PathBuf,
        /// Highest error level in years.
        #[arg(long)]
        max_level: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn apply(cfg: &mut RunConfig, o: Overrides) {
    if let Some(v) = o.roi_mode {
        cfg.normalize.roi_mode = v;
    }
    if let Some(v) = o.descriptors {
        cfg.features.descriptors = v;
    }
    if let Some(v) = o.bank {
        cfg.features.bank = Some(v);
    }
    if let Some(v) = o.algorithm {
        cfg.regression.algorithm = v;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::LearnFilters {
            manifest,
            out,
            size,
            filters,
            patches,
            all_records,
            overrides,
        } => {
            apply(&mut cfg, overrides);
            cfg.filters.l = size.unwrap_or(cfg.filters.l);
            cfg.filters.n = filters.unwrap_or(cfg.filters.n);
            cfg.filters.patches = patches.unwrap_or(cfg.filters.patches);
            let s = cmd_learn_filters(&cfg, &manifest, all_records, &out)?;
            println!(
                "learned {} {}x{} filters from {} faces ({} skipped), hash {}",
                s.bank.n(),
                s.bank.l(),
                s.bank.l(),
                s.sources,
                s.skipped,
                s.bank.content_hash()
            );
        }
        Command::Extract { manifest, out, overrides } => {
            apply(&mut cfg, overrides);
            let s = cmd_extract(&cfg, &manifest, &out)?;
            println!("extracted {} x {} features ({} records skipped)", s.rows, s.dims, s.skipped);
            println!("layout: {}", s.layout);
        }
        Command::Train {
            features,
            manifest,
            out,
            overrides,
        } => {
            apply(&mut cfg, overrides);
            let s = cmd_train(&cfg, &features, &manifest, &out)?;
            println!("trained on {} samples: {}", s.samples, s.cell);
            println!(
                "cv MAE {:.4}, training MAE {:.4} (mean predictor {:.4})",
                s.cv_mae, s.train_mae, s.mean_predictor_mae
            );
        }
        Command::Predict {
            model,
            image,
            landmarks,
            overrides,
        } => {
            apply(&mut cfg, overrides);
            println!("{:.2}", cmd_predict(&cfg, &model, &image, &landmarks)?);
        }
        Command::Evaluate {
            features,
            manifest,
            protocol,
            model,
            out,
            overrides,
        } => {
            apply(&mut cfg, overrides);
            let protocol: Protocol = protocol.as_deref().unwrap_or(&cfg.evaluate.protocol).parse()?;
            let report = cmd_evaluate(&cfg, &features, &manifest, protocol, model.as_deref(), &out)?;
            print!("{}", report.to_text());
            let (p, c, r) = evaluate_outputs(&out);
            println!("\nwrote {}, {}, {}", p.display(), c.display(), r.display());
        }
        Command::Curve {
            predictions,
            max_level,
            out,
        } => {
            let curve = cmd_curve(&predictions, max_level.unwrap_or(cfg.evaluate.max_level), &out)?;
            for (l, v) in curve.levels.iter().zip(&curve.values) {
                println!("{l:>3}  {v:.2}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
