use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchq::neuralq::ModelKind;
use patchq_cli::commands::{self, StudyInput};
use patchq_cli::{Context, Outcome, Settings};

#[derive(Parser)]
#[command(name = "patchq", version, about = "Picture and patch quality pipeline")]
struct Cli {
    /// Seed for every stochastic step (default: `seed` from the config, else 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-picture work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Objective sampling features of every picture in a directory.
    Features {
        #[arg(long)]
        images: PathBuf,
        /// CSV with columns id,face_count.
        #[arg(long)]
        faces: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram-matched subset selection.
    Sample {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        k: usize,
        /// Directory holding the pictures (default: the features file's directory).
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Three constrained random patches per manifest entry.
    Crop {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subject rejection, MOS and consistency from ratings or a simulation.
    Study {
        #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
        ratings: Option<PathBuf>,
        /// JSON simulation description.
        #[arg(long)]
        simulate: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the (simulated) ratings table.
        #[arg(long)]
        ratings_out: Option<PathBuf>,
    },
    /// Train a quality model on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// baseline, roipool or feedback (default: `model` from the config).
        #[arg(long)]
        model: Option<ModelKind>,
        /// MOS table filling missing manifest scores (patch k of id as id#k).
        #[arg(long)]
        mos: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss_curve: Option<PathBuf>,
    },
    /// SRCC and LCC of a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        mos: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block quality map rendered over a picture.
    Map {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> patchq::Result<Outcome> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let seed = cli.seed.unwrap_or(settings.train.seed);
    let ctx = Context { seed, jobs: cli.jobs.max(1), settings };
    match cli.command {
        Command::Features { images, faces, out } => commands::cmd_features(&ctx, &images, faces.as_deref(), &out),
        Command::Sample { features, targets, k, images, out } => {
            commands::cmd_sample(&ctx, &features, &targets, k, images.as_deref(), &out)
        }
        Command::Crop { manifest, out } => commands::cmd_crop(&ctx, &manifest, &out),
        Command::Study { ratings, simulate, out, report, ratings_out } => {
            let input = match (ratings, simulate) {
                (Some(r), _) => StudyInput::Ratings(r),
                (None, Some(s)) => StudyInput::Simulate(s),
                (None, None) => unreachable!("clap requires one input"),
            };
            commands::cmd_study(&ctx, &input, &out, report.as_deref(), ratings_out.as_deref())
        }
        Command::Train { manifest, model, mos, out, loss_curve } => {
            commands::cmd_train(&ctx, &manifest, model, mos.as_deref(), &out, loss_curve.as_deref())
        }
        Command::Eval { checkpoint, manifest, mos, out } => {
            commands::cmd_eval(&ctx, &checkpoint, &manifest, mos.as_deref(), out.as_deref())
        }
        Command::Map { checkpoint, image, out, csv, alpha, grid } => {
            commands::cmd_map(&ctx, &checkpoint, &image, &out, csv.as_deref(), alpha, grid)
        }
        Command::Config => {
            let mut s = ctx.settings.clone();
            s.train.seed = seed;
            print!("{}", s.to_text());
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
