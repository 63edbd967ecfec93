//! `meshwalk`: synthesize or ingest mesh datasets, resample them, train the
//! walk encoder, embed, and evaluate.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data or I/O
//! error, 3 numeric divergence.

mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshwalk::eval::SvmConfig;
use meshwalk::mesh::{Rotation, ShapeClass};
use meshwalk::resample::ResampleTargets;
use meshwalk::walker::WalkConfig;

use commands::{data, dump, eval, model};
use error::CliResult;

#[derive(Parser)]
#[command(name = "meshwalk", version, about = "Self-supervised mesh features from random surface walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset (OFF files + manifest.jsonl).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "sphere,box,cylinder,torus,cone")]
        classes: Vec<ShapeClass>,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random orientation of each mesh: none, yaw or full.
        #[arg(long, default_value = "full", value_parser = parse_rotation)]
        rotation: Rotation,
    },
    /// Build a manifest over a class-per-folder tree of OFF/OBJ files.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        /// Manifest file to write.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the per-class 80/20 train/test split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Resample every manifest mesh to each target face count.
    Prep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
        targets: Vec<usize>,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Train from a key=value run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the checkpoint in out_dir, if there is one.
        #[arg(long)]
        resume: bool,
    },
    /// Compute one feature vector per source model.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Embeddings file to write (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Also write the embeddings as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Walks per model (default: embed_walks from the training config).
        #[arg(long)]
        walks: Option<usize>,
    },
    /// Retrieval mAP report, or the nearest neighbours of one model.
    Retrieve {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_enum, default_value_t = eval::Queries::Auto)]
        queries: eval::Queries,
        /// List the k nearest neighbours of this source id instead.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a linear SVM on the training split, report test accuracy.
    Svm {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = SvmConfig::default().lambda)]
        lambda: f64,
        #[arg(long, default_value_t = SvmConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and loss.
    Gradcheck {
        #[arg(long, default_value = "desk")]
        preset: String,
    },
    /// Walk inspection.
    Walks {
        #[command(subcommand)]
        action: WalksAction,
    },
    /// Cluster state inspection.
    Clusters {
        #[command(subcommand)]
        action: ClustersAction,
    },
}

#[derive(Subcommand)]
enum WalksAction {
    /// Emit seeded walks as JSON lines.
    Dump {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Walks per mesh.
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = WalkConfig::default().length)]
        walk_len: usize,
        #[arg(long, default_value_t = WalkConfig::default().jump_prob)]
        jump_prob: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClustersAction {
    /// Emit the cluster means and assignment counts of a checkpoint.
    Dump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_rotation(s: &str) -> Result<Rotation, String> {
    match s {
        "none" => Ok(Rotation::None),
        "yaw" => Ok(Rotation::Yaw),
        "full" => Ok(Rotation::Full),
        _ => Err(format!("unknown rotation `{s}` (none, yaw, full)")),
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth { out, classes, per_class, seed, rotation } => data::synth(&classes, per_class, seed, rotation, &out),
        Command::Ingest { root, out, seed } => data::ingest(&root, seed, &out),
        Command::Prep { manifest, out, targets, tolerance, threads } => {
            model::set_threads(threads);
            let targets = ResampleTargets { face_counts: targets, tolerance };
            data::prep(&manifest, &targets, &out)
        }
        Command::Train { config, resume } => model::train(&config, resume),
        Command::Embed { checkpoint, manifest, out, csv, walks } => {
            model::embed(&checkpoint, &manifest, walks, &out, csv.as_deref())
        }
        Command::Retrieve { embeddings, queries, query, k, out } => match query {
            Some(q) => eval::neighbours(&embeddings, &q, k),
            None => eval::retrieve(&embeddings, queries, out.as_deref()),
        },
        Command::Svm { embeddings, lambda, epochs, seed, out } => {
            let config = SvmConfig { lambda, epochs, seed };
            eval::svm(&embeddings, &config, seed, out.as_deref())
        }
        Command::Gradcheck { preset } => model::gradcheck(&preset),
        Command::Walks { action: WalksAction::Dump { mesh, manifest, count, seed, walk_len, jump_prob, out } } => {
            let meshes = dump::walk_inputs(mesh.as_deref(), manifest.as_deref())?;
            let config = WalkConfig { length: walk_len, jump_prob };
            dump::walks(&meshes, &config, count, seed, out.as_deref())
        }
        Command::Clusters { action: ClustersAction::Dump { checkpoint, out } } => dump::clusters(&checkpoint, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are configuration errors; --help and --version are not errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
