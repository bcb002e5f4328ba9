use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pdhp::commands;
use pdhp::eval::NmiNorm;
use pdhp::io::RunConfig;

#[derive(Parser)]
#[command(name = "pdhp", version, about = "Powered Dirichlet-Hawkes clustering of document streams")]
struct Cli {
    /// Seed override for generation and inference.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PDHP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Geometric,
    Arithmetic,
}

impl From<Norm> for NmiNorm {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Geometric => NmiNorm::Geometric,
            Norm::Arithmetic => NmiNorm::Arithmetic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets from a generation spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of datasets; dataset i uses seed + i.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Cluster a document stream.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score assignments against ground truth; prints JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = Norm::Geometric)]
        norm: Norm,
    },
    /// Fit and score every dataset under a directory for each r.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,2.5")]
        r: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Norm::Geometric)]
        norm: Norm,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate { spec, out, count } => {
            let dirs = commands::cmd_generate(&spec, &out, cli.seed, count)?;
            for d in dirs {
                eprintln!("wrote {}", d.display());
            }
        }
        Command::Fit { data, config, out } => {
            let cfg = load_config(config.as_ref(), cli.seed)?;
            let fit = commands::cmd_fit(&data, &cfg, &out, None)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} documents, {} clusters, outputs in {}",
                fit.result.assignments.len(),
                fit.result.clusters.len(),
                out.display()
            );
        }
        Command::Eval { pred, truth, norm } => {
            let report = commands::cmd_eval(&pred, &truth, norm.into())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep {
            data,
            r,
            config,
            out,
            norm,
        } => {
            let cfg = load_config(config.as_ref(), cli.seed)?;
            let summary = commands::cmd_sweep(&data, &r, &cfg, &out, norm.into())?;
            eprintln!("{} cells, {} failed", summary.cells, summary.failed);
            for f in &summary.failures {
                eprintln!("failed: {f}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
