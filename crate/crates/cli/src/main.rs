use anyhow::{bail, Context};
use byzcode::config::RunConfig;
use byzcode::io::write_matrix;
use byzcode::linalg::Matrix;
use byzsim::{gen_dataset, load_dataset, run_experiment, verify_products, verify_trajectories};
use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "byzsim", about = "Coded optimization under Byzantine workers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic regression dataset as X.txt and y.txt.
    Gen {
        /// Take n, d and the seed from this config's synthetic dataset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run coded and serial optimizers and write per-iteration CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check exact recovery and serial equivalence for a config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Also write the run's CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Randomized product checks per `t`.
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Gen { config, n, d, out, seed_override } => {
            let (mut n0, mut d0, mut seed) = (None, None, 0);
            if let Some(path) = &config {
                let cfg = load(path, None)?;
                if let byzcode::config::DatasetSource::Synthetic { n, d } = cfg.dataset {
                    (n0, d0) = (Some(n), Some(d));
                }
                seed = cfg.seed;
            }
            let (Some(n), Some(d)) = (n.or(n0), d.or(d0)) else {
                bail!("gen needs --n and --d or a config with a synthetic dataset");
            };
            let data = gen_dataset(n, d, seed_override.unwrap_or(seed));
            std::fs::create_dir_all(&out)?;
            write_matrix(&out.join("X.txt"), &data.x)?;
            write_matrix(&out.join("y.txt"), &Matrix::from_vec(n, 1, data.y))?;
            write_matrix(&out.join("theta.txt"), &Matrix::from_vec(d, 1, data.theta.unwrap_or_default()))?;
            Ok(true)
        }
        Command::Run { config, out, seed_override } => {
            let cfg = load(&config, seed_override)?;
            let data = load_dataset(&cfg)?;
            match out {
                Some(path) => run_experiment(&cfg, &data, BufWriter::new(File::create(&path)?))?,
                None => run_experiment(&cfg, &data, std::io::stdout().lock())?,
            };
            Ok(true)
        }
        Command::Verify { config, out, seed_override, trials } => {
            let cfg = load(&config, seed_override)?;
            let mut checks = verify_products(&cfg, trials)?;
            let data = load_dataset(&cfg)?;
            let records = match out {
                Some(path) => run_experiment(&cfg, &data, BufWriter::new(File::create(&path)?))?,
                None => run_experiment(&cfg, &data, std::io::sink())?,
            };
            checks.push(verify_trajectories(&records));
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
