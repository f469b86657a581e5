use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use conflictfdr::config::ExperimentConfig;
use conflictfdr::engine::Algorithm;
use conflictfdr::gamma::{make_gamma, GammaKind, GammaSequence, DEFAULT_HORIZON};
use conflictfdr::harness::{run_experiment, run_experiment_with_threads};
use conflictfdr::realdata::{self, DEFAULT_ALGORITHMS, DEFAULT_LAMBDA};
use conflictfdr::{Error, Result};

#[derive(Parser)]
#[command(name = "conflictfdr", version, about = "Online FDR control over conflict sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated experiment and write the result table.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override n_trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Replay a p-value CSV (columns pvalue, batch_id) and count rejections.
    RealData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alpha_grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        algos: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
    },
    /// Print the first n discount weights as CSV.
    GammaDump {
        #[arg(long, value_enum, default_value_t = Kind::LogDecay)]
        kind: Kind,
        #[arg(long, default_value_t = 2.0)]
        exponent: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    #[value(name = "LOG_DECAY", alias = "log-decay")]
    LogDecay,
    #[value(name = "POWER_DECAY", alias = "power-decay")]
    PowerDecay,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            trials,
            seed,
            threads,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(n) = trials {
                cfg.n_trials = n;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let result = match threads {
                Some(t) => run_experiment_with_threads(&cfg, t)?,
                None => run_experiment(&cfg)?,
            };
            result.write_csv(create(&out)?)?;
            eprintln!(
                "{}: {} rows, config {}",
                cfg.experiment,
                result.rows.len(),
                cfg.config_hash()
            );
        }
        Command::RealData {
            input,
            alpha_grid,
            out,
            algos,
            lambda,
        } => {
            let stream = realdata::ingest_pvalues(&input)?;
            let algorithms: Vec<Algorithm> = if algos.is_empty() {
                DEFAULT_ALGORITHMS.to_vec()
            } else {
                algos.iter().map(|a| a.parse()).collect::<Result<_>>()?
            };
            let gamma = GammaSequence::default_log_decay();
            let rows = realdata::run_real_data(&stream, &algorithms, &alpha_grid, lambda, &gamma)?;
            realdata::write_rows(create(&out)?, &rows)?;
        }
        Command::GammaDump {
            kind,
            exponent,
            n,
            horizon,
        } => {
            let kind = match kind {
                Kind::LogDecay => GammaKind::LogDecay,
                Kind::PowerDecay => GammaKind::PowerDecay { exponent },
            };
            let g = make_gamma(kind, horizon)?;
            let mut w = BufWriter::new(io::stdout().lock());
            writeln!(w, "j,gamma")?;
            for j in 1..=n {
                writeln!(w, "{j},{:e}", g.at(j as i64))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
