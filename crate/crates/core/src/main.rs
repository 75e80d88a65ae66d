use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alive_twist::criteria::{selftest, Level};
use alive_twist::experiment::{
    load_returns, read_json, read_observations, run_filter, run_pmmh, simulate_dataset, variance_grid, write_csv,
    write_json, FilterAlgo, FilterConfig, GridConfig, PmmhConfig,
};
use alive_twist::pmmh::FilterKind;
use alive_twist::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Alive and twisted alive particle filters, and PMMH built on them")]
struct Cli {
    /// Worker threads; defaults to the number of cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the model in a filter config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one filter and write the per-step normalising-constant factors.
    Filter {
        #[arg(long, value_enum)]
        algo: FilterAlgo,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Observations CSV as written by `simulate`; simulated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides the lookahead lag of the config.
        #[arg(long)]
        lag: Option<usize>,
    },
    /// Log-variance differences between the alive and twisted alive filters over a grid.
    VarianceGrid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Particle marginal Metropolis-Hastings for the stochastic-volatility model.
    Pmmh {
        #[arg(long, value_enum)]
        algo: FilterKind,
        #[arg(long)]
        config: PathBuf,
        /// Either a `date,close` price CSV or an observations CSV from `simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving chain.csv, acf.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle checks; exits with status 2 if any fails.
    Selftest {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const USAGE: u8 = 1;
const SELFTEST_FAILED: u8 = 2;
const CAP_EXCEEDED: u8 = 3;

fn observations(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().any(|h| h == "observation") {
        read_observations(path)
    } else {
        load_returns(path, None)
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Simulate { config, seed, out } => {
            let cfg: FilterConfig = read_json(&config)?;
            write_csv(&out, &simulate_dataset(&cfg.model, cfg.steps, seed)?)?;
        }
        Command::Filter {
            algo,
            config,
            seed,
            out,
            data,
            lag,
        } => {
            let mut cfg: FilterConfig = read_json(&config)?;
            if let Some(l) = lag {
                cfg.lag = l;
            }
            let ys = match data {
                Some(p) => read_observations(&p)?,
                None => simulate_dataset(&cfg.model, cfg.steps, seed)?
                    .iter()
                    .map(|r| r.observation)
                    .collect(),
            };
            write_csv(&out, &run_filter(&cfg, algo, &ys, seed)?)?;
        }
        Command::VarianceGrid { config, seed, out } => {
            let cfg: GridConfig = read_json(&config)?;
            write_csv(&out, &variance_grid(&cfg, seed)?)?;
        }
        Command::Pmmh {
            algo,
            config,
            data,
            seed,
            out,
        } => {
            let cfg: PmmhConfig = read_json(&config)?;
            let ys = observations(&data)?;
            let output = run_pmmh(&cfg, algo, &ys, seed)?;
            fs::create_dir_all(&out)?;
            write_csv(&out.join("chain.csv"), &output.chain_rows())?;
            write_csv(&out.join("acf.csv"), &output.acf_rows(cfg.max_lag))?;
            write_json(&out.join("summary.json"), &output.summary)?;
        }
        Command::Selftest { level, seed, out } => {
            let report = selftest(level, seed);
            for check in &report {
                println!("{check}");
            }
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            if report.iter().any(|c| !c.passed) {
                return Ok(SELFTEST_FAILED);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::CapExceeded { .. } => CAP_EXCEEDED,
                _ => USAGE,
            })
        }
    }
}
