use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use apuf::FeatureMapKind;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Failure;
use config::RunConfig;

/// Arbiter PUF simulation, CRP datasets and logistic-regression attacks.
#[derive(Debug, Parser)]
#[command(name = "apuf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a device and write a CRP dataset.
    Generate(Flags),
    /// Train per-bit models on a dataset and report prediction rates.
    Attack {
        /// CRP dataset file.
        dataset: PathBuf,
        /// Read whitespace-separated `challenge response` rows instead,
        /// with widths taken from --n and --chains.
        #[arg(long)]
        rows: bool,
        #[command(flatten)]
        flags: Flags,
    },
    /// Attack prefixes of one dataset over a grid of CRP counts and test fractions.
    Sweep(Flags),
    /// Uniformity, uniqueness, reliability and bit aliasing of simulated instances.
    Metrics(Flags),
    /// Compare the linear delay model against the stage-by-stage race.
    OracleCheck {
        #[command(flatten)]
        flags: Flags,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Args)]
struct Flags {
    /// `key = value` config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Stages per chain (challenge width).
    #[arg(long)]
    n: Option<usize>,
    /// Parallel chains: 1 for a classical chain, otherwise equal to n.
    #[arg(long)]
    chains: Option<usize>,
    /// Number of CRPs to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_features)]
    features: Option<FeatureMapKind>,
    /// Test fraction in (0, 1).
    #[arg(long = "test", value_name = "FRACTION")]
    test: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    delay_mean: Option<f64>,
    #[arg(long)]
    delay_sigma: Option<f64>,
    /// Comma-separated CRP counts for sweep.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Comma-separated test fractions for sweep.
    #[arg(long, value_delimiter = ',')]
    test_fractions: Option<Vec<f64>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    challenges: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short = 'o', long = "output", value_name = "PATH")]
    output: Option<PathBuf>,
}

fn parse_features(s: &str) -> Result<FeatureMapKind, String> {
    s.parse().map_err(|e: apuf::Error| e.to_string())
}

impl Flags {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
            None => RunConfig::default(),
        };
        cfg.merge(RunConfig {
            n: self.n,
            chains: self.chains,
            delay_mean: self.delay_mean,
            delay_sigma: self.delay_sigma,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            features: self.features,
            lr: self.lr,
            epochs: self.epochs,
            l2: self.l2,
            tol: self.tol,
            count: self.count,
            test: self.test,
            counts: self.counts,
            test_fractions: self.test_fractions,
            instances: self.instances,
            challenges: self.challenges,
            repetitions: self.repetitions,
            output: self.output,
            threads: self.threads,
        });
        cfg.validate().map_err(Failure::Usage)?;
        if let Some(threads) = cfg.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Failure::Usage(anyhow!("thread pool: {e}")))?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(flags) => commands::generate(&flags.resolve()?),
        Command::Attack {
            dataset,
            rows,
            flags,
        } => commands::attack(&flags.resolve()?, &dataset, rows),
        Command::Sweep(flags) => commands::sweep(&flags.resolve()?),
        Command::Metrics(flags) => commands::metrics(&flags.resolve()?),
        Command::OracleCheck {
            flags,
            inject_fault,
        } => commands::oracle_check(&flags.resolve()?, inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
