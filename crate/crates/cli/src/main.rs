use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use netnewton::harness::{self, ExperimentConfig, Scenario, ScenarioResult};
use netnewton::Error;

#[derive(Parser)]
#[command(name = "netnewton", version, about = "Network Newton and DGD experiments on simulated agent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write its traces.
    Run(Common),
    /// Run the histogram study over random realizations.
    Hist(Common),
    /// Run the adaptive sweep over initial penalty values.
    Ann(Common),
    /// Check weights, local derivatives and the blockwise splitting.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with `scenario` and any parameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario to use when no config file is given.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated truncation orders, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
}

impl Common {
    fn resolve(&self, forced: Option<Scenario>) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::defaults(name.parse()?),
            (None, None) => match forced {
                Some(sc) => ExperimentConfig::defaults(sc),
                None => bail!(Error::Config("give --config or --scenario".into())),
            },
        };
        if let Some(sc) = forced {
            if cfg.scenario != sc {
                bail!(Error::Config(format!("this subcommand runs {sc}, but the config selects {}", cfg.scenario)));
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(k) = &self.k {
            cfg.k_list = k.clone();
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(result: &ScenarioResult, cfg: &ExperimentConfig) {
    match result {
        ScenarioResult::Fixed(res) => print!("{}", harness::fixed_summary_csv(res, cfg.target_error)),
        ScenarioResult::Histogram(res) => print!("{}", harness::histogram_summary_csv(res)),
        ScenarioResult::Ann(res) => print!("{}", harness::ann_summary_csv(res, cfg.target_error)),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, forced) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::Hist(c) => (c, Some(Scenario::QuadraticHistogram)),
        Command::Ann(c) => (c, Some(Scenario::AnnSweep)),
        Command::Validate(c) => {
            let cfg = c.resolve(None)?;
            let lines = harness::validate(&cfg)?;
            let mut failed = 0;
            for line in &lines {
                println!("{} {}: {}", if line.passed { "PASS" } else { "FAIL" }, line.name, line.detail);
                failed += usize::from(!line.passed);
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", lines.len());
            }
            return Ok(());
        }
    };
    let cfg = common.resolve(forced)?;
    info!("running {} with seed {}", cfg.scenario, cfg.seed);
    let (result, written) = harness::run_scenario(&cfg, &common.out)
        .with_context(|| format!("scenario {} failed", cfg.scenario))?;
    print_summary(&result, &cfg);
    for path in written {
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(2),
                Some(Error::Diverged { .. }) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
