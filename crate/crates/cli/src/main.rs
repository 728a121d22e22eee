use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scoba::harness::{self, Domain, SweepSpec, TrialConfig};

#[derive(Parser)]
#[command(name = "scoba-bench", about = "Online task-allocation benchmarks for conveyor and drone domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials of one config file and write per-trial metrics.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter sweep and write one summary row per (value, planner).
    Sweep {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time planner calls on synthetic instances of increasing size.
    Timing {
        /// Optional config; its domain, seed and parameters are used.
        config: Option<PathBuf>,
        /// Overrides the config's domain.
        #[arg(long)]
        domain: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Perfect-grasp grid over belt speed and arrival probability.
    OracleCheck {
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn apply(&self, cfg: &mut TrialConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        cfg.validate()?;
        Ok(())
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            if n == 0 {
                bail!("--threads must be at least 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("starting worker pool")?;
        }
        Ok(())
    }

    fn write(&self, csv: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<TrialConfig> {
    match path {
        Some(p) => TrialConfig::from_toml(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(TrialConfig::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, common } => {
            common.init_threads()?;
            let mut cfg = load_config(Some(&config))?;
            common.apply(&mut cfg)?;
            let metrics = harness::run_trials(&cfg)?;
            let (mean, se) = harness::mean_stderr(&metrics.iter().map(|m| m.fraction).collect::<Vec<_>>());
            eprintln!(
                "{} / {}: mean fraction {mean:.5} (stderr {se:.5}) over {} trials",
                cfg.domain.name(),
                cfg.planner.name(),
                metrics.len()
            );
            common.write(&harness::to_csv(&metrics)?)
        }
        Command::Sweep { spec, common } => {
            common.init_threads()?;
            let mut spec = SweepSpec::from_toml(&read(&spec)?).with_context(|| format!("parsing {}", spec.display()))?;
            common.apply(&mut spec.base)?;
            common.write(&harness::to_csv(&harness::run_sweep(&spec)?)?)
        }
        Command::Timing { config, domain, common } => {
            common.init_threads()?;
            let mut cfg = load_config(config.as_deref())?;
            if let Some(d) = domain {
                let d = Domain::parse(&d)?;
                if d != cfg.domain {
                    cfg = TrialConfig { domain: d, horizon: None, ..cfg };
                }
            }
            // Timing repetitions default to 10 unless requested explicitly.
            if common.trials.is_none() && config.is_none() {
                cfg.trials = 10;
            }
            common.apply(&mut cfg)?;
            common.write(&harness::to_csv(&harness::timing_report(&cfg)?)?)
        }
        Command::OracleCheck { config, common } => {
            common.init_threads()?;
            let mut cfg = load_config(config.as_deref())?;
            common.apply(&mut cfg)?;
            let rows = harness::oracle_grid(&cfg)?;
            for r in &rows {
                eprintln!("{}: {:.5}", r.value, r.mean_fraction);
            }
            common.write(&harness::to_csv(&rows)?)
        }
    }
}
