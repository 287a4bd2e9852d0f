//! `coopex` — run cooperative energy-exchange simulations, settlements,
//! and the two benchmark experiments from the command line.
//!
//! Every subcommand resolves a scenario config (JSON file or defaults),
//! writes its artifacts into `--out-dir`, and echoes the resolved config
//! as `scenario.json` for provenance. Outputs are pure functions of the
//! config: re-running a command rewrites byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coopex::data::synthesize_profiles;
use coopex::mechanism::{run_simulation_with_dumps, Mechanism};
use coopex::settlement::settle_scenario;
use coopex::{Scenario, ScenarioConfig};
use coopex_cli::experiments::{
    run_experiment_loss_reduction, run_experiment_welfare, DEFAULT_COHORT_SIZES, DEFAULT_ETA_STDS,
};

#[derive(Parser)]
#[command(
    name = "coopex",
    version,
    about = "Cooperative energy exchange simulator, settlement, and experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mechanism over a scenario and export its trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Mechanism: 0 = no flexibility, 1 = individual storage,
        /// 2 = exchange and storage.
        #[arg(long, default_value_t = 2)]
        mechanism: u8,
        /// Also write every cleared exchange instance as JSON lines.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Settle a cooperative across all three mechanisms.
    Settle {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep cohort sizes and efficiency spreads, comparing storage
    /// losses between individual control and the exchange.
    ExpLoss {
        #[command(flatten)]
        common: Common,
        /// Independently seeded scenarios per grid cell.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Cohort sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Efficiency standard deviations, comma separated.
        #[arg(long, value_delimiter = ',')]
        stds: Option<Vec<f64>>,
    },
    /// Settle one cooperative and report per-agent utility improvements.
    ExpWelfare {
        #[command(flatten)]
        common: Common,
    },
    /// Emit a synthetic profile CSV in the loader's schema.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of households (overrides the config).
        #[arg(long)]
        n: Option<usize>,
        /// Horizon in days (overrides the config).
        #[arg(long)]
        days: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Output serialization.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Common {
    fn load_config(&self) -> Result<ScenarioConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Every result set carries the resolved config for provenance.
fn echo_config(dir: &Path, config: &ScenarioConfig) -> Result<()> {
    write_json(dir, "scenario.json", config)
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            common,
            mechanism,
            dump_lp,
        } => {
            let config = common.load_config()?;
            let Some(mechanism) = Mechanism::from_index(mechanism) else {
                bail!("mechanism must be 0, 1 or 2, got {mechanism}");
            };
            let scenario = Scenario::from_config(&config)?;
            let include = vec![true; scenario.n_prosumers()];
            let (trace, dumps) =
                run_simulation_with_dumps(&scenario, mechanism, &include, dump_lp)?;
            echo_config(&common.out_dir, &config)?;
            match common.format {
                Format::Csv => trace.write_csv(create(&common.out_dir, "trace.csv")?)?,
                Format::Json => write_json(&common.out_dir, "trace.json", &trace)?,
            }
            if dump_lp {
                let mut out = create(&common.out_dir, "lp_dumps.jsonl")?;
                for dump in &dumps {
                    serde_json::to_writer(&mut out, dump)?;
                    writeln!(out)?;
                }
            }
        }
        Command::Settle { common } => {
            let config = common.load_config()?;
            let scenario = Scenario::from_config(&config)?;
            let report = settle_scenario(&scenario)?;
            echo_config(&common.out_dir, &config)?;
            match common.format {
                Format::Csv => report.write_csv(create(&common.out_dir, "settlement.csv")?)?,
                Format::Json => write_json(&common.out_dir, "settlement.json", &report)?,
            }
        }
        Command::ExpLoss {
            common,
            trials,
            sizes,
            stds,
        } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let config = common.load_config()?;
            let sizes = sizes.unwrap_or_else(|| DEFAULT_COHORT_SIZES.to_vec());
            let stds = stds.unwrap_or_else(|| DEFAULT_ETA_STDS.to_vec());
            let report = run_experiment_loss_reduction(&config, &sizes, &stds, trials)?;
            echo_config(&common.out_dir, &config)?;
            match common.format {
                Format::Csv => {
                    report.write_rows_csv(create(&common.out_dir, "loss_rows.csv")?)?;
                    report.write_cells_csv(create(&common.out_dir, "loss_summary.csv")?)?;
                }
                Format::Json => write_json(&common.out_dir, "experiment.json", &report)?,
            }
        }
        Command::ExpWelfare { common } => {
            let config = common.load_config()?;
            let report = run_experiment_welfare(&config)?;
            echo_config(&common.out_dir, &config)?;
            match common.format {
                Format::Csv => {
                    report.write_rows_csv(create(&common.out_dir, "welfare_rows.csv")?)?;
                    report.write_improvements_csv(create(&common.out_dir, "improvements.csv")?)?;
                }
                Format::Json => write_json(&common.out_dir, "experiment.json", &report)?,
            }
        }
        Command::GenData { common, n, days } => {
            let mut config = common.load_config()?;
            if let Some(n) = n {
                config.n_prosumers = n;
            }
            if let Some(days) = days {
                config.days = days;
            }
            config.validate()?;
            // Raw profiles, not a resolved scenario: PV shifts and
            // efficiency sampling are applied on load, so emitting them
            // here would double-apply.
            let scenario = Scenario::from_parts(config.clone(), synthesize_profiles(&config))?;
            let out = create(&common.out_dir, "profiles.csv")?;
            coopex::data::write_profiles_csv(
                out,
                &scenario.profiles,
                scenario.start,
                config.dt_hours,
            )?;
        }
    }
    Ok(())
}
