use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftte::experiment::{
    cmd_report, cmd_run, cmd_sweep, prepare, report_resources, resolve_out_dir, ExperimentConfig,
    SweepAxis,
};
use ftte::protocol::Strategy;
use ftte::Result;

#[derive(Parser)]
#[command(
    name = "ftte",
    version,
    about = "Semi-asynchronous federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`, then `./runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override such as `strategy=sync` or `dataset.dim=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (all repeats).
    Run(Common),
    /// Run an experiment for every value of one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// straggler_fraction, delay_max, num_clients, alpha or strategy.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated strategies to run at every point.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
    },
    /// Speedup table from the summaries in a directory.
    Report {
        /// Directory holding `summary.json` files (directly or one level down).
        dir: PathBuf,
    },
    /// Memory and payload of the selected mask.
    Resources(Common),
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let out = resolve_out_dir(&cfg, common.out.as_deref());
            let report = cmd_run(&cfg, &out)?;
            for r in &report.runs {
                let m = &r.metrics;
                println!(
                    "{} repeat {}: {} (final step {}, sim time {:.1} s)",
                    r.strategy,
                    r.repeat,
                    m.steps_to_target
                        .map_or("target not reached".to_string(), |s| format!(
                            "target at step {s}"
                        )),
                    m.final_step,
                    m.final_sim_time_s,
                );
            }
            println!("wrote {}", out.display());
            Ok(if report.all_reached() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Sweep {
            common,
            axis,
            values,
            strategies,
        } => {
            let cfg = common.load()?;
            let out = resolve_out_dir(&cfg, common.out.as_deref());
            let result = cmd_sweep(&cfg, axis, &values, &strategies, &out)?;
            print!("{}", result.to_csv()?);
            for f in &result.failures {
                eprintln!("{axis}={} {}: {}", f.axis_value, f.strategy, f.error);
            }
            Ok(
                if result.failures.is_empty() && result.rows.iter().all(|r| r.reached) {
                    ExitCode::SUCCESS
                } else if result.failures.is_empty() {
                    ExitCode::from(2)
                } else {
                    ExitCode::from(1)
                },
            )
        }
        Command::Report { dir } => {
            print!("{}", cmd_report(&dir)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Resources(common) => {
            let cfg = common.load()?;
            let p = prepare(&cfg, 0)?;
            let report = report_resources(&p.spec, &p.mask, &p.memory_model)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
