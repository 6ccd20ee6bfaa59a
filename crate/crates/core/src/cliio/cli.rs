//! Argument parsing and dispatch for the `mmp` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::ToolkitConfig;
use super::pipeline::{Pipeline, Scenario};
use super::selftest;
use crate::error::{Error, Result};
use crate::planner::TABLE_ORDER;
use crate::task::TaskParam;

#[derive(Debug, Parser)]
#[command(name = "mmp", version, about = "Learned throwing-motion manifolds: data, training, planning")]
pub struct Cli {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use the decoder from before fine-tuning.
    #[arg(long, global = true)]
    pub no_tmo: bool,
    /// Skip rejection sampling.
    #[arg(long, global = true)]
    pub no_rs: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize training motions on the seen grid.
    Collect,
    /// Train encoder and decoder.
    TrainDmm,
    /// Train the task-conditioned latent flow.
    TrainFlow,
    /// Fine-tune the decoder on the task loss.
    Finetune,
    /// Benchmark generation on the seen and unseen grids.
    Evaluate,
    /// Plan one throw and write its profile.
    Plan {
        /// Target as `r,h` in meters.
        #[arg(long, value_parser = parse_task)]
        task: TaskParam,
    },
    /// Replay a scenario of target changes.
    Adapt {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the property suites.
    Selftest,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn parse_task(s: &str) -> std::result::Result<TaskParam, String> {
    let (r, h) = s.split_once(',').ok_or("expected r,h")?;
    let r: f64 = r.trim().parse().map_err(|e| format!("r: {e}"))?;
    let h: f64 = h.trim().parse().map_err(|e| format!("h: {e}"))?;
    Ok(TaskParam::new(r, h))
}

impl Cli {
    pub fn config(&self) -> Result<ToolkitConfig> {
        let mut cfg = match &self.config {
            Some(p) => ToolkitConfig::load(p)?,
            None => ToolkitConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn pct(v: f64) -> String {
    format!("{v:.1}")
}

/// Runs one command, printing a short summary to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.config()?;
    let pipeline = Pipeline {
        cfg,
        use_tmo: !cli.no_tmo,
        use_rs: !cli.no_rs,
    };
    let out = pipeline.cfg.out_dir.display().to_string();
    match &cli.command {
        Command::Collect => {
            let ds = pipeline.collect()?;
            println!("stored {} motions in {out}", ds.entries.len());
        }
        Command::TrainDmm => {
            pipeline.train_dmm()?;
            println!("wrote {out}/dmm.json");
        }
        Command::TrainFlow => {
            pipeline.train_flow()?;
            println!("wrote {out}/models.json");
        }
        Command::Finetune => {
            pipeline.finetune()?;
            println!("wrote {out}/models_tmo.json");
        }
        Command::Evaluate => {
            let rows = pipeline.evaluate()?;
            let labels: Vec<&str> = TABLE_ORDER.iter().map(|c| c.label()).collect();
            println!("{:<14} {:<7} {:>6} {}  {:>6}", "method", "grid", "SR", labels.join("   "), "kept");
            for r in &rows {
                let rates: Vec<String> = TABLE_ORDER.iter().map(|&c| format!("{:>5}", pct(r.rate(c)))).collect();
                println!(
                    "{:<14} {:<7} {:>6} {}  {:>6}",
                    r.method,
                    r.grid,
                    pct(r.success_rate),
                    rates.join(" "),
                    pct(r.retention)
                );
            }
        }
        Command::Plan { task } => {
            let (schedule, report) = pipeline.plan(*task)?;
            println!(
                "release at {:.3} s, miss {:.4} m, feasible {}, success {}",
                schedule.release, report.distance, report.feasible, report.success
            );
        }
        Command::Adapt { scenario } => {
            let outcome = pipeline.adapt(&Scenario::load(scenario)?)?;
            for e in &outcome.events {
                if e.adapted {
                    println!(
                        "t={:.3} s -> ({}, {}): kept {}/{}, attach at {:.3} s, planned in {:.3} s",
                        e.time, e.tau.r, e.tau.h, e.retained, e.generated, e.attach_time, e.planning_seconds
                    );
                } else {
                    println!("t={:.3} s -> ({}, {}): after release, ignored", e.time, e.tau.r, e.tau.h);
                }
            }
            println!(
                "final throw: miss {:.4} m, feasible {}, success {}",
                outcome.report.distance, outcome.report.feasible, outcome.report.success
            );
        }
        Command::Selftest => {
            let results = selftest::run_all(pipeline.cfg.seed);
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Planning(format!("{failed} self-test suite(s) failed")));
            }
        }
        Command::ShowConfig => print!("{}", pipeline.cfg.to_toml()),
    }
    Ok(())
}
