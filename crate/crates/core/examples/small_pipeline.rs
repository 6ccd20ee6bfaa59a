//! Runs every pipeline stage on a two-target toy configuration and prints
//! the benchmark rows. Artifacts go to the directory given (default
//! `runs/small`).
//!
//! `cargo run --release --example small_pipeline -- runs/small`

use motion_manifold::cliio::config::ToolkitConfig;
use motion_manifold::cliio::pipeline::Pipeline;
use motion_manifold::planner::TABLE_ORDER;
use motion_manifold::task::TaskSpace;

fn main() -> motion_manifold::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/small".into());
    let mut cfg = ToolkitConfig::default();
    cfg.out_dir = out.into();
    cfg.space = TaskSpace::grid(0.8, 1.0, 2, 0.1, 0.1, 1);
    cfg.collect.attempts_per_task = 10;
    cfg.dmm.epochs = 100;
    cfg.flow.epochs = 200;
    cfg.tmo.steps = 100;
    cfg.eval.samples_per_task = 50;
    cfg.validate()?;

    let p = Pipeline::new(cfg);
    println!("collected {} motions", p.collect()?.entries.len());
    p.train_dmm()?;
    p.train_flow()?;
    p.finetune()?;
    for r in p.evaluate()? {
        let rates: Vec<String> = TABLE_ORDER.iter().map(|&c| format!("{} {:.0}", c.label(), r.rate(c))).collect();
        println!(
            "{:<13} {:<6} SR {:5.1}  {}  kept {:.0}%",
            r.method,
            r.grid,
            r.success_rate,
            rates.join(" "),
            r.retention
        );
    }
    Ok(())
}
