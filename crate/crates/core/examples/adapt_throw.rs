//! Replans a throw mid-motion with trained models from a pipeline output
//! directory (`mmp collect`, `train-dmm`, `train-flow`, `finetune`).
//!
//! `cargo run --release --example adapt_throw -- runs/default 0.8 0.0 1.1 0.2 0.5`

use motion_manifold::cliio::config::ToolkitConfig;
use motion_manifold::cliio::pipeline::{Pipeline, Scenario, ScenarioEvent};
use motion_manifold::task::TaskParam;

fn main() -> motion_manifold::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().cloned().unwrap_or_else(|| "runs/default".into());
    let num = |i: usize, d: f64| args.get(i).and_then(|a| a.parse().ok()).unwrap_or(d);

    let mut cfg = ToolkitConfig::default();
    cfg.out_dir = out.into();
    let pipeline = Pipeline::new(cfg);
    let scenario = Scenario {
        start: TaskParam::new(num(1, 0.8), num(2, 0.0)),
        event: vec![ScenarioEvent {
            time: num(5, 0.5),
            r: num(3, 1.1),
            h: num(4, 0.2),
        }],
    };
    let outcome = pipeline.adapt(&scenario)?;
    for e in &outcome.events {
        println!(
            "switch at {:.2} s to ({}, {}): {}/{} motions kept, joined at {:.3} s (phase gap {:.3} rad), \
             transition after {} attempts, boundary residual {:.1e}, {:.3} s",
            e.time,
            e.tau.r,
            e.tau.h,
            e.retained,
            e.generated,
            e.attach_time,
            e.phase_distance,
            e.transition_attempts,
            e.boundary_residual,
            e.planning_seconds
        );
    }
    println!(
        "release at {:.3} s, miss {:.4} m, feasible {}, junction jump {:.1e}",
        outcome.schedule.release, outcome.report.distance, outcome.report.feasible, outcome.junction_residual
    );
    Ok(())
}
