//! Optimizes throwing motions for one target from several random starts.
//!
//! `cargo run --release --example optimize_throw -- 0.9 0.1 10`

use motion_manifold::datagen::{optimize_motion, retime_trim_extend, CollectConfig, OptStatus};
use motion_manifold::learncore::derive_seed;
use motion_manifold::robot::PlanarArm;
use motion_manifold::task::{TaskConfig, TaskParam, TaskSpace};

fn main() -> motion_manifold::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let tau = TaskParam::new(*args.first().unwrap_or(&0.9), *args.get(1).unwrap_or(&0.1));
    let runs = *args.get(2).unwrap_or(&5.0) as u64;

    let arm = PlanarArm::default_three_link();
    let space = TaskSpace::default();
    let task_cfg = TaskConfig::default();
    let cfg = CollectConfig::default();

    let mut ok = 0;
    for seed in 0..runs {
        let res = optimize_motion(&arm, &space, tau, &task_cfg, &cfg, derive_seed(7, &[seed]))?;
        let stored = res.status == OptStatus::Success
            && retime_trim_extend(&res.motion, &arm, &task_cfg, &cfg, seed).is_ok();
        ok += stored as usize;
        println!(
            "seed {seed}: {:?} after {} iterations in {:.2} s, miss {:.4} m, eta {:.3} s, worst constraint {:+.4}, stored {stored}",
            res.status,
            res.iterations,
            res.elapsed.as_secs_f64(),
            res.distance,
            res.motion.eta,
            res.max_violation,
        );
    }
    println!("stored {ok}/{runs} motions for r={} h={}", tau.r, tau.h);
    Ok(())
}
