//! Fits a task-conditioned flow to two latent clusters and samples it.
//!
//! `cargo run --release --example latent_flow`

use motion_manifold::latentflow::{sample, train_flow, FlowConfig, LatentPair};
use motion_manifold::learncore::rng;
use motion_manifold::task::{TaskParam, TaskSpace};
use rand::Rng as _;
use rand_distr::StandardNormal;

fn main() -> motion_manifold::Result<()> {
    let near = TaskParam::new(0.7, 0.0);
    let far = TaskParam::new(1.2, 0.2);
    let mut r = rng(0);
    let mut pairs: Vec<LatentPair> = Vec::new();
    for (tau, center) in [(near, [2.0, 0.0]), (far, [-2.0, 1.0])] {
        for _ in 0..100 {
            let z = center.iter().map(|c| c + 0.2 * r.sample::<f64, _>(StandardNormal)).collect();
            pairs.push((tau, z));
        }
    }
    let cfg = FlowConfig {
        hidden: vec![64, 64],
        epochs: 300,
        batch_size: 32,
        lr: 3e-3,
        ..FlowConfig::default()
    };
    let (field, losses) = train_flow(&pairs, &TaskSpace::default(), &cfg, 1)?;
    println!("loss {:.3} -> {:.3}", losses[0], losses[losses.len() - 1]);
    for tau in [near, far, TaskParam::new(0.95, 0.1)] {
        let z = sample(&field, tau, 200, &cfg, 2)?;
        let mean: Vec<f64> = z.row_iter().map(|row| row.mean()).collect();
        println!("tau ({}, {}): sample mean ({:.2}, {:.2})", tau.r, tau.h, mean[0], mean[1]);
    }
    Ok(())
}
