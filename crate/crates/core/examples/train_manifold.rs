//! Collects a desk dataset (or loads one), trains the motion manifold and
//! reports held-out reconstruction quality.
//!
//! `cargo run --release --example train_manifold -- [epochs] [dataset.json]`

use std::time::Instant;

use motion_manifold::datagen::{collect, CollectConfig, Dataset};
use motion_manifold::manifold::{recon_metrics, train_dmm, DmmConfig};
use motion_manifold::robot::PlanarArm;
use motion_manifold::task::{TaskConfig, TaskSpace};

fn main() -> motion_manifold::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|a| a.parse().ok()).unwrap_or(100);
    let path = args.get(1).cloned().unwrap_or_else(|| "desk_dataset.json".into());

    let dataset: Dataset = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => {
            let start = Instant::now();
            let (ds, report) = collect(
                &PlanarArm::default_three_link(),
                &TaskSpace::default(),
                &TaskConfig::default(),
                &CollectConfig::default(),
                0,
            )?;
            println!("collected {} entries in {:.1} s", ds.entries.len(), start.elapsed().as_secs_f64());
            for y in &report.yields {
                println!("  r {:.2} h {:.2}: stored {}/{}", y.tau.r, y.tau.h, y.stored, y.attempts);
            }
            std::fs::write(&path, serde_json::to_string(&ds)?).map_err(|e| motion_manifold::Error::io(&path, e))?;
            ds
        }
    };

    let cfg = DmmConfig {
        epochs,
        ..DmmConfig::default()
    };
    let (train, held) = dataset.split_holdout(cfg.holdout_every);
    let start = Instant::now();
    let (enc, dec, log) = train_dmm(&dataset, &train, &cfg, 1)?;
    println!(
        "trained {epochs} epochs on {} entries in {:.1} s, final loss {:.3e}",
        train.len(),
        start.elapsed().as_secs_f64(),
        log.last().map_or(f64::NAN, |l| l.loss)
    );
    for (name, idx) in [("train", &train), ("held-out", &held)] {
        let m = recon_metrics(&enc, &dec, &dataset, idx, &cfg)?;
        println!(
            "{name}: weighted rmse {:.4} rad, rmse {:.4} rad, |eta error| <= 0.1 s on {:.1}%",
            m.weighted_rmse,
            m.rmse,
            100.0 * m.eta_within(0.1)
        );
    }
    Ok(())
}
