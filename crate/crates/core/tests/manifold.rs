use motion_manifold::curves::{BasisSet, ViaPointCurve};
use motion_manifold::datagen::{sample_grid, Dataset, DatasetMeta, Entry, Motion, MotionSource, DATASET_VERSION};
use motion_manifold::learncore::rng;
use motion_manifold::manifold::{recon_metrics, train_dmm, DmmConfig};
use motion_manifold::task::{uniform_grid, TaskParam};
use rand::Rng as _;

fn dataset(count: usize, seed: u64) -> Dataset {
    let grid_len = 50;
    let times = uniform_grid(3.0, grid_len);
    let mut r = rng(seed);
    let entries = (0..count)
        .map(|_| {
            let mut v = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| r.random_range(-s..s)).collect() };
            let curve = ViaPointCurve::new(v(3, 1.0), v(3, 1.0), v(60, 0.3), 3.0, BasisSet::default()).unwrap();
            let motion = Motion {
                source: MotionSource::ViaPoint(curve),
                eta: r.random_range(0.8..1.8),
            };
            Entry {
                tau: TaskParam::new(1.0, 0.1),
                eta: motion.eta,
                traj: sample_grid(&motion, &times).unwrap(),
                motion,
            }
        })
        .collect();
    Dataset {
        meta: DatasetMeta {
            format_version: DATASET_VERSION,
            duration: 3.0,
            grid_len,
            dof: 3,
            arm_hash: String::new(),
            config_hash: String::new(),
        },
        entries,
    }
}

fn small_cfg(epochs: usize) -> DmmConfig {
    DmmConfig {
        latent_dim: 4,
        n_basis: 20,
        encoder_hidden: vec![64, 64],
        psi_hidden: vec![64, 64],
        theta_hidden: vec![64, 64],
        eta_hidden: vec![32],
        epochs,
        batch_size: 1,
        lr: 3e-3,
        ..DmmConfig::default()
    }
}

#[test]
fn single_entry_is_memorized() {
    // Flat weighting, so every grid point counts toward the plain RMSE.
    let ds = dataset(1, 1);
    let cfg = DmmConfig {
        weight_sharpness: 0.0,
        ..small_cfg(2000)
    };
    let (enc, dec, _) = train_dmm(&ds, &[0], &cfg, 2).unwrap();
    let m = recon_metrics(&enc, &dec, &ds, &[0], &cfg).unwrap();
    assert!(m.rmse < 1e-2, "rmse {}", m.rmse);
    assert!(m.eta_abs_errors[0] < 1e-2);
}

#[test]
fn single_entry_is_memorized_near_release() {
    let ds = dataset(1, 1);
    let cfg = small_cfg(2000);
    let (enc, dec, _) = train_dmm(&ds, &[0], &cfg, 2).unwrap();
    let m = recon_metrics(&enc, &dec, &ds, &[0], &cfg).unwrap();
    assert!(m.weighted_rmse < 1e-2, "weighted rmse {}", m.weighted_rmse);
}

#[test]
fn trained_encoder_separates_entries() {
    let ds = dataset(2, 3);
    let cfg = DmmConfig {
        batch_size: 2,
        ..small_cfg(200)
    };
    let (enc, _, _) = train_dmm(&ds, &[0, 1], &cfg, 4).unwrap();
    let z: Vec<Vec<f64>> = ds.entries.iter().map(|e| enc.encode(&e.traj, e.eta).unwrap()).collect();
    let d = z[0].iter().zip(&z[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(d > 1e-6, "codes {d} apart");
    assert_eq!(enc.encode(&ds.entries[0].traj, ds.entries[0].eta).unwrap(), z[0]);
}
