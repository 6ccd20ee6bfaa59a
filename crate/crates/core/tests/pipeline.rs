use std::path::Path;
use std::process::Command;

use motion_manifold::cliio::config::ToolkitConfig;
use motion_manifold::cliio::pipeline::{Pipeline, DATASET_FILE, MODELS_FILE, MODELS_TMO_FILE};
use motion_manifold::cliio::read_csv;
use motion_manifold::cliio::store::{load_checkpoint, load_dataset, save_dataset};
use motion_manifold::task::TaskParam;
use motion_manifold::Error;

const SMALL: &str = r#"
seed = 3

[space]
r_lo = 0.7
r_hi = 1.2
h_lo = 0.0
h_hi = 0.2
seen_grid = [{ r = 0.8, h = 0.1 }, { r = 1.0, h = 0.1 }]

[collect]
attempts_per_task = 4
batch_width = 4

[dmm]
latent_dim = 4
n_basis = 10
encoder_hidden = [32]
psi_hidden = [32]
theta_hidden = [32]
eta_hidden = [16]
epochs = 20
batch_size = 4

[flow]
hidden = [16]
epochs = 20

[tmo]
steps = 5
n_tau = 2
n_z = 2
n_t = 4
recon_batch = 4

[planner]
samples = 20

[eval]
samples_per_task = 10
unseen = [{ r = 0.9, h = 0.05 }]
"#;

fn small_config(out: &Path) -> ToolkitConfig {
    let mut cfg = ToolkitConfig::from_toml(SMALL).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn run_all(out: &Path) -> Pipeline {
    let p = Pipeline::new(small_config(out));
    p.collect().unwrap();
    p.train_dmm().unwrap();
    p.train_flow().unwrap();
    p.finetune().unwrap();
    p.evaluate().unwrap();
    Pipeline { use_rs: false, ..p }.plan(TaskParam::new(0.9, 0.1)).unwrap();
    Pipeline::new(small_config(out))
}

fn artifacts(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| !n.contains("timing"))
        .collect();
    names.sort();
    names
}

#[test]
fn pipeline_reruns_reproduce_every_artifact() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(a.path());
    let p = run_all(b.path());
    let names = artifacts(a.path());
    assert_eq!(names, artifacts(b.path()));
    for n in [
        "dataset.json",
        "dmm.json",
        "dmm.bin",
        "models.json",
        "models_tmo.json",
        "metrics.csv",
        "plan_profile.csv",
    ] {
        assert!(names.iter().any(|x| x == n), "missing {n}");
    }
    for n in &names {
        let (x, y) = (std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap());
        assert!(x == y, "{n} differs between runs");
    }

    // Re-running a finished stage in place rewrites identical bytes.
    let before = std::fs::read(b.path().join("models.bin")).unwrap();
    p.train_flow().unwrap();
    assert_eq!(before, std::fs::read(b.path().join("models.bin")).unwrap());

    // Every CSV carries the config hash and a header row.
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        let (hash, header, _) = read_csv(&a.path().join(n)).unwrap();
        assert_eq!(hash, p.cfg.hash(), "{n}");
        assert!(!header.is_empty(), "{n}");
    }

    // Metrics carry every benchmark column.
    let (_, header, rows) = read_csv(&a.path().join("metrics.csv")).unwrap();
    for col in ["SR", "JL", "JVL", "JAL", "JJL", "CVL", "JTL", "COL", "retention"] {
        assert!(header.iter().any(|h| h == col), "no {col} column");
    }
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    for m in ["DMMFP", "DMMFP+RS", "DMMFP+TMO", "DMMFP+TMO+RS"] {
        assert!(methods.contains(&m), "no {m} rows");
    }
}

#[test]
fn fine_tuning_changes_only_decoder_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(dir.path()));
    p.collect().unwrap();
    p.train_dmm().unwrap();
    p.train_flow().unwrap();
    p.finetune().unwrap();
    let pre = load_checkpoint(&dir.path().join(MODELS_FILE), "train-flow").unwrap();
    let post = load_checkpoint(&dir.path().join(MODELS_TMO_FILE), "finetune").unwrap();
    assert_eq!(pre.provenance, "pre-tmo");
    assert_eq!(post.provenance, "post-tmo");
    assert_eq!((pre.config_hash.as_str(), pre.dataset_hash.as_str()), (post.config_hash.as_str(), post.dataset_hash.as_str()));
    let names: Vec<&str> = pre.nets.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["encoder", "psi", "theta", "eta_net", "flow"]);
    for ((name, a), (_, b)) in pre.nets.iter().zip(&post.nets) {
        match name.as_str() {
            "encoder" | "flow" => assert_eq!(a, b, "{name} changed"),
            _ => assert_ne!(a, b, "{name} unchanged"),
        }
    }
}

#[test]
fn stages_name_their_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(dir.path()));
    let stage = |r: Result<(), Error>| match r {
        Err(Error::MissingArtifact { stage, .. }) => stage,
        other => panic!("expected a missing artifact, got {other:?}"),
    };
    assert_eq!(stage(p.train_dmm().map(drop)), "collect");
    assert_eq!(stage(p.evaluate().map(drop)), "train-dmm");
    p.collect().unwrap();
    p.train_dmm().unwrap();
    assert_eq!(stage(p.evaluate().map(drop)), "train-flow");
    assert_eq!(stage(p.finetune().map(drop)), "train-flow");
    p.train_flow().unwrap();
    assert_eq!(stage(p.evaluate().map(drop)), "finetune");
    let no_tmo = Pipeline {
        use_tmo: false,
        ..Pipeline::new(small_config(dir.path()))
    };
    assert!(no_tmo.evaluate().is_ok());
}

#[test]
fn dataset_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.collect.attempts_per_task = 5;
    cfg.collect.batch_width = 5;
    let p = Pipeline::new(cfg);
    let ds = p.collect().unwrap();
    let path = dir.path().join(DATASET_FILE);
    let (back, hash) = load_dataset(&path).unwrap();
    assert_eq!(ds, back);
    let copy = dir.path().join("copy.json");
    assert_eq!(save_dataset(&copy, &back).unwrap(), hash);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Format { .. })));
}

fn mmp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mmp")).args(args).output().unwrap()
}

#[test]
fn cli_reports_missing_stage_and_plans_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    let o = mmp(&["--config", cfg, "--out", out, "evaluate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-dmm"));

    for stage in ["collect", "train-dmm", "train-flow", "finetune"] {
        let o = mmp(&["--config", cfg, "--out", out, stage]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let profile = dir.path().join("plan_profile.csv");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = mmp(&["--config", cfg, "--out", out, "--no-rs", "plan", "--task", "0.9,0.1", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(std::fs::read(&profile).unwrap());
    }
    assert_eq!(runs[0], runs[1]);

    let o = mmp(&["--config", cfg, "--out", out, "plan", "--task", "3.0,0.1"]);
    assert!(!o.status.success());
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dmm]\nlatent = 3\n").unwrap();
    assert!(!mmp(&["--config", bad.to_str().unwrap(), "selftest"]).status.success());
}
