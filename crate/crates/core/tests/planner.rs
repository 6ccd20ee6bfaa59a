use motion_manifold::curves::{BasisSet, JointTrajectory, TransitionCurve, ViaPointCurve};
use motion_manifold::datagen::{collect, CollectConfig, Motion, MotionSource};
use motion_manifold::learncore::rng;
use motion_manifold::planner::{check, constraint_worst, nearest_phase, plan_transition, PlannerConfig};
use motion_manifold::robot::PlanarArm;
use motion_manifold::task::{uniform_grid, TaskConfig, TaskParam, TaskSpace};
use proptest::prelude::*;
use rand::Rng as _;

fn via(q0: Vec<f64>, qt: Vec<f64>, w: Vec<f64>, eta: f64) -> Motion {
    Motion {
        source: MotionSource::ViaPoint(ViaPointCurve::new(q0, qt, w, 3.0, BasisSet::default()).unwrap()),
        eta,
    }
}

fn random_motion(r: &mut impl rand::Rng) -> Motion {
    let mut v = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| r.random_range(-s..s)).collect() };
    let (q0, qt, w) = (v(3, 1.5), v(3, 1.5), v(60, 0.1));
    via(q0, qt, w, 2.0)
}

#[test]
fn collected_motions_pass_the_checker() {
    let arm = PlanarArm::default_three_link();
    let task = TaskConfig::default();
    let tau = TaskParam::new(0.9, 0.1);
    let space = TaskSpace {
        seen_grid: vec![tau],
        ..TaskSpace::default()
    };
    let cfg = CollectConfig {
        attempts_per_task: 4,
        batch_width: 4,
        ..CollectConfig::default()
    };
    let (ds, _) = collect(&arm, &space, &task, &cfg, 5).unwrap();
    assert!(!ds.entries.is_empty());
    let times = uniform_grid(cfg.duration, cfg.grid_len);
    for e in &ds.entries {
        let rep = check(&e.motion, e.tau, &arm, &task, &times).unwrap();
        assert!(rep.feasible && rep.success, "{rep:?}");
    }
}

#[test]
fn coarse_grid_worsts_track_a_dense_grid() {
    let arm = PlanarArm::default_three_link();
    let task = TaskConfig::default();
    let mut r = rng(21);
    let coarse = uniform_grid(3.0, 100);
    let dense = uniform_grid(3.0, 1000);
    for _ in 0..20 {
        let m = random_motion(&mut r);
        let a = constraint_worst(&m, &arm, &task, &coarse).unwrap();
        let b = constraint_worst(&m, &arm, &task, &dense).unwrap();
        for k in 0..7 {
            // The dense grid contains the coarse one only at the ends, so
            // allow a resolution-sized gap either way.
            assert!((a.worst[k] - b.worst[k]).abs() <= 0.05 * (1.0 + b.worst[k].abs()), "{k}: {a:?} vs {b:?}");
            if b.worst[k].abs() > 0.05 * (1.0 + b.worst[k].abs()) {
                assert_eq!(a.worst[k] > 0.0, b.worst[k] > 0.0, "category {k} flips");
            }
        }
    }
}

#[test]
fn nearest_phase_agrees_with_a_finer_brute_force() {
    let mut r = rng(31);
    let coarse = uniform_grid(3.0, 100);
    let fine = uniform_grid(3.0, 991);
    let step = coarse[1] - coarse[0];
    for _ in 0..30 {
        let motions: Vec<Motion> = (0..6).map(|_| random_motion(&mut r)).collect();
        let k = r.random_range(0..motions.len());
        let q = motions[k].eval(r.random_range(0.1..1.9), 0).unwrap();
        let (i, t, d) = nearest_phase(&q, &motions, &coarse).unwrap();
        let (fi, ft, fd) = nearest_phase(&q, &motions, &fine).unwrap();
        assert_eq!(i, fi);
        assert!((t - ft).abs() <= step, "{t} vs {ft}");
        assert!(fd <= d + 1e-12);
    }
}

#[test]
fn nearby_phases_connect_within_five_attempts() {
    let arm = PlanarArm::default_three_link();
    let task = TaskConfig::default();
    let pcfg = PlannerConfig::default();
    let mut quick = 0;
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        let q: Vec<f64> = (0..3).map(|_| r.random_range(-0.8..0.8)).collect();
        let dq: Vec<f64> = (0..3).map(|_| r.random_range(-0.5..0.5)).collect();
        let q2: Vec<f64> = q.iter().map(|v| v + r.random_range(-0.1..0.1)).collect();
        let dq2: Vec<f64> = dq.iter().map(|v| v + r.random_range(-0.1..0.1)).collect();
        if let Ok((_, attempts)) = plan_transition(&(q, dq), &(q2, dq2), &arm, &task, &pcfg, seed) {
            quick += (attempts <= 5) as usize;
        }
    }
    assert!(quick >= 9, "{quick} of 10");
}

fn phase() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-2.0..2.0f64, 3), prop::collection::vec(-3.0..3.0f64, 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_curves_meet_both_phases(
        a in phase(),
        b in phase(),
        w in prop::collection::vec(-0.5..0.5f64, 60),
        duration in 0.3..2.0f64,
    ) {
        let c = TransitionCurve::new(a.clone(), b.clone(), w, duration, BasisSet::default()).unwrap();
        for (t, (q, dq)) in [(0.0, &a), (duration, &b)] {
            let (pq, pdq) = (c.eval(t, 0).unwrap(), c.eval(t, 1).unwrap());
            for j in 0..3 {
                prop_assert!((pq[j] - q[j]).abs() <= 1e-9);
                prop_assert!((pdq[j] - dq[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn nearest_phase_is_stable_under_permutation(seed in 0u64..1000, shift in 1usize..5) {
        let mut r = rng(seed);
        let motions: Vec<Motion> = (0..5).map(|_| random_motion(&mut r)).collect();
        let q: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let times = uniform_grid(3.0, 60);
        let (i, t, d) = nearest_phase(&q, &motions, &times).unwrap();
        let mut rotated = motions.clone();
        rotated.rotate_left(shift);
        let (ri, rt, rd) = nearest_phase(&q, &rotated, &times).unwrap();
        prop_assert_eq!((ri + shift) % motions.len(), i);
        prop_assert_eq!(rt, t);
        prop_assert_eq!(rd, d);
    }
}
