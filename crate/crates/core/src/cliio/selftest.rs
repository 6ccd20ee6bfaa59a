//! Property suites runnable from the command line without a trained model:
//! curve exactness, dynamics soundness, loss gradients and the flight-time
//! root.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::curves::{BasisSet, JointTrajectory, TransitionCurve, ViaPointCurve};
use crate::datagen::{CollectConfig, Entry, GridRows, Motion, MotionOptimizer, MotionSource, sample_grid};
use crate::error::Result;
use crate::latentflow::{cfm_loss, FlowConfig, VelocityField};
use crate::learncore::{fd, rng, Rng};
use crate::manifold::{recon_loss, Decoder, DmmConfig, DmmGrads, Encoder};
use crate::robot::{Limits, PlanarArm};
use crate::task::{flight_time, TaskConfig, TaskParam, TaskSpace};
use crate::tmo::{task_loss_at, TmoConfig, TmoEnv, TmoSample};

/// Outcome of one suite.
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn normal_vec(r: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst relative error of derivative orders 1-3 against a fourth-order
/// central difference of the next lower order.
fn derivative_error<T: JointTrajectory>(c: &T, t: f64) -> Result<f64> {
    let h = 1e-4 * c.duration();
    let mut worst = 0.0f64;
    for k in 1..=3 {
        let exact = c.eval(t, k)?;
        let a = c.eval(t - 2.0 * h, k - 1)?;
        let b = c.eval(t - h, k - 1)?;
        let cc = c.eval(t + h, k - 1)?;
        let d = c.eval(t + 2.0 * h, k - 1)?;
        let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..exact.len() {
            let num = (a[j] - 8.0 * b[j] + 8.0 * cc[j] - d[j]) / (12.0 * h);
            worst = worst.max(fd::rel_err(num, exact[j], scale));
        }
    }
    Ok(worst)
}

/// Boundary conditions to 1e-12 and derivative orders to 1e-5 relative on
/// 100 random draws of each curve family.
pub fn curves(seed: u64) -> SuiteResult {
    timed("curve exactness", || {
        let mut r = rng(seed);
        let basis = BasisSet::default();
        let (mut bc, mut der) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let t_end = r.random_range(0.5..3.0);
            let vc = ViaPointCurve::new(
                normal_vec(&mut r, 3, 1.0),
                normal_vec(&mut r, 3, 1.0),
                normal_vec(&mut r, 60, 0.3),
                t_end,
                basis,
            )?;
            let tc = TransitionCurve::new(
                (normal_vec(&mut r, 3, 1.0), normal_vec(&mut r, 3, 1.0)),
                (normal_vec(&mut r, 3, 1.0), normal_vec(&mut r, 3, 1.0)),
                normal_vec(&mut r, 60, 0.3),
                t_end,
                basis,
            )?;
            bc = bc
                .max(max_abs_diff(&vc.eval(0.0, 0)?, &vc.q0))
                .max(max_abs_diff(&vc.eval(t_end, 0)?, &vc.qt))
                .max(max_abs_diff(&vc.eval(0.0, 1)?, &[0.0; 3]))
                .max(max_abs_diff(&vc.eval(t_end, 1)?, &[0.0; 3]))
                .max(max_abs_diff(&tc.eval(0.0, 0)?, &tc.q0))
                .max(max_abs_diff(&tc.eval(t_end, 0)?, &tc.qt))
                .max(max_abs_diff(&tc.eval(0.0, 1)?, &tc.dq0))
                .max(max_abs_diff(&tc.eval(t_end, 1)?, &tc.dqt));
            let t = r.random_range(0.1..0.9) * t_end;
            der = der.max(derivative_error(&vc, t)?).max(derivative_error(&tc, t)?);
        }
        Ok((
            bc <= 1e-12 && der <= 1e-5,
            format!("boundary residual {bc:.1e} (<= 1e-12), derivative rel err {der:.1e} (<= 1e-5)"),
        ))
    })
}

/// Mass-matrix symmetry, dynamics round trip, free-motion energy drift and
/// the single-pendulum gravity oracle.
pub fn dynamics(seed: u64) -> SuiteResult {
    timed("dynamics soundness", || {
        let arm = PlanarArm::default_three_link();
        let mut r = rng(seed);
        let (mut sym, mut trip) = (0.0f64, 0.0f64);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..3).map(|_| r.random_range(-3.1..3.1)).collect();
            let dq = normal_vec(&mut r, 3, 2.0);
            let d = arm.dynamics_terms(&q, &dq)?;
            for a in 0..3 {
                for b in 0..3 {
                    sym = sym.max((d.m(a, b) - d.m(b, a)).abs());
                }
            }
            let tau = normal_vec(&mut r, 3, 10.0);
            let ddq = arm.forward_dynamics(&q, &dq, &tau)?;
            let back = arm.inverse_dynamics(&q, &dq, &ddq)?;
            trip = trip.max(max_abs_diff(&back, &tau) / tau.iter().fold(1.0f64, |m, v| m.max(v.abs())));
        }

        let mut free = arm.clone();
        free.gravity = 0.0;
        let energy = |x: &[f64]| -> Result<f64> {
            let d = free.dynamics_terms(&x[..3], &[0.0; 3])?;
            Ok(0.5 * (0..3).map(|a| (0..3).map(|b| x[3 + a] * d.m(a, b) * x[3 + b]).sum::<f64>()).sum::<f64>())
        };
        let deriv = |x: &[f64]| -> Result<Vec<f64>> {
            let acc = free.forward_dynamics(&x[..3], &x[3..], &[0.0; 3])?;
            Ok(x[3..].iter().copied().chain(acc).collect())
        };
        let mut x = vec![0.3, -0.8, 1.1, 1.5, -2.0, 2.5];
        let e0 = energy(&x)?;
        let dt = 1e-4;
        for _ in 0..10_000 {
            let k1 = deriv(&x)?;
            let k2 = deriv(&x.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect::<Vec<_>>())?;
            let k3 = deriv(&x.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect::<Vec<_>>())?;
            let k4 = deriv(&x.iter().zip(&k3).map(|(a, k)| a + dt * k).collect::<Vec<_>>())?;
            for i in 0..6 {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let drift = ((energy(&x)? - e0) / e0).abs();

        let (m, l, g) = (1.7, 0.8, 9.81);
        let pendulum = PlanarArm {
            link_lengths: vec![l],
            link_masses: vec![m],
            com_offsets: vec![l],
            link_inertias: vec![0.0],
            gravity: g,
            p_b: [0.0, 0.0],
            limits: Limits::uniform(1),
            collision_pairs: vec![],
        };
        let mut pend = 0.0f64;
        for _ in 0..100 {
            let q = r.random_range(-3.1..3.1);
            let d = pendulum.dynamics_terms(&[q], &[0.0])?;
            pend = pend.max((d.gravity[0] - m * g * l * q.cos()).abs());
        }
        Ok((
            sym <= 1e-12 && trip <= 1e-9 && drift <= 1e-6 && pend <= 1e-10,
            format!(
                "M asymmetry {sym:.1e} (<= 1e-12), round trip {trip:.1e} (<= 1e-9), \
                 energy drift {drift:.1e} (<= 1e-6), pendulum {pend:.1e} (<= 1e-10)"
            ),
        ))
    })
}

fn toy_entries(r: &mut Rng, count: usize, grid_len: usize) -> Result<Vec<Entry>> {
    let times = crate::task::uniform_grid(3.0, grid_len);
    (0..count)
        .map(|_| {
            let curve = ViaPointCurve::new(
                normal_vec(r, 3, 0.5),
                normal_vec(r, 3, 0.5),
                normal_vec(r, 60, 0.1),
                3.0,
                BasisSet::default(),
            )?;
            let motion = Motion {
                source: MotionSource::ViaPoint(curve),
                eta: r.random_range(0.5..2.5),
            };
            Ok(Entry {
                tau: TaskParam::new(1.0, 0.1),
                eta: motion.eta,
                traj: sample_grid(&motion, &times)?,
                motion,
            })
        })
        .collect()
}

fn grad_err(an: &[f64], f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> f64 {
    let num = fd::gradient(f, x, 1e-6);
    let scale = num.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
    fd::rel_err_vec(an, &num, scale)
}

/// Finite-difference checks of every trained loss: reconstruction, flow
/// matching, the TMO composite and the data-generation objective, each on
/// 20 random points.
pub fn gradients(seed: u64) -> SuiteResult {
    timed("gradient contract", || {
        let mut r = rng(seed);
        let tiny = DmmConfig {
            latent_dim: 3,
            n_basis: 4,
            encoder_hidden: vec![6],
            psi_hidden: vec![5],
            theta_hidden: vec![6],
            eta_hidden: vec![4],
            theta_init_scale: 1.0,
            ..DmmConfig::default()
        };
        let mut recon = 0.0f64;
        for _ in 0..20 {
            let entries = toy_entries(&mut r, 2, 6)?;
            let batch: Vec<&Entry> = entries.iter().collect();
            let enc = Encoder::new(&tiny, 6, 3, 3.0, &mut r)?;
            let dec = Decoder::new(&tiny, 3, 3.0, &mut r)?;
            let mut g = DmmGrads::zeros(&enc, &dec);
            recon_loss(&enc, &dec, &batch, &tiny, Some((&mut g, 1.0, true)))?;
            let an: Vec<f64> = [&g.encoder, &g.psi, &g.theta, &g.eta_net].into_iter().flatten().copied().collect();
            let sizes = [enc.net.num_params(), dec.psi.num_params(), dec.theta.num_params()];
            let x0: Vec<f64> = [enc.net.params(), dec.psi.params(), dec.theta.params(), dec.eta_net.params()]
                .concat();
            recon = recon.max(grad_err(
                &an,
                |x| {
                    let (mut e, mut d) = (enc.clone(), dec.clone());
                    let (a, rest) = x.split_at(sizes[0]);
                    let (b, rest) = rest.split_at(sizes[1]);
                    let (c, rest) = rest.split_at(sizes[2]);
                    e.net.params_mut().copy_from_slice(a);
                    d.psi.params_mut().copy_from_slice(b);
                    d.theta.params_mut().copy_from_slice(c);
                    d.eta_net.params_mut().copy_from_slice(rest);
                    recon_loss(&e, &d, &batch, &tiny, None).map(|p| p.total()).unwrap_or(f64::NAN)
                },
                &x0,
            ));
        }

        let space = TaskSpace::default();
        let flow_cfg = FlowConfig {
            hidden: vec![6],
            ..FlowConfig::default()
        };
        let mut cfm = 0.0f64;
        for i in 0..20 {
            let field = VelocityField::new(3, space.clone(), &flow_cfg, &mut r)?;
            let batch: Vec<(TaskParam, Vec<f64>)> = (0..4)
                .map(|_| (TaskParam::new(r.random_range(0.7..1.2), r.random_range(0.0..0.2)), normal_vec(&mut r, 3, 1.0)))
                .collect();
            let mut g = vec![0.0; field.net.num_params()];
            cfm_loss(&field, &batch, i, Some(&mut g))?;
            cfm = cfm.max(grad_err(
                &g,
                |p| {
                    let mut f = field.clone();
                    f.net.params_mut().copy_from_slice(p);
                    cfm_loss(&f, &batch, i, None).unwrap_or(f64::NAN)
                },
                field.net.params(),
            ));
        }

        let arm = PlanarArm::default_three_link();
        let task = TaskConfig::default();
        let tmo_cfg = TmoConfig {
            n_tau: 1,
            n_z: 1,
            n_t: 2,
            ..TmoConfig::default()
        };
        let flow = VelocityField::new(3, space.clone(), &flow_cfg, &mut r)?;
        let env = TmoEnv {
            arm: &arm,
            task: &task,
            space: &space,
            flow: &flow,
            flow_cfg: &flow_cfg,
        };
        let mut tmo = 0.0f64;
        for i in 0..20 {
            let mut dec = Decoder::new(&tiny, 3, 1.0, &mut r)?;
            dec.theta.shrink_output_layer(20.0);
            let s = TmoSample::draw(&env, &tmo_cfg, dec.duration, i)?;
            let pinned: Vec<f64> = (0..s.z.ncols())
                .map(|c| dec.eta_hat(s.z.column(c).as_slice()))
                .collect::<Result<_>>()?;
            let mut g = DmmGrads::decoder_only(&dec);
            task_loss_at(&dec, &s, &arm, &task, Some(&pinned), Some((&mut g, 1.0)))?;
            let an: Vec<f64> = [&g.psi, &g.theta, &g.eta_net].into_iter().flatten().copied().collect();
            let sizes = [dec.psi.num_params(), dec.theta.num_params()];
            let x0 = [dec.psi.params(), dec.theta.params(), dec.eta_net.params()].concat();
            tmo = tmo.max(grad_err(
                &an,
                |x| {
                    let mut d = dec.clone();
                    let (a, rest) = x.split_at(sizes[0]);
                    let (b, c) = rest.split_at(sizes[1]);
                    d.psi.params_mut().copy_from_slice(a);
                    d.theta.params_mut().copy_from_slice(b);
                    d.eta_net.params_mut().copy_from_slice(c);
                    task_loss_at(&d, &s, &arm, &task, Some(&pinned), None).map(|v| v.loss).unwrap_or(f64::NAN)
                },
                &x0,
            ));
        }

        let cfg = CollectConfig {
            grid_len: 12,
            ..CollectConfig::default()
        };
        let grid = GridRows::new(&cfg);
        let mut opt_err = 0.0f64;
        for i in 0..20 {
            let tau = TaskParam::new(r.random_range(0.7..1.2), r.random_range(0.0..0.2));
            let mut opt = MotionOptimizer::new(&arm, &task, &cfg, &grid, tau, i);
            let mut x = opt.params().to_vec();
            let last = x.len() - 1;
            for v in &mut x[6..last] {
                *v = 0.5 * r.sample::<f64, _>(StandardNormal);
            }
            x[last] = r.random_range(0.5..2.0);
            opt.set_params(&x)?;
            let (_, an) = opt.objective_and_gradient()?;
            opt_err = opt_err.max(grad_err(
                &an,
                |p| {
                    let mut o = MotionOptimizer::new(&arm, &task, &cfg, &grid, tau, i);
                    o.set_params(p).and_then(|_| o.objective_and_gradient()).map(|v| v.0).unwrap_or(f64::NAN)
                },
                &x,
            ));
        }
        Ok((
            recon <= 1e-4 && cfm <= 1e-4 && tmo <= 1e-3 && opt_err <= 1e-4,
            format!(
                "reconstruction {recon:.1e}, flow matching {cfm:.1e}, data-generation objective {opt_err:.1e} \
                 (<= 1e-4); TMO composite {tmo:.1e} (<= 1e-3)"
            ),
        ))
    })
}

/// Ballistic root residual over 10^4 random feasible cases and the
/// published constants in the defaults.
pub fn flight_root(seed: u64) -> SuiteResult {
    timed("flight-time root", || {
        let mut r = rng(seed);
        let g = 9.81;
        let mut worst = 0.0f64;
        let mut count = 0;
        while count < 10_000 {
            let p = r.random_range(0.0..1.5);
            let v = r.random_range(-5.0..5.0);
            let h = r.random_range(-0.5..1.0);
            if v * v + 2.0 * g * (p - h) < 0.0 {
                continue;
            }
            let ft = flight_time(p, v, h, g);
            let res = p + v * ft.dt - 0.5 * g * ft.dt * ft.dt - h;
            worst = worst.max(res.abs());
            count += 1;
        }
        let c = TaskConfig::default();
        let consts = c.g == 9.81 && c.margin_frac == 0.01 && c.success_threshold == 0.04;
        Ok((
            worst <= 1e-9 && consts,
            format!("max residual {worst:.1e} over 10000 cases (<= 1e-9), constants present: {consts}"),
        ))
    })
}

pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    vec![curves(seed), dynamics(seed), gradients(seed), flight_root(seed)]
}
