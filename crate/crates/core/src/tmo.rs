//! Decoder fine-tuning on the expected task loss over sampled targets,
//! flow latents and times, anchored by the reconstruction loss under the
//! frozen encoder.
//!
//! Only the decoder's three networks are optimized. The encoder and the
//! velocity field are borrowed immutably and latent samples enter as plain
//! numbers, so no gradient reaches them.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Entry};
use crate::error::{Error, Result};
use crate::latentflow::{sample, FlowConfig, VelocityField};
use crate::learncore::{cosine_lr, derive_seed, rng, sigmoid, AdamConfig};
use crate::manifold::{recon_loss, Decoder, DmmConfig, DmmGrads, DmmOptimizer, Encoder};
use crate::robot::PlanarArm;
use crate::task::{
    constraint_vector, release_error_grad, state_penalty_grad, Category, ConstraintLayout, TaskConfig, TaskParam,
    TaskSpace,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TmoConfig {
    pub w_recon: f64,
    /// Multiplier on the task configuration's constraint weights.
    pub w_penalty: f64,
    pub n_tau: usize,
    pub n_z: usize,
    pub n_t: usize,
    pub steps: usize,
    pub lr: f64,
    /// Dataset entries in each reconstruction anchor batch.
    pub recon_batch: usize,
}

impl Default for TmoConfig {
    fn default() -> Self {
        TmoConfig {
            w_recon: 1.0,
            w_penalty: 100.0,
            n_tau: 8,
            n_z: 4,
            n_t: 16,
            steps: 6000,
            lr: 1e-4,
            recon_batch: 32,
        }
    }
}

impl TmoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tau == 0 || self.n_z == 0 || self.n_t == 0 || self.recon_batch == 0 {
            return Err(Error::InvalidConfig("TMO sample counts must be positive".into()));
        }
        if !(self.w_recon >= 0.0 && self.w_penalty >= 0.0 && self.lr > 0.0) {
            return Err(Error::InvalidConfig("TMO weights must be non-negative and lr positive".into()));
        }
        Ok(())
    }
}

/// Frozen context shared by every TMO evaluation.
#[derive(Clone, Copy)]
pub struct TmoEnv<'a> {
    pub arm: &'a PlanarArm,
    pub task: &'a TaskConfig,
    pub space: &'a TaskSpace,
    pub flow: &'a VelocityField,
    pub flow_cfg: &'a FlowConfig,
}

/// One Monte-Carlo draw: tasks, `n_z` latents per task (columns grouped by
/// task) and the evaluation times shared by every latent.
#[derive(Clone, Debug, PartialEq)]
pub struct TmoSample {
    pub taus: Vec<TaskParam>,
    pub z: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl TmoSample {
    pub fn draw(env: &TmoEnv, cfg: &TmoConfig, duration: f64, seed: u64) -> Result<Self> {
        let mut r = rng(seed);
        let sp = env.space;
        let taus: Vec<TaskParam> = (0..cfg.n_tau)
            .map(|_| TaskParam::new(r.random_range(sp.r_lo..=sp.r_hi), r.random_range(sp.h_lo..=sp.h_hi)))
            .collect();
        let times = (0..cfg.n_t).map(|_| r.random_range(0.0..=duration)).collect();
        let m = env.flow.latent_dim();
        let mut z = DMatrix::zeros(m, cfg.n_tau * cfg.n_z);
        for (i, &tau) in taus.iter().enumerate() {
            let zi = sample(env.flow, tau, cfg.n_z, env.flow_cfg, derive_seed(seed, &[1, i as u64]))?;
            z.columns_mut(i * cfg.n_z, cfg.n_z).copy_from(&zi);
        }
        Ok(TmoSample { taus, z, times })
    }

    fn per_task(&self) -> usize {
        self.z.ncols() / self.taus.len()
    }
}

/// Monte-Carlo estimates of one task-loss evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TmoDiagnostics {
    /// Task loss: task error + `w1` jerk + penalty.
    pub loss: f64,
    /// Mean squared miss distance at the predicted release.
    pub task_error: f64,
    /// Mean squared jerk norm over the shared times.
    pub jerk: f64,
    /// Mean penalty per evaluated point.
    pub penalty: f64,
    /// The penalty split by constraint family, in [`Category::ALL`] order.
    pub category_penalty: [f64; 7],
}

/// Task loss of the decoder on a fixed sample, optionally accumulating its
/// decoder gradient scaled by `scale`.
///
/// Every latent is evaluated at the shared times and at its own predicted
/// release `eta_hat(z)`. The release point enters the penalty as a fixed
/// time; the task error is differentiated through `eta_hat`.
pub fn task_loss(
    dec: &Decoder,
    s: &TmoSample,
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    grads: Option<(&mut DmmGrads, f64)>,
) -> Result<TmoDiagnostics> {
    task_loss_at(dec, s, arm, task_cfg, None, grads)
}

/// [`task_loss`] with the release-point penalty times pinned to
/// `penalty_times` instead of the current `eta_hat(z)`. Pinning makes the
/// stop-gradient explicit, so finite differences see the same function.
pub fn task_loss_at(
    dec: &Decoder,
    s: &TmoSample,
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    penalty_times: Option<&[f64]>,
    grads: Option<(&mut DmmGrads, f64)>,
) -> Result<TmoDiagnostics> {
    let n = dec.dof;
    let nb = dec.n_basis();
    let p_count = s.z.ncols();
    let n_t = s.times.len();
    let per_task = s.per_task();
    let (psi, psi_cache) = dec.psi.forward_cached(&s.z)?;
    let (raw, eta_cache) = dec.eta_net.forward_cached(&s.z)?;
    let eta: Vec<f64> = raw.iter().map(|&r| dec.squash_eta(r)).collect();
    let mut times = s.times.clone();
    times.extend_from_slice(&eta);
    if let Some(pt) = penalty_times {
        if pt.len() != p_count {
            return Err(Error::DimensionMismatch {
                context: "release penalty times",
                expected: p_count,
                got: pt.len(),
            });
        }
        times.extend_from_slice(pt);
    }
    let k_cols = times.len();
    let (theta, jet_cache) = dec.theta.forward_jet(&dec.jet_input(&times))?;

    let weights = task_cfg.weights.vector(n);
    let layout = ConstraintLayout::new(n);
    let point_w = 1.0 / ((n_t + 1) * p_count) as f64;
    let jerk_w = 1.0 / (n_t * p_count) as f64;
    let task_w = 1.0 / p_count as f64;
    let mut d = TmoDiagnostics::default();
    let want_grad = grads.is_some();
    let mut g_theta = DMatrix::zeros(nb * n, 4 * k_cols);
    let mut g_psi = DMatrix::zeros(nb, p_count);
    let mut g_raw = DMatrix::zeros(1, p_count);

    for p in 0..p_count {
        let tau = s.taus[p / per_task];
        let psi_p = psi.column(p);
        // (column, penalty, task error)
        let mut points: Vec<(usize, bool, bool)> = (0..n_t).map(|c| (c, true, false)).collect();
        if penalty_times.is_some() {
            points.push((n_t + p, false, true));
            points.push((n_t + p_count + p, true, false));
        } else {
            points.push((n_t + p, true, true));
        }
        for (c, do_pen, do_task) in points {
            let state: [Vec<f64>; 4] = std::array::from_fn(|k| {
                let col = theta.column(k * k_cols + c);
                (0..n).map(|j| col.rows(j * nb, nb).dot(&psi_p)).collect()
            });
            let sref = [&state[0][..], &state[1][..], &state[2][..], &state[3][..]];
            let (pen, pen_grad) = if do_pen {
                state_penalty_grad(arm, sref, task_cfg, &weights)?
            } else {
                (0.0, vec![0.0; 4 * n])
            };
            if !pen.is_finite() {
                return Err(Error::NonFinite(format!(
                    "penalty at tau=({}, {}), latent {p}, t={}",
                    tau.r, tau.h, times[c]
                )));
            }
            d.penalty += point_w * pen;
            if pen > 0.0 {
                let cv = constraint_vector(arm, sref, task_cfg)?;
                for (i, &ci) in cv.iter().enumerate() {
                    d.category_penalty[layout.category(i).index()] += point_w * weights[i] * ci.max(0.0).powi(2);
                }
            }
            // d loss / d state, four blocks of n.
            let mut gs: Vec<f64> = pen_grad.iter().map(|g| g * point_w).collect();
            if c < n_t {
                let jerk: f64 = state[3].iter().map(|v| v * v).sum();
                d.jerk += jerk_w * jerk;
                for j in 0..n {
                    gs[3 * n + j] += 2.0 * task_cfg.w1 * jerk_w * state[3][j];
                }
            }
            if do_task {
                let rel = release_error_grad(arm, &state[0], &state[1], tau, task_cfg)?;
                if !rel.error.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "task error at tau=({}, {}), latent {p}, t={}",
                        tau.r, tau.h, times[c]
                    )));
                }
                d.task_error += task_w * rel.error;
                let mut d_eta = 0.0;
                for j in 0..n {
                    gs[j] += task_w * rel.d_q[j];
                    gs[n + j] += task_w * rel.d_dq[j];
                    d_eta += task_w * (rel.d_q[j] * state[1][j] + rel.d_dq[j] * state[2][j]);
                }
                let sg = sigmoid(raw[(0, p)]);
                g_raw[(0, p)] = d_eta * dec.duration * sg * (1.0 - sg);
            }
            if want_grad {
                for k in 0..4 {
                    let col = k * k_cols + c;
                    for j in 0..n {
                        let gkj = gs[k * n + j];
                        if gkj == 0.0 {
                            continue;
                        }
                        for b in 0..nb {
                            g_theta[(j * nb + b, col)] += gkj * psi_p[b];
                            g_psi[(b, p)] += gkj * theta[(j * nb + b, col)];
                        }
                    }
                }
            }
        }
    }
    d.loss = d.task_error + task_cfg.w1 * d.jerk + d.penalty;
    if !d.loss.is_finite() {
        return Err(Error::NonFinite("TMO task loss".into()));
    }
    if let Some((g, scale)) = grads {
        g_theta *= scale;
        g_psi *= scale;
        g_raw *= scale;
        dec.theta.backward_jet(&jet_cache, &g_theta, &mut g.theta, false);
        dec.psi.backward(&psi_cache, &g_psi, &mut g.psi, false);
        dec.eta_net.backward(&eta_cache, &g_raw, &mut g.eta_net, false);
    }
    Ok(d)
}

/// Draws a fresh sample from `seed` and evaluates [`task_loss`] on it.
pub fn task_loss_sample(
    dec: &Decoder,
    env: &TmoEnv,
    cfg: &TmoConfig,
    seed: u64,
    grads: Option<(&mut DmmGrads, f64)>,
) -> Result<TmoDiagnostics> {
    let s = TmoSample::draw(env, cfg, dec.duration, seed)?;
    let task = TaskConfig {
        weights: env.task.weights.scaled(cfg.w_penalty),
        ..env.task.clone()
    };
    task_loss(dec, &s, env.arm, &task, grads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TmoLog {
    pub step: usize,
    pub task: TmoDiagnostics,
    pub recon: f64,
}

pub struct FinetuneOutcome {
    pub decoder: Decoder,
    pub logs: Vec<TmoLog>,
    /// Set when a non-finite loss stopped training; `decoder` is then the
    /// last finite one.
    pub aborted: Option<String>,
}

/// Fine-tunes a copy of the decoder on `w_recon * recon + task loss`.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    enc: &Encoder,
    dec: &Decoder,
    env: &TmoEnv,
    dataset: &Dataset,
    train_idx: &[usize],
    dmm_cfg: &DmmConfig,
    cfg: &TmoConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if cfg.w_recon > 0.0 && train_idx.is_empty() {
        return Err(Error::InvalidConfig("reconstruction anchor needs training entries".into()));
    }
    let mut dec = dec.clone();
    let mut opt = DmmOptimizer::new(enc, &dec, AdamConfig::with_lr(cfg.lr));
    let mut r = rng(derive_seed(seed, &[0]));
    let mut logs = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut g = DmmGrads::decoder_only(&dec);
        let result = (|| -> Result<TmoLog> {
            let task = task_loss_sample(&dec, env, cfg, derive_seed(seed, &[1, step as u64]), Some((&mut g, 1.0)))?;
            let recon = if cfg.w_recon > 0.0 {
                let batch: Vec<&Entry> = (0..cfg.recon_batch)
                    .map(|_| &dataset.entries[train_idx[r.random_range(0..train_idx.len())]])
                    .collect();
                recon_loss(enc, &dec, &batch, dmm_cfg, Some((&mut g, cfg.w_recon, false)))?.total()
            } else {
                0.0
            };
            Ok(TmoLog { step, task, recon })
        })();
        let log = match result {
            Ok(log) => log,
            Err(e) => {
                log::warn!("TMO stopped at step {step}: {e}");
                return Ok(FinetuneOutcome {
                    decoder: dec,
                    logs,
                    aborted: Some(format!("step {step}: {e}")),
                });
            }
        };
        let lr = cosine_lr(cfg.lr, step, cfg.steps);
        let before = dec.clone();
        opt.step_decoder(&mut dec, &g, lr)?;
        let finite = [dec.psi.params(), dec.theta.params(), dec.eta_net.params()]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Ok(FinetuneOutcome {
                decoder: before,
                logs,
                aborted: Some(format!("step {step}: non-finite decoder parameters")),
            });
        }
        if step % 50 == 0 || step + 1 == cfg.steps {
            log::info!(
                "tmo step {step}: task error {:.3e}, penalty {:.3e}, jerk {:.3e}, recon {:.3e}",
                log.task.task_error,
                log.task.penalty,
                log.task.jerk,
                log.recon
            );
        }
        logs.push(log);
    }
    Ok(FinetuneOutcome {
        decoder: dec,
        logs,
        aborted: None,
    })
}

/// Averages task-loss diagnostics over `rounds` independent samples.
pub fn estimate(dec: &Decoder, env: &TmoEnv, cfg: &TmoConfig, rounds: usize, seed: u64) -> Result<TmoDiagnostics> {
    let mut acc = TmoDiagnostics::default();
    for i in 0..rounds {
        let d = task_loss_sample(dec, env, cfg, derive_seed(seed, &[i as u64]), None)?;
        let w = 1.0 / rounds as f64;
        acc.loss += w * d.loss;
        acc.task_error += w * d.task_error;
        acc.jerk += w * d.jerk;
        acc.penalty += w * d.penalty;
        for (a, b) in acc.category_penalty.iter_mut().zip(d.category_penalty) {
            *a += w * b;
        }
    }
    Ok(acc)
}

/// Categories in the order of [`TmoDiagnostics::category_penalty`].
pub fn category_labels() -> [&'static str; 7] {
    Category::ALL.map(|c| c.label())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learncore::{fd, Activation, Mlp};
    use crate::task::{flight_time, ConstraintWeights};

    fn tiny_decoder(seed: u64, duration: f64) -> Decoder {
        let cfg = DmmConfig {
            latent_dim: 3,
            n_basis: 4,
            psi_hidden: vec![5],
            theta_hidden: vec![6],
            eta_hidden: vec![4],
            theta_init_scale: 1.0,
            ..DmmConfig::default()
        };
        Decoder::new(&cfg, 3, duration, &mut rng(seed)).unwrap()
    }

    fn tiny_flow(space: &TaskSpace) -> VelocityField {
        let cfg = FlowConfig {
            hidden: vec![4],
            ..FlowConfig::default()
        };
        VelocityField::new(3, space.clone(), &cfg, &mut rng(3)).unwrap()
    }

    /// Decoder with constant `psi = 1`, one basis function and `theta`
    /// linear in time, so every joint moves at constant velocity.
    fn constant_velocity_decoder(duration: f64, dq: &[f64]) -> Decoder {
        let n = dq.len();
        let psi = Mlp::from_params(&[3, 1], Activation::Gelu, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let mut tp = vec![0.0; 2 * n];
        for j in 0..n {
            tp[j] = dq[j] * duration / 2.0;
        }
        let theta = Mlp::from_params(&[1, n], Activation::Gelu, tp).unwrap();
        let eta_net = Mlp::zeros(&[3, 1], Activation::Gelu).unwrap();
        Decoder::from_parts(psi, theta, eta_net, n, duration).unwrap()
    }

    fn single_sample(dec: &Decoder, tau: TaskParam, times: Vec<f64>) -> TmoSample {
        let _ = dec;
        TmoSample {
            taus: vec![tau],
            z: DMatrix::from_column_slice(3, 1, &[0.1, -0.2, 0.3]),
            times,
        }
    }

    #[test]
    fn velocity_violation_costs_its_square_per_point() {
        let arm = PlanarArm::default_three_link();
        let dec = constant_velocity_decoder(1.0, &[0.99 * 3.0 + 0.1, 0.0, 0.0]);
        let task = TaskConfig {
            weights: ConstraintWeights {
                velocity: 1.0,
                ..ConstraintWeights::uniform(0.0)
            },
            ..TaskConfig::default()
        };
        let s = single_sample(&dec, TaskParam::new(1.0, 0.1), vec![0.1, 0.4, 0.8]);
        let d = task_loss(&dec, &s, &arm, &task, None).unwrap();
        assert!((d.penalty - 0.01).abs() < 1e-12, "{}", d.penalty);
        assert!((d.category_penalty[Category::Jvl.index()] - 0.01).abs() < 1e-12);
        assert_eq!(d.jerk, 0.0);
    }

    #[test]
    fn exact_throws_without_penalty_leave_only_jerk() {
        let arm = PlanarArm::default_three_link();
        let dec = tiny_decoder(5, 2.0);
        let task = TaskConfig {
            weights: ConstraintWeights::uniform(0.0),
            ..TaskConfig::default()
        };
        let z = [0.1, -0.2, 0.3];
        let (state, eta) = dec.decode(&z, dec.eta_hat(&z).unwrap(), 1).unwrap();
        let _ = eta;
        let (p, v) = arm.object_kinematics(&state[0], &state[1]).unwrap();
        let h = p[1] - 0.1;
        let dt = flight_time(p[1], v[1], h, task.g).dt;
        let tau = TaskParam::new(p[0] + v[0] * dt, h);
        let times = vec![0.2, 0.9, 1.7];
        let s = single_sample(&dec, tau, times.clone());
        let d = task_loss(&dec, &s, &arm, &task, None).unwrap();
        let mut jerk = 0.0;
        for &t in &times {
            let (q, _) = dec.decode(&z, t, 3).unwrap();
            jerk += q[3].iter().map(|v| v * v).sum::<f64>() / 3.0;
        }
        assert!(d.task_error < 1e-20);
        assert!((d.loss - task.w1 * jerk).abs() < 1e-12 * (1.0 + jerk));
    }

    #[test]
    fn task_gradient_matches_finite_differences() {
        let arm = PlanarArm::default_three_link();
        let space = TaskSpace::default();
        let flow = tiny_flow(&space);
        let task = TaskConfig::default();
        let flow_cfg = FlowConfig::default();
        let env = TmoEnv {
            arm: &arm,
            task: &task,
            space: &space,
            flow: &flow,
            flow_cfg: &flow_cfg,
        };
        let cfg = TmoConfig {
            n_tau: 1,
            n_z: 1,
            n_t: 2,
            ..TmoConfig::default()
        };
        let mut active = 0;
        for seed in 0..20 {
            let mut dec = tiny_decoder(100 + seed, 1.0);
            dec.theta.shrink_output_layer(20.0);
            let s = TmoSample::draw(&env, &cfg, dec.duration, seed).unwrap();
            let mut g = DmmGrads::decoder_only(&dec);
            let pinned: Vec<f64> = (0..s.z.ncols())
                .map(|c| dec.eta_hat(s.z.column(c).as_slice()).unwrap())
                .collect();
            let d = task_loss_at(&dec, &s, &arm, &task, Some(&pinned), Some((&mut g, 1.0))).unwrap();
            let live = task_loss(&dec, &s, &arm, &task, None).unwrap();
            assert!((live.loss - d.loss).abs() <= 1e-12 * d.loss.abs());
            active += (d.penalty > 0.0) as usize;
            let check = |an: &[f64], which: usize| {
                let base = [dec.psi.params(), dec.theta.params(), dec.eta_net.params()][which].to_vec();
                let num = fd::gradient(
                    |p| {
                        let mut dd = dec.clone();
                        [dd.psi.params_mut(), dd.theta.params_mut(), dd.eta_net.params_mut()]
                            .into_iter()
                            .nth(which)
                            .unwrap()
                            .copy_from_slice(p);
                        task_loss_at(&dd, &s, &arm, &task, Some(&pinned), None).unwrap().loss
                    },
                    &base,
                    1e-6,
                );
                let scale = num.iter().fold(1e-6f64, |a, v| a.max(v.abs()));
                let err = fd::rel_err_vec(an, &num, scale);
                assert!(err < 1e-3, "seed {seed} block {which}: {err}");
            };
            check(&g.psi, 0);
            check(&g.theta, 1);
            check(&g.eta_net, 2);
        }
        assert!(active >= 5, "only {active} draws had active constraints");
    }
}
