//! Task-conditioned latent density: a velocity field `v(s, tau, z)` trained
//! by conditional flow matching on a linear path, sampled with explicit
//! Euler steps from a standard normal prior.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{check_len, Error, Result};
use crate::learncore::{cosine_lr, derive_seed, rng, Activation, AdamConfig, AdamState, Mlp, Rng};
use crate::manifold::Encoder;
use crate::task::{TaskParam, TaskSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub ds: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            ds: 0.1,
            hidden: vec![256, 256, 256],
            activation: Activation::Gelu,
            epochs: 5000,
            batch_size: 64,
            lr: 3e-3,
        }
    }
}

impl FlowConfig {
    /// Number of Euler steps, `1 / ds`.
    pub fn steps(&self) -> Result<usize> {
        let steps = (1.0 / self.ds).round();
        if !(self.ds > 0.0) || steps < 1.0 || ((1.0 / self.ds) - steps).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("1/ds must be an integer, got ds = {}", self.ds)));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("flow batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub net: Mlp,
    pub space: TaskSpace,
}

impl VelocityField {
    pub fn new(latent_dim: usize, space: TaskSpace, cfg: &FlowConfig, rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![latent_dim + 3];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(latent_dim);
        Ok(VelocityField {
            net: Mlp::init(&widths, cfg.activation, rng)?,
            space,
        })
    }

    pub fn from_net(net: Mlp, space: TaskSpace) -> Result<Self> {
        if net.input_dim() != net.output_dim() + 3 {
            return Err(Error::InvalidModel("velocity field input must be [s, tau, z]".into()));
        }
        Ok(VelocityField { net, space })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Input column `[s, tau_normalized, z]`.
    fn write_input(&self, col: &mut [f64], s: f64, tau: TaskParam, z: &[f64]) {
        let [r, h] = self.space.normalize(tau);
        col[0] = s;
        col[1] = r;
        col[2] = h;
        col[3..].copy_from_slice(z);
    }

    pub fn velocity(&self, s: f64, tau: TaskParam, z: &[f64]) -> Result<Vec<f64>> {
        check_len("flow latent", self.latent_dim(), z.len())?;
        let mut x = vec![0.0; self.latent_dim() + 3];
        self.write_input(&mut x, s, tau, z);
        self.net.forward_vec(&x)
    }
}

/// Training pair: a task and the latent code of one of its motions.
pub type LatentPair = (TaskParam, Vec<f64>);

/// Latents of the chosen dataset entries under a frozen encoder.
pub fn latent_pairs(enc: &Encoder, dataset: &Dataset, idx: &[usize]) -> Result<Vec<LatentPair>> {
    let entries: Vec<_> = idx.iter().map(|&i| &dataset.entries[i]).collect();
    if entries.is_empty() {
        return Ok(Vec::new());
    }
    let z = enc.encode_entries(&entries)?;
    Ok(entries
        .iter()
        .enumerate()
        .map(|(c, e)| (e.tau, z.column(c).iter().copied().collect()))
        .collect())
}

fn normal_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Mean over the batch of `|v(s, tau, z_s) - (z1 - z0)|^2` with fresh
/// `z0 ~ N(0, I)` and `s ~ U(0, 1)` per item drawn from `seed`; optionally
/// accumulates the parameter gradient.
pub fn cfm_loss(field: &VelocityField, batch: &[LatentPair], seed: u64, grad: Option<&mut [f64]>) -> Result<f64> {
    let mut r = rng(seed);
    cfm_loss_with(field, batch, &mut r, grad)
}

fn cfm_loss_with(field: &VelocityField, batch: &[LatentPair], r: &mut Rng, grad: Option<&mut [f64]>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("flow batch is empty".into()));
    }
    let m = field.latent_dim();
    let b = batch.len();
    let mut x = DMatrix::zeros(m + 3, b);
    let mut target = DMatrix::zeros(m, b);
    for (c, (tau, z1)) in batch.iter().enumerate() {
        check_len("flow latent", m, z1.len())?;
        let s: f64 = r.random();
        let z0 = normal_vec(r, m);
        let zs: Vec<f64> = z0.iter().zip(z1).map(|(a, b)| (1.0 - s) * a + s * b).collect();
        field.write_input(x.column_mut(c).as_mut_slice(), s, *tau, &zs);
        for k in 0..m {
            target[(k, c)] = z1[k] - z0[k];
        }
    }
    let (v, cache) = field.net.forward_cached(&x)?;
    let diff = v - target;
    let loss = diff.norm_squared() / b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("flow matching loss".into()));
    }
    if let Some(g) = grad {
        let d = diff * (2.0 / b as f64);
        field.net.backward(&cache, &d, g, false);
    }
    Ok(loss)
}

/// Draws `count` latents for `tau`: chain `k` starts from a prior draw
/// seeded by `(seed, k)` and takes `1/ds` Euler steps. Columns are samples.
pub fn sample(field: &VelocityField, tau: TaskParam, count: usize, cfg: &FlowConfig, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let steps = cfg.steps()?;
    let m = field.latent_dim();
    let mut z = DMatrix::zeros(m, count);
    for k in 0..count {
        let mut r = rng(derive_seed(seed, &[k as u64]));
        z.column_mut(k).copy_from_slice(&normal_vec(&mut r, m));
    }
    let [r, h] = field.space.normalize(tau);
    let mut x = DMatrix::zeros(m + 3, count);
    for step in 0..steps {
        let s = step as f64 * cfg.ds;
        for k in 0..count {
            x[(0, k)] = s;
            x[(1, k)] = r;
            x[(2, k)] = h;
        }
        x.rows_mut(3, m).copy_from(&z);
        let v = field.net.forward(&x)?;
        z += v * cfg.ds;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("flow sample state at Euler step {step}")));
        }
    }
    Ok(z)
}

/// Fits a fresh field to the latent pairs; returns it with per-epoch mean
/// losses.
pub fn train_flow(
    pairs: &[LatentPair],
    space: &TaskSpace,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<(VelocityField, Vec<f64>)> {
    cfg.validate()?;
    let first = pairs.first().ok_or_else(|| Error::InvalidConfig("no latent pairs to fit".into()))?;
    let mut r = rng(seed);
    let mut field = VelocityField::new(first.1.len(), space.clone(), cfg, &mut r)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), field.net.num_params());
    let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LatentPair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let mut g = vec![0.0; field.net.num_params()];
            let loss = cfm_loss_with(&field, &batch, &mut r, Some(&mut g))
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} step {step}: {e}")))?;
            adam.step_with_lr(field.net.params_mut(), &g, cosine_lr(cfg.lr, step, total))?;
            sum += loss * chunk.len() as f64 / pairs.len() as f64;
            step += 1;
        }
        losses.push(sum);
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            log::info!("flow epoch {epoch}: loss {sum:.4e}");
        }
    }
    Ok((field, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learncore::fd;

    fn tiny_field(m: usize, seed: u64) -> VelocityField {
        let cfg = FlowConfig {
            hidden: vec![6, 5],
            ..FlowConfig::default()
        };
        VelocityField::new(m, TaskSpace::default(), &cfg, &mut rng(seed)).unwrap()
    }

    fn linear_field(m: usize, bias: &[f64], gain: f64) -> VelocityField {
        let mut net = Mlp::zeros(&[m + 3, m], Activation::Gelu).unwrap();
        let p = net.params_mut();
        for k in 0..m {
            p[(3 + k) * m + k] = gain;
            p[m * (m + 3) + k] = bias[k];
        }
        VelocityField::from_net(net, TaskSpace::default()).unwrap()
    }

    fn prior_draws(m: usize, count: usize, seed: u64) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(m, count);
        for k in 0..count {
            let mut r = rng(derive_seed(seed, &[k as u64]));
            z.column_mut(k).copy_from_slice(&normal_vec(&mut r, m));
        }
        z
    }

    #[test]
    fn zero_field_returns_prior_draws() {
        let field = linear_field(3, &[0.0; 3], 0.0);
        let z = sample(&field, TaskParam::new(0.9, 0.1), 5, &FlowConfig::default(), 4).unwrap();
        assert_eq!(z, prior_draws(3, 5, 4));
    }

    #[test]
    fn constant_field_shifts_prior() {
        let c = [0.5, -1.0, 2.0];
        let field = linear_field(3, &c, 0.0);
        let z = sample(&field, TaskParam::new(0.9, 0.1), 5, &FlowConfig::default(), 4).unwrap();
        let z0 = prior_draws(3, 5, 4);
        for k in 0..5 {
            for j in 0..3 {
                assert!((z[(j, k)] - z0[(j, k)] - c[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_field_follows_euler_recursion() {
        let field = linear_field(4, &[0.0; 4], -1.0);
        let z = sample(&field, TaskParam::new(1.0, 0.0), 3, &FlowConfig::default(), 8).unwrap();
        let z0 = prior_draws(4, 3, 8);
        let factor = 0.9f64.powi(10);
        assert!((factor - 0.348_678_440_1).abs() < 1e-10);
        for (a, b) in z.iter().zip(z0.iter()) {
            assert!((a - factor * b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_loss_is_mean_squared_displacement() {
        let field = linear_field(2, &[0.0; 2], 0.0);
        let batch = vec![
            (TaskParam::new(0.8, 0.0), vec![1.0, -2.0]),
            (TaskParam::new(1.1, 0.2), vec![0.3, 0.4]),
        ];
        let loss = cfm_loss(&field, &batch, 5, None).unwrap();
        let mut r = rng(5);
        let mut expect = 0.0;
        for (_, z1) in &batch {
            let _s: f64 = r.random();
            let z0 = normal_vec(&mut r, 2);
            expect += (0..2).map(|k| (z1[k] - z0[k]).powi(2)).sum::<f64>() / 2.0;
        }
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn exact_field_has_zero_loss() {
        // With a single item the drawn displacement is known in advance.
        let z1 = vec![0.7, -0.2];
        let mut r = rng(6);
        let _s: f64 = r.random();
        let z0 = normal_vec(&mut r, 2);
        let d: Vec<f64> = z1.iter().zip(&z0).map(|(a, b)| a - b).collect();
        let field = linear_field(2, &d, 0.0);
        let loss = cfm_loss(&field, &[(TaskParam::new(1.0, 0.1), z1)], 6, None).unwrap();
        assert!(loss < 1e-24);
    }

    #[test]
    fn cfm_gradient_matches_finite_differences() {
        let field = tiny_field(3, 1);
        let mut r = rng(2);
        let batch: Vec<LatentPair> = (0..4)
            .map(|_| {
                (
                    TaskParam::new(r.random_range(0.7..1.2), r.random_range(0.0..0.2)),
                    normal_vec(&mut r, 3),
                )
            })
            .collect();
        let mut g = vec![0.0; field.net.num_params()];
        cfm_loss(&field, &batch, 11, Some(&mut g)).unwrap();
        let num = fd::gradient(
            |p| {
                let mut f = field.clone();
                f.net.params_mut().copy_from_slice(p);
                cfm_loss(&f, &batch, 11, None).unwrap()
            },
            field.net.params(),
            1e-5,
        );
        assert!(fd::rel_err_vec(&g, &num, 1e-8) < 1e-4);
    }

    #[test]
    fn non_integer_step_count_is_rejected() {
        let cfg = FlowConfig {
            ds: 0.3,
            ..FlowConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
