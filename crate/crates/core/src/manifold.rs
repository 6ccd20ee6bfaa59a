//! Differentiable motion manifold: an encoder from sampled trajectories to
//! latent codes and a decoder `q(z, t) = sum_b psi_b(z) theta_b(t)` that is
//! continuous in time, plus a release-time head.
//!
//! Time derivatives only involve the `theta` network, so a decoded motion
//! evaluates `psi(z)` once and reuses it for every time and derivative
//! order.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::curves::JointTrajectory;
use crate::datagen::{Dataset, Entry};
use crate::error::{check_len, Error, Result};
use crate::learncore::{cosine_lr, rng, sigmoid, Activation, AdamConfig, AdamState, Mlp, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmmConfig {
    pub latent_dim: usize,
    pub n_basis: usize,
    pub encoder_hidden: Vec<usize>,
    pub psi_hidden: Vec<usize>,
    pub theta_hidden: Vec<usize>,
    pub eta_hidden: Vec<usize>,
    pub activation: Activation,
    /// `k` in the release weighting `c(t) = exp(-k (t - eta)^2)`.
    pub weight_sharpness: f64,
    pub w_eta_recon: f64,
    /// Output-layer scale of the freshly initialized `theta` network.
    pub theta_init_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Every `holdout_every`-th dataset entry is held out of training.
    pub holdout_every: usize,
}

impl Default for DmmConfig {
    fn default() -> Self {
        DmmConfig {
            latent_dim: 32,
            n_basis: 100,
            encoder_hidden: vec![256, 256, 256],
            psi_hidden: vec![256, 256, 256],
            theta_hidden: vec![256, 256, 256],
            eta_hidden: vec![128, 128],
            activation: Activation::Gelu,
            weight_sharpness: 4.0,
            w_eta_recon: 1.0,
            theta_init_scale: 0.01,
            epochs: 800,
            batch_size: 32,
            lr: 1e-3,
            holdout_every: 10,
        }
    }
}

impl DmmConfig {
    pub fn validate(&self, grid_len: usize, dof: usize) -> Result<()> {
        if self.latent_dim == 0 || self.n_basis == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("manifold sizes must be positive".into()));
        }
        if self.latent_dim >= grid_len * dof {
            return Err(Error::InvalidConfig("latent dimension must be below L * n".into()));
        }
        if !(self.lr > 0.0 && self.weight_sharpness >= 0.0 && self.w_eta_recon >= 0.0) {
            return Err(Error::InvalidConfig("manifold rates and weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Release weighting of a time point.
    pub fn weight(&self, t: f64, eta: f64) -> f64 {
        (-self.weight_sharpness * (t - eta) * (t - eta)).exp()
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub net: Mlp,
    pub duration: f64,
    pub grid_len: usize,
    pub dof: usize,
}

impl Encoder {
    pub fn new(cfg: &DmmConfig, grid_len: usize, dof: usize, duration: f64, rng: &mut Rng) -> Result<Self> {
        let net = Mlp::init(
            &widths(grid_len * dof + 1, &cfg.encoder_hidden, cfg.latent_dim),
            cfg.activation,
            rng,
        )?;
        Ok(Encoder {
            net,
            duration,
            grid_len,
            dof,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Network input: row-major trajectory divided by pi, then `eta / T`.
    pub fn input(&self, traj: &[Vec<f64>], eta: f64) -> Result<Vec<f64>> {
        check_len("encoder trajectory length", self.grid_len, traj.len())?;
        let mut x = Vec::with_capacity(self.grid_len * self.dof + 1);
        for row in traj {
            check_len("encoder joint count", self.dof, row.len())?;
            x.extend(row.iter().map(|q| q / std::f64::consts::PI));
        }
        x.push(eta / self.duration);
        Ok(x)
    }

    pub fn encode(&self, traj: &[Vec<f64>], eta: f64) -> Result<Vec<f64>> {
        self.net.forward_vec(&self.input(traj, eta)?)
    }

    fn batch_input(&self, entries: &[&Entry]) -> Result<DMatrix<f64>> {
        let rows = self.net.input_dim();
        let mut data = Vec::with_capacity(rows * entries.len());
        for e in entries {
            data.extend(self.input(&e.traj, e.eta)?);
        }
        Ok(DMatrix::from_vec(rows, entries.len(), data))
    }

    /// Latent codes of several entries, one per column.
    pub fn encode_entries(&self, entries: &[&Entry]) -> Result<DMatrix<f64>> {
        self.net.forward(&self.batch_input(entries)?)
    }
}

/// Decoder networks. `theta` maps `x = 2t/T - 1` to `n * N_b` values laid
/// out joint-major (`j * N_b + b`).
#[derive(Debug)]
pub struct Decoder {
    pub psi: Mlp,
    pub theta: Mlp,
    pub eta_net: Mlp,
    pub dof: usize,
    pub duration: f64,
    psi_evals: AtomicUsize,
}

impl Clone for Decoder {
    fn clone(&self) -> Self {
        Decoder::from_parts(
            self.psi.clone(),
            self.theta.clone(),
            self.eta_net.clone(),
            self.dof,
            self.duration,
        )
        .expect("validated decoder")
    }
}

impl PartialEq for Decoder {
    fn eq(&self, other: &Self) -> bool {
        self.psi == other.psi
            && self.theta == other.theta
            && self.eta_net == other.eta_net
            && self.dof == other.dof
            && self.duration == other.duration
    }
}

/// A latent code with its cached `psi(z)` and release time.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub psi: Vec<f64>,
    pub eta: f64,
}

/// `theta` jets at a set of times: `4` stacked blocks of `n * N_b x K`.
pub struct ThetaJets {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl Decoder {
    pub fn new(cfg: &DmmConfig, dof: usize, duration: f64, rng: &mut Rng) -> Result<Self> {
        let psi = Mlp::init(&widths(cfg.latent_dim, &cfg.psi_hidden, cfg.n_basis), cfg.activation, rng)?;
        let mut theta = Mlp::init(&widths(1, &cfg.theta_hidden, cfg.n_basis * dof), cfg.activation, rng)?;
        theta.shrink_output_layer(cfg.theta_init_scale);
        let eta_net = Mlp::init(&widths(cfg.latent_dim, &cfg.eta_hidden, 1), cfg.activation, rng)?;
        Decoder::from_parts(psi, theta, eta_net, dof, duration)
    }

    pub fn from_parts(psi: Mlp, theta: Mlp, eta_net: Mlp, dof: usize, duration: f64) -> Result<Self> {
        let nb = psi.output_dim();
        if theta.input_dim() != 1 || theta.output_dim() != nb * dof {
            return Err(Error::InvalidModel("theta must map a scalar to n * N_b values".into()));
        }
        if eta_net.input_dim() != psi.input_dim() || eta_net.output_dim() != 1 {
            return Err(Error::InvalidModel("release head must map z to a scalar".into()));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidModel("decoder duration must be positive".into()));
        }
        Ok(Decoder {
            psi,
            theta,
            eta_net,
            dof,
            duration,
            psi_evals: AtomicUsize::new(0),
        })
    }

    pub fn n_basis(&self) -> usize {
        self.psi.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.psi.input_dim()
    }

    /// Number of `psi` evaluations so far (instrumentation).
    pub fn psi_evaluations(&self) -> usize {
        self.psi_evals.load(Ordering::Relaxed)
    }

    pub fn theta_input(&self, t: f64) -> f64 {
        2.0 * t / self.duration - 1.0
    }

    /// Maps raw release-head outputs into `(0, T)`.
    pub fn squash_eta(&self, raw: f64) -> f64 {
        self.duration * sigmoid(raw)
    }

    pub fn eta_hat(&self, z: &[f64]) -> Result<f64> {
        Ok(self.squash_eta(self.eta_net.forward_vec(z)?[0]))
    }

    pub fn prepare(&self, z: &[f64]) -> Result<LatentCode> {
        self.psi_evals.fetch_add(1, Ordering::Relaxed);
        Ok(LatentCode {
            z: z.to_vec(),
            psi: self.psi.forward_vec(z)?,
            eta: self.eta_hat(z)?,
        })
    }

    /// Codes for every column of `z`, with one batched pass per network.
    pub fn prepare_batch(&self, z: &DMatrix<f64>) -> Result<Vec<LatentCode>> {
        self.psi_evals.fetch_add(z.ncols(), Ordering::Relaxed);
        let psi = self.psi.forward(z)?;
        let raw = self.eta_net.forward(z)?;
        Ok((0..z.ncols())
            .map(|c| LatentCode {
                z: z.column(c).iter().copied().collect(),
                psi: psi.column(c).iter().copied().collect(),
                eta: self.squash_eta(raw[(0, c)]),
            })
            .collect())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tol = 1e-12 * self.duration.max(1.0);
        if !(t >= -tol && t <= self.duration + tol) {
            return Err(Error::OutOfRange {
                what: "decoder time",
                value: t,
                lo: 0.0,
                hi: self.duration,
            });
        }
        Ok(())
    }

    /// Jet input block for a set of times: `x`, `dx/dt`, then zeros.
    pub fn jet_input(&self, times: &[f64]) -> DMatrix<f64> {
        let k = times.len();
        let mut x = DMatrix::zeros(1, 4 * k);
        for (c, &t) in times.iter().enumerate() {
            x[(0, c)] = self.theta_input(t);
            x[(0, k + c)] = 2.0 / self.duration;
        }
        x
    }

    pub fn theta_jets(&self, times: &[f64]) -> Result<ThetaJets> {
        for &t in times {
            self.check_time(t)?;
        }
        let (values, _) = self.theta.forward_jet(&self.jet_input(times))?;
        Ok(ThetaJets {
            times: times.to_vec(),
            values,
        })
    }

    /// Derivative `order` of `q(z, t)` from cached `psi(z)` and the jets'
    /// column `col`.
    pub fn combine(&self, code: &LatentCode, jets: &ThetaJets, col: usize, order: usize) -> Vec<f64> {
        let nb = self.n_basis();
        let k = jets.times.len();
        let c = order * k + col;
        let column = jets.values.column(c);
        (0..self.dof)
            .map(|j| {
                let block = &column.as_slice()[j * nb..(j + 1) * nb];
                block.iter().zip(&code.psi).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Time derivative `order` of a prepared code at `t`.
    pub fn eval_code(&self, code: &LatentCode, t: f64, order: usize) -> Result<Vec<f64>> {
        if order > 3 {
            return Err(Error::OutOfRange {
                what: "derivative order",
                value: order as f64,
                lo: 0.0,
                hi: 3.0,
            });
        }
        let jets = self.theta_jets(&[t])?;
        Ok(self.combine(code, &jets, 0, order))
    }

    /// Positions and time derivatives up to `order` at `t`, and the
    /// release time.
    pub fn decode(&self, z: &[f64], t: f64, order: usize) -> Result<(Vec<Vec<f64>>, f64)> {
        check_len("latent code", self.latent_dim(), z.len())?;
        let code = self.prepare(z)?;
        let jets = self.theta_jets(&[t])?;
        if order > 3 {
            return Err(Error::OutOfRange {
                what: "derivative order",
                value: order as f64,
                lo: 0.0,
                hi: 3.0,
            });
        }
        Ok(((0..=order).map(|k| self.combine(&code, &jets, 0, k)).collect(), code.eta))
    }

    pub fn motion(&self, code: LatentCode) -> DecodedMotion<'_> {
        DecodedMotion { decoder: self, code }
    }

    pub fn params_len(&self) -> [usize; 3] {
        [self.psi.num_params(), self.theta.num_params(), self.eta_net.num_params()]
    }
}

/// A decoded latent code viewed as a joint trajectory.
#[derive(Clone, Debug)]
pub struct DecodedMotion<'a> {
    pub decoder: &'a Decoder,
    pub code: LatentCode,
}

impl DecodedMotion<'_> {
    pub fn eta(&self) -> f64 {
        self.code.eta
    }
}

impl JointTrajectory for DecodedMotion<'_> {
    fn duration(&self) -> f64 {
        self.decoder.duration
    }

    fn dof(&self) -> usize {
        self.decoder.dof
    }

    fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        self.decoder.eval_code(&self.code, t, order)
    }

    fn eval_all(&self, t: f64) -> Result<[Vec<f64>; 4]> {
        let jets = self.decoder.theta_jets(&[t])?;
        Ok([0, 1, 2, 3].map(|k| self.decoder.combine(&self.code, &jets, 0, k)))
    }
}

/// Gradient buffers for every trainable network.
#[derive(Clone, Debug, PartialEq)]
pub struct DmmGrads {
    pub encoder: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta_net: Vec<f64>,
}

impl DmmGrads {
    pub fn zeros(enc: &Encoder, dec: &Decoder) -> Self {
        DmmGrads {
            encoder: vec![0.0; enc.net.num_params()],
            psi: vec![0.0; dec.psi.num_params()],
            theta: vec![0.0; dec.theta.num_params()],
            eta_net: vec![0.0; dec.eta_net.num_params()],
        }
    }

    /// Buffers for decoder-only training; the encoder block is empty.
    pub fn decoder_only(dec: &Decoder) -> Self {
        DmmGrads {
            encoder: Vec::new(),
            psi: vec![0.0; dec.psi.num_params()],
            theta: vec![0.0; dec.theta.num_params()],
            eta_net: vec![0.0; dec.eta_net.num_params()],
        }
    }
}

/// Components of the reconstruction loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReconParts {
    pub traj: f64,
    pub eta: f64,
}

impl ReconParts {
    pub fn total(&self) -> f64 {
        self.traj + self.eta
    }
}

/// Mean over `batch` of the release-weighted trajectory error (grid mean
/// of `c(t) |q_hat - q|^2`) plus `w_eta_recon (eta_hat - eta)^2`.
///
/// When `grads` is given, the loss gradient is accumulated into it scaled
/// by `scale`; the encoder gradient is skipped when `train_encoder` is off.
pub fn recon_loss(
    enc: &Encoder,
    dec: &Decoder,
    batch: &[&Entry],
    cfg: &DmmConfig,
    grads: Option<(&mut DmmGrads, f64, bool)>,
) -> Result<ReconParts> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("reconstruction batch is empty".into()));
    }
    let b = batch.len();
    let l = enc.grid_len;
    let n = dec.dof;
    let nb = dec.n_basis();
    let times: Vec<f64> = crate::task::uniform_grid(dec.duration, l);

    let x = enc.batch_input(batch)?;
    let (z, enc_cache) = enc.net.forward_cached(&x)?;
    let (psi, psi_cache) = dec.psi.forward_cached(&z)?;
    let (raw, eta_cache) = dec.eta_net.forward_cached(&z)?;
    let tx = DMatrix::from_iterator(1, l, times.iter().map(|&t| dec.theta_input(t)));
    let (theta, theta_cache) = dec.theta.forward_cached(&tx)?;

    let weights = DMatrix::from_fn(b, l, |e, c| cfg.weight(times[c], batch[e].eta));
    let norm = 1.0 / (b * l) as f64;
    let mut parts = ReconParts::default();
    let mut d_psi = DMatrix::zeros(nb, b);
    let mut d_theta = DMatrix::zeros(nb * n, l);
    for j in 0..n {
        let theta_j = theta.rows(j * nb, nb);
        let q_hat = psi.tr_mul(&theta_j);
        let mut g = DMatrix::zeros(b, l);
        for e in 0..b {
            for c in 0..l {
                let delta = q_hat[(e, c)] - batch[e].traj[c][j];
                let w = weights[(e, c)];
                parts.traj += norm * w * delta * delta;
                g[(e, c)] = 2.0 * norm * w * delta;
            }
        }
        if grads.is_some() {
            d_psi.gemm(1.0, &theta_j, &g.transpose(), 1.0);
            d_theta.rows_mut(j * nb, nb).gemm(1.0, &psi, &g, 0.0);
        }
    }
    let mut d_raw = DMatrix::zeros(1, b);
    for e in 0..b {
        let s = sigmoid(raw[(0, e)]);
        let diff = dec.duration * s - batch[e].eta;
        parts.eta += cfg.w_eta_recon * diff * diff / b as f64;
        d_raw[(0, e)] = 2.0 * cfg.w_eta_recon * diff / b as f64 * dec.duration * s * (1.0 - s);
    }
    if !parts.total().is_finite() {
        return Err(Error::NonFinite("reconstruction loss".into()));
    }

    if let Some((g, scale, train_encoder)) = grads {
        d_psi *= scale;
        d_theta *= scale;
        d_raw *= scale;
        dec.theta.backward(&theta_cache, &d_theta, &mut g.theta, false);
        let dz_psi = dec.psi.backward(&psi_cache, &d_psi, &mut g.psi, train_encoder);
        let dz_eta = dec.eta_net.backward(&eta_cache, &d_raw, &mut g.eta_net, train_encoder);
        if train_encoder {
            let dz = dz_psi.unwrap() + dz_eta.unwrap();
            enc.net.backward(&enc_cache, &dz, &mut g.encoder, false);
        }
    }
    Ok(parts)
}

/// Adam states for every network of the manifold.
pub struct DmmOptimizer {
    pub encoder: AdamState,
    pub psi: AdamState,
    pub theta: AdamState,
    pub eta_net: AdamState,
}

impl DmmOptimizer {
    pub fn new(enc: &Encoder, dec: &Decoder, config: AdamConfig) -> Self {
        DmmOptimizer {
            encoder: AdamState::new(config, enc.net.num_params()),
            psi: AdamState::new(config, dec.psi.num_params()),
            theta: AdamState::new(config, dec.theta.num_params()),
            eta_net: AdamState::new(config, dec.eta_net.num_params()),
        }
    }

    pub fn step_decoder(&mut self, dec: &mut Decoder, g: &DmmGrads, lr: f64) -> Result<()> {
        self.psi.step_with_lr(dec.psi.params_mut(), &g.psi, lr)?;
        self.theta.step_with_lr(dec.theta.params_mut(), &g.theta, lr)?;
        self.eta_net.step_with_lr(dec.eta_net.params_mut(), &g.eta_net, lr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub traj: f64,
    pub eta: f64,
}

/// Trains encoder and decoder on the given dataset entries.
pub fn train_dmm(
    dataset: &Dataset,
    train_idx: &[usize],
    cfg: &DmmConfig,
    seed: u64,
) -> Result<(Encoder, Decoder, Vec<EpochLog>)> {
    if train_idx.is_empty() {
        return Err(Error::InvalidConfig("no training entries".into()));
    }
    let meta = &dataset.meta;
    cfg.validate(meta.grid_len, meta.dof)?;
    let mut r = rng(seed);
    let mut enc = Encoder::new(cfg, meta.grid_len, meta.dof, meta.duration, &mut r)?;
    let mut dec = Decoder::new(cfg, meta.dof, meta.duration, &mut r)?;
    let mut opt = DmmOptimizer::new(&enc, &dec, AdamConfig::with_lr(cfg.lr));
    let steps_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut order = train_idx.to_vec();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut sum = ReconParts::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Entry> = chunk.iter().map(|&i| &dataset.entries[i]).collect();
            let mut g = DmmGrads::zeros(&enc, &dec);
            let parts = recon_loss(&enc, &dec, &batch, cfg, Some((&mut g, 1.0, true)))
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} step {step}: {e}")))?;
            let lr = cosine_lr(cfg.lr, step, total);
            opt.encoder.step_with_lr(enc.net.params_mut(), &g.encoder, lr)?;
            opt.step_decoder(&mut dec, &g, lr)?;
            let w = chunk.len() as f64 / order.len() as f64;
            sum.traj += w * parts.traj;
            sum.eta += w * parts.eta;
            step += 1;
        }
        logs.push(EpochLog {
            epoch,
            loss: sum.total(),
            traj: sum.traj,
            eta: sum.eta,
        });
        if epoch % 10 == 0 || epoch + 1 == cfg.epochs {
            log::info!("dmm epoch {epoch}: loss {:.3e} (traj {:.3e}, eta {:.3e})", sum.total(), sum.traj, sum.eta);
        }
    }
    Ok((enc, dec, logs))
}

/// Reconstruction quality on a set of entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconMetrics {
    /// Root mean square over entries of the release-weighted per-entry RMSE
    /// `sqrt(sum_l c_l |dq_l|^2 / (n sum_l c_l))` (rad).
    pub weighted_rmse: f64,
    /// Plain RMSE over all samples (rad).
    pub rmse: f64,
    pub eta_abs_errors: Vec<f64>,
}

impl ReconMetrics {
    pub fn eta_within(&self, tol: f64) -> f64 {
        if self.eta_abs_errors.is_empty() {
            return f64::NAN;
        }
        self.eta_abs_errors.iter().filter(|&&e| e <= tol).count() as f64 / self.eta_abs_errors.len() as f64
    }
}

pub fn recon_metrics(
    enc: &Encoder,
    dec: &Decoder,
    dataset: &Dataset,
    idx: &[usize],
    cfg: &DmmConfig,
) -> Result<ReconMetrics> {
    let times = dataset.times();
    let n = dataset.meta.dof;
    let entries: Vec<&Entry> = idx.iter().map(|&i| &dataset.entries[i]).collect();
    if entries.is_empty() {
        return Ok(ReconMetrics {
            weighted_rmse: f64::NAN,
            rmse: f64::NAN,
            eta_abs_errors: Vec::new(),
        });
    }
    let z = enc.encode_entries(&entries)?;
    let codes = dec.prepare_batch(&z)?;
    let tx = DMatrix::from_iterator(1, times.len(), times.iter().map(|&t| dec.theta_input(t)));
    let theta = dec.theta.forward(&tx)?;
    let nb = dec.n_basis();
    let (mut wsum, mut plain) = (0.0, 0.0);
    let mut eta_abs_errors = Vec::with_capacity(entries.len());
    for (e, code) in entries.iter().zip(&codes) {
        let (mut num, mut den) = (0.0, 0.0);
        for (c, &t) in times.iter().enumerate() {
            let w = cfg.weight(t, e.eta);
            for j in 0..n {
                let q: f64 = (0..nb).map(|b| code.psi[b] * theta[(j * nb + b, c)]).sum();
                let d = q - e.traj[c][j];
                num += w * d * d;
                plain += d * d;
            }
            den += w * n as f64;
        }
        wsum += num / den;
        eta_abs_errors.push((code.eta - e.eta).abs());
    }
    Ok(ReconMetrics {
        weighted_rmse: (wsum / entries.len() as f64).sqrt(),
        rmse: (plain / (entries.len() * times.len() * n) as f64).sqrt(),
        eta_abs_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{BasisSet, ViaPointCurve};
    use crate::datagen::{sample_grid, DatasetMeta, Motion, MotionSource};
    use crate::learncore::fd;
    use crate::task::TaskParam;
    use rand::Rng as _;

    fn tiny_cfg() -> DmmConfig {
        DmmConfig {
            latent_dim: 3,
            n_basis: 4,
            encoder_hidden: vec![6],
            psi_hidden: vec![5],
            theta_hidden: vec![5, 4],
            eta_hidden: vec![4],
            theta_init_scale: 1.0,
            ..DmmConfig::default()
        }
    }

    fn toy_dataset(count: usize, grid_len: usize, seed: u64) -> Dataset {
        let mut r = rng(seed);
        let times = crate::task::uniform_grid(3.0, grid_len);
        let entries = (0..count)
            .map(|_| {
                let curve = ViaPointCurve::new(
                    (0..2).map(|_| r.random_range(-1.0..1.0)).collect(),
                    (0..2).map(|_| r.random_range(-1.0..1.0)).collect(),
                    vec![0.0; 40],
                    3.0,
                    BasisSet::default(),
                )
                .unwrap();
                let motion = Motion {
                    source: MotionSource::ViaPoint(curve),
                    eta: r.random_range(0.5..2.0),
                };
                Entry {
                    tau: TaskParam::new(1.0, 0.0),
                    eta: motion.eta,
                    traj: sample_grid(&motion, &times).unwrap(),
                    motion,
                }
            })
            .collect();
        Dataset {
            meta: DatasetMeta {
                format_version: 1,
                duration: 3.0,
                grid_len,
                dof: 2,
                arm_hash: String::new(),
                config_hash: String::new(),
            },
            entries,
        }
    }

    fn tiny_models(cfg: &DmmConfig, grid_len: usize) -> (Encoder, Decoder) {
        let mut r = rng(1);
        let enc = Encoder::new(cfg, grid_len, 2, 3.0, &mut r).unwrap();
        let dec = Decoder::new(cfg, 2, 3.0, &mut r).unwrap();
        (enc, dec)
    }

    #[test]
    fn zero_encoder_maps_to_origin() {
        let cfg = tiny_cfg();
        let (mut enc, _) = tiny_models(&cfg, 5);
        enc.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let ds = toy_dataset(2, 5, 0);
        let z = enc.encode(&ds.entries[0].traj, ds.entries[0].eta).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert_eq!(z, enc.encode(&ds.entries[0].traj, ds.entries[0].eta).unwrap());
    }

    #[test]
    fn zero_theta_decodes_to_rest_at_origin() {
        let cfg = tiny_cfg();
        let (_, mut dec) = tiny_models(&cfg, 5);
        dec.theta.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let (q, eta) = dec.decode(&[0.3, -0.2, 0.1], 1.1, 3).unwrap();
        assert!(q.iter().flatten().all(|&v| v == 0.0));
        assert!(eta > 0.0 && eta < 3.0);
    }

    #[test]
    fn decoded_derivatives_match_finite_differences() {
        let cfg = tiny_cfg();
        let (_, dec) = tiny_models(&cfg, 5);
        let mut r = rng(2);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let t = r.random_range(0.1..2.9);
            let m = dec.motion(dec.prepare(&z).unwrap());
            let h = 1e-4;
            for k in 1..=3 {
                let exact = m.eval(t, k).unwrap();
                let (a, b, c, d) = (
                    m.eval(t - 2.0 * h, k - 1).unwrap(),
                    m.eval(t - h, k - 1).unwrap(),
                    m.eval(t + h, k - 1).unwrap(),
                    m.eval(t + 2.0 * h, k - 1).unwrap(),
                );
                let scale = exact.iter().fold(1e-3f64, |s, v| s.max(v.abs()));
                for j in 0..2 {
                    let num = (a[j] - 8.0 * b[j] + 8.0 * c[j] - d[j]) / (12.0 * h);
                    assert!(fd::rel_err(num, exact[j], scale) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn prepared_code_is_reused_across_times() {
        let cfg = tiny_cfg();
        let (_, dec) = tiny_models(&cfg, 5);
        let z = [0.2, 0.1, -0.4];
        let before = dec.psi_evaluations();
        let code = dec.prepare(&z).unwrap();
        let times: Vec<f64> = (0..50).map(|i| 3.0 * i as f64 / 49.0).collect();
        let jets = dec.theta_jets(&times).unwrap();
        let cached: Vec<Vec<f64>> = (0..50).map(|c| dec.combine(&code, &jets, c, 0)).collect();
        assert_eq!(dec.psi_evaluations() - before, 1);
        for (c, &t) in times.iter().enumerate() {
            let (q, _) = dec.decode(&z, t, 0).unwrap();
            for j in 0..2 {
                assert!((q[0][j] - cached[c][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decode_rejects_out_of_range_time() {
        let cfg = tiny_cfg();
        let (_, dec) = tiny_models(&cfg, 5);
        assert!(dec.decode(&[0.0; 3], 3.5, 0).is_err());
    }

    #[test]
    fn recon_gradient_matches_finite_differences() {
        let cfg = tiny_cfg();
        let (enc, dec) = tiny_models(&cfg, 5);
        let ds = toy_dataset(2, 5, 3);
        let batch: Vec<&Entry> = ds.entries.iter().collect();
        let mut g = DmmGrads::zeros(&enc, &dec);
        recon_loss(&enc, &dec, &batch, &cfg, Some((&mut g, 1.0, true))).unwrap();
        let loss_with = |enc: &Encoder, dec: &Decoder| recon_loss(enc, dec, &batch, &cfg, None).unwrap().total();

        let check = |an: &[f64], f: &dyn Fn(&[f64]) -> f64, x: &[f64]| {
            let num = fd::gradient(f, x, 1e-5);
            assert!(fd::rel_err_vec(an, &num, 1e-8) < 1e-4, "{an:?} vs {num:?}");
        };
        check(&g.encoder, &|p| {
            let mut e = enc.clone();
            e.net.params_mut().copy_from_slice(p);
            loss_with(&e, &dec)
        }, enc.net.params());
        check(&g.psi, &|p| {
            let mut d = dec.clone();
            d.psi.params_mut().copy_from_slice(p);
            loss_with(&enc, &d)
        }, dec.psi.params());
        check(&g.theta, &|p| {
            let mut d = dec.clone();
            d.theta.params_mut().copy_from_slice(p);
            loss_with(&enc, &d)
        }, dec.theta.params());
        check(&g.eta_net, &|p| {
            let mut d = dec.clone();
            d.eta_net.params_mut().copy_from_slice(p);
            loss_with(&enc, &d)
        }, dec.eta_net.params());
    }

    #[test]
    fn uniform_weight_reduces_to_mean_squared_error() {
        let cfg = DmmConfig {
            weight_sharpness: 0.0,
            ..tiny_cfg()
        };
        let (enc, dec) = tiny_models(&cfg, 5);
        let ds = toy_dataset(3, 5, 4);
        let batch: Vec<&Entry> = ds.entries.iter().collect();
        let parts = recon_loss(&enc, &dec, &batch, &cfg, None).unwrap();
        let mut mse = 0.0;
        let mut eta = 0.0;
        for e in &batch {
            let z = enc.encode(&e.traj, e.eta).unwrap();
            let code = dec.prepare(&z).unwrap();
            for (c, &t) in ds.times().iter().enumerate() {
                let q = dec.eval_code(&code, t, 0).unwrap();
                mse += (0..2).map(|j| (q[j] - e.traj[c][j]).powi(2)).sum::<f64>() / 5.0;
            }
            eta += (code.eta - e.eta).powi(2);
        }
        assert!((parts.traj - mse / 3.0).abs() < 1e-12);
        assert!((parts.eta - eta / 3.0).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_decreasing() {
        let cfg = DmmConfig {
            epochs: 40,
            batch_size: 4,
            lr: 3e-3,
            ..tiny_cfg()
        };
        let ds = toy_dataset(8, 10, 5);
        let idx: Vec<usize> = (0..8).collect();
        let (e1, d1, log1) = train_dmm(&ds, &idx, &cfg, 9).unwrap();
        let (e2, d2, _) = train_dmm(&ds, &idx, &cfg, 9).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(d1, d2);
        let first: f64 = log1[..10].iter().map(|l| l.loss).sum();
        let last: f64 = log1[30..].iter().map(|l| l.loss).sum();
        assert!(last < first);
    }
}
