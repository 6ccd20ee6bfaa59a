//! Fully connected networks with smooth activations.
//!
//! Parameters live in one flat vector so optimizers and checkpoints can treat
//! every network uniformly. Layer `l` occupies a column-major `out x in`
//! weight block followed by its `out` biases. Batches are matrices with one
//! sample per column.
//!
//! Besides the usual forward/backward pair, networks propagate degree-3 jets
//! ([`Mlp::forward_jet`]) so time derivatives of a scalar-input network are
//! exact, and back-propagate through those jets ([`Mlp::backward_jet`]) so
//! losses on velocities, accelerations and jerks can be trained.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::jet::Jet3;
use crate::error::{check_len, Error, Result};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `x * Phi(x)` with the exact error-function CDF.
    Gelu,
    Tanh,
}

impl Activation {
    /// Value and first four derivatives at `x`.
    pub fn derivs(self, x: f64) -> [f64; 5] {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
                let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
                let x2 = x * x;
                [
                    x * cdf,
                    cdf + x * pdf,
                    pdf * (2.0 - x2),
                    pdf * x * (x2 - 4.0),
                    pdf * (-x2 * x2 + 7.0 * x2 - 4.0),
                ]
            }
            Activation::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                [
                    t,
                    d,
                    -2.0 * t * d,
                    d * (6.0 * t * t - 2.0),
                    d * (16.0 * t - 24.0 * t * t * t),
                ]
            }
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => x * 0.5 * (1.0 + libm::erf(x * INV_SQRT_2)),
            Activation::Tanh => x.tanh(),
        }
    }

    fn slope(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values of a forward pass, consumed by [`Mlp::backward`].
pub struct MlpCache {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

/// Intermediate values of a jet forward pass, consumed by
/// [`Mlp::backward_jet`]. Matrices are stacked `[order 0 | 1 | 2 | 3]`.
pub struct JetCache {
    batch: usize,
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// A network with all parameters zero.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "layer widths {widths:?} need at least two positive entries"
            )));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; param_count(widths)],
        })
    }

    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `k` inputs is drawn from `U(-1/sqrt(k), 1/sqrt(k))`.
    pub fn init<R: Rng>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(widths, activation)?;
        let mut off = 0;
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let len = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + len] {
                *p = rng.random_range(-bound..bound);
            }
            off += len;
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(widths, activation)?;
        check_len("network parameters", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    /// Multiplies the output layer's weights by `factor` and zeroes its bias.
    pub fn shrink_output_layer(&mut self, factor: f64) {
        let (off, fan_in, out) = self.layer_layout().last().copied().unwrap();
        for p in &mut self.params[off..off + fan_in * out] {
            *p *= factor;
        }
        for p in &mut self.params[off + fan_in * out..off + fan_in * out + out] {
            *p = 0.0;
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_layout(&self) -> Vec<(usize, usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let l = (off, w[0], w[1]);
                off += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    fn affine(&self, off: usize, fan_in: usize, out: usize, x: &DMatrix<f64>, bias_cols: usize) -> DMatrix<f64> {
        let w = DMatrixView::from_slice(&self.params[off..off + out * fan_in], out, fan_in);
        let mut z = w * x;
        let b = &self.params[off + out * fan_in..off + out * fan_in + out];
        for c in 0..bias_cols {
            for (zi, bi) in z.column_mut(c).iter_mut().zip(b) {
                *zi += bi;
            }
        }
        z
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        check_len("network input", self.input_dim(), x.nrows())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let layers = self.layer_layout();
        let last = layers.len() - 1;
        let mut h = x.clone();
        for (l, &(off, fan_in, out)) in layers.iter().enumerate() {
            h = self.affine(off, fan_in, out, &h, h.ncols());
            if l < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.forward(&m)?.as_slice().to_vec())
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, MlpCache)> {
        self.check_input(x)?;
        let layers = self.layer_layout();
        let last = layers.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.clone();
        for (l, &(off, fan_in, out)) in layers.iter().enumerate() {
            let z = self.affine(off, fan_in, out, &h, h.ncols());
            cache.inputs.push(h);
            if l < last {
                h = z.map(|v| self.activation.apply(v));
                cache.pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// and returns `d loss / d input` when `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &DMatrix<f64>,
        grad: &mut [f64],
        need_input_grad: bool,
    ) -> Option<DMatrix<f64>> {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layer_layout();
        let mut g = grad_out.clone();
        for (l, &(off, fan_in, out)) in layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            {
                let mut gw = DMatrixViewMut::from_slice(&mut grad[off..off + out * fan_in], out, fan_in);
                gw.gemm(1.0, &g, &x.transpose(), 1.0);
            }
            let gb = &mut grad[off + out * fan_in..off + out * fan_in + out];
            for c in 0..g.ncols() {
                for (b, v) in gb.iter_mut().zip(g.column(c).iter()) {
                    *b += v;
                }
            }
            if l == 0 && !need_input_grad {
                return None;
            }
            let w = DMatrixView::from_slice(&self.params[off..off + out * fan_in], out, fan_in);
            let mut gx = w.tr_mul(&g);
            if l == 0 {
                return Some(gx);
            }
            let z = &cache.pre[l - 1];
            for (gi, zi) in gx.iter_mut().zip(z.iter()) {
                *gi *= self.activation.slope(*zi);
            }
            g = gx;
        }
        unreachable!()
    }

    /// Propagates jets through the network.
    ///
    /// `x` stacks four `input_dim x batch` blocks: values and first three
    /// derivatives of the inputs with respect to one scalar variable. The
    /// output is stacked the same way.
    pub fn forward_jet(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, JetCache)> {
        self.check_input(x)?;
        if x.ncols() % 4 != 0 {
            return Err(Error::InvalidModel("jet input must stack four blocks".into()));
        }
        let batch = x.ncols() / 4;
        let layers = self.layer_layout();
        let last = layers.len() - 1;
        let mut cache = JetCache {
            batch,
            inputs: Vec::with_capacity(layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.clone();
        for (l, &(off, fan_in, out)) in layers.iter().enumerate() {
            let z = self.affine(off, fan_in, out, &h, batch);
            cache.inputs.push(h);
            if l < last {
                h = self.activate_jet(&z, batch);
                cache.pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    fn activate_jet(&self, z: &DMatrix<f64>, batch: usize) -> DMatrix<f64> {
        let block = batch * z.nrows();
        let zs = z.as_slice();
        let mut y = DMatrix::zeros(z.nrows(), z.ncols());
        let ys = y.as_mut_slice();
        for i in 0..block {
            let (u1, u2, u3) = (zs[block + i], zs[2 * block + i], zs[3 * block + i]);
            let f = self.activation.derivs(zs[i]);
            ys[i] = f[0];
            ys[block + i] = f[1] * u1;
            ys[2 * block + i] = f[2] * u1 * u1 + f[1] * u2;
            ys[3 * block + i] = f[3] * u1 * u1 * u1 + 3.0 * f[2] * u1 * u2 + f[1] * u3;
        }
        y
    }

    /// Back-propagates through [`Mlp::forward_jet`]. `grad_out` holds the
    /// loss gradient with respect to every stacked output coefficient.
    pub fn backward_jet(
        &self,
        cache: &JetCache,
        grad_out: &DMatrix<f64>,
        grad: &mut [f64],
        need_input_grad: bool,
    ) -> Option<DMatrix<f64>> {
        debug_assert_eq!(grad.len(), self.params.len());
        let batch = cache.batch;
        let layers = self.layer_layout();
        let mut g = grad_out.clone();
        for (l, &(off, fan_in, out)) in layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            {
                let mut gw = DMatrixViewMut::from_slice(&mut grad[off..off + out * fan_in], out, fan_in);
                gw.gemm(1.0, &g, &x.transpose(), 1.0);
            }
            let gb = &mut grad[off + out * fan_in..off + out * fan_in + out];
            for c in 0..batch {
                for (b, v) in gb.iter_mut().zip(g.column(c).iter()) {
                    *b += v;
                }
            }
            if l == 0 && !need_input_grad {
                return None;
            }
            let w = DMatrixView::from_slice(&self.params[off..off + out * fan_in], out, fan_in);
            let gx = w.tr_mul(&g);
            if l == 0 {
                return Some(gx);
            }
            g = self.activate_jet_backward(&cache.pre[l - 1], &gx, batch);
        }
        unreachable!()
    }

    fn activate_jet_backward(&self, z: &DMatrix<f64>, gy: &DMatrix<f64>, batch: usize) -> DMatrix<f64> {
        let block = batch * z.nrows();
        let zs = z.as_slice();
        let gs = gy.as_slice();
        let mut gu = DMatrix::zeros(z.nrows(), z.ncols());
        let us = gu.as_mut_slice();
        for i in 0..block {
            let (u1, u2, u3) = (zs[block + i], zs[2 * block + i], zs[3 * block + i]);
            let (g0, g1, g2, g3) = (gs[i], gs[block + i], gs[2 * block + i], gs[3 * block + i]);
            let f = self.activation.derivs(zs[i]);
            us[3 * block + i] = g3 * f[1];
            us[2 * block + i] = g2 * f[1] + 3.0 * g3 * f[2] * u1;
            us[block + i] =
                g1 * f[1] + 2.0 * g2 * f[2] * u1 + g3 * (3.0 * f[3] * u1 * u1 + 3.0 * f[2] * u2);
            us[i] = g0 * f[1]
                + g1 * f[2] * u1
                + g2 * (f[3] * u1 * u1 + f[2] * u2)
                + g3 * (f[4] * u1 * u1 * u1 + 3.0 * f[3] * u1 * u2 + f[2] * u3);
        }
        gu
    }

    /// Value and first three derivatives of every output with respect to the
    /// (scalar) input at `t`.
    pub fn jet_eval(&self, t: f64) -> Result<Vec<Jet3>> {
        if self.input_dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "jet evaluation input width",
                expected: 1,
                got: self.input_dim(),
            });
        }
        let x = DMatrix::from_row_slice(1, 4, &[t, 1.0, 0.0, 0.0]);
        let (y, _) = self.forward_jet(&x)?;
        Ok((0..self.output_dim())
            .map(|r| Jet3::new(y[(r, 0)], y[(r, 1)], y[(r, 2)], y[(r, 3)]))
            .collect())
    }
}
