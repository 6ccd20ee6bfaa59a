//! Joint-space curve families with closed-form time derivatives to order 3.
//!
//! Both families are affine in their parameters. [`CurveRow`] exposes the
//! coefficients of that affine map at one `(t, order)`, which lets
//! optimizers chain gradients without re-deriving the curve.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Anything that yields joint positions and their first three time
/// derivatives on `[0, duration]`.
pub trait JointTrajectory {
    fn duration(&self) -> f64;
    fn dof(&self) -> usize;
    /// Joint vector of time derivative `order` (0..=3) at `t`.
    fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>>;

    /// Position, velocity, acceleration and jerk at `t`.
    fn eval_all(&self, t: f64) -> Result<[Vec<f64>; 4]> {
        Ok([self.eval(t, 0)?, self.eval(t, 1)?, self.eval(t, 2)?, self.eval(t, 3)?])
    }
}

/// Gaussian radial basis on the unit interval, `exp(-B^2 (s - c_i)^2)` with
/// centers `c_i = i / (B - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSet {
    pub count: usize,
}

impl Default for BasisSet {
    fn default() -> Self {
        BasisSet { count: 20 }
    }
}

impl BasisSet {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidConfig("basis needs at least two functions".into()));
        }
        Ok(BasisSet { count })
    }

    pub fn center(&self, i: usize) -> f64 {
        i as f64 / (self.count - 1) as f64
    }

    /// Row of basis values (order 0) or their `s`-derivatives.
    pub fn basis_row(&self, s: f64, order: usize) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange {
                what: "basis phase",
                value: s,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if order > 3 {
            return Err(Error::OutOfRange {
                what: "derivative order",
                value: order as f64,
                lo: 0.0,
                hi: 3.0,
            });
        }
        Ok(self.rows(s)[order].clone())
    }

    /// All four derivative rows at `s`, unchecked.
    fn rows(&self, s: f64) -> [Vec<f64>; 4] {
        let b2 = (self.count * self.count) as f64;
        let mut out: [Vec<f64>; 4] = Default::default();
        for r in out.iter_mut() {
            r.reserve_exact(self.count);
        }
        for i in 0..self.count {
            let u = s - self.center(i);
            let g = (-b2 * u * u).exp();
            out[0].push(g);
            out[1].push(-2.0 * b2 * u * g);
            out[2].push((4.0 * b2 * b2 * u * u - 2.0 * b2) * g);
            out[3].push((12.0 * b2 * b2 * u - 8.0 * b2 * b2 * b2 * u * u * u) * g);
        }
        out
    }
}

/// Coefficients of one evaluation `(t, order)` of an affine curve:
/// `q_j = a q0_j + b qT_j + c dq0_j + d dqT_j + sum_i phi_i w_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub phi: Vec<f64>,
}

impl CurveRow {
    /// Applies the row to boundary vectors and a row-major `B x n` weight
    /// matrix. Missing velocity boundaries are passed as `None`.
    pub fn apply(&self, q0: &[f64], qt: &[f64], vel: Option<(&[f64], &[f64])>, w: &[f64]) -> Vec<f64> {
        let n = q0.len();
        let mut out: Vec<f64> = (0..n).map(|j| self.a * q0[j] + self.b * qt[j]).collect();
        if let Some((dq0, dqt)) = vel {
            for j in 0..n {
                out[j] += self.c * dq0[j] + self.d * dqt[j];
            }
        }
        for (i, &p) in self.phi.iter().enumerate() {
            for j in 0..n {
                out[j] += p * w[i * n + j];
            }
        }
        out
    }

    /// Applies the row to a flat via-point parameter vector laid out as
    /// `[q0 (n), qT (n), w (B x n row-major), ...]`; trailing entries are
    /// ignored.
    pub fn apply_flat(&self, x: &[f64], n: usize, out: &mut [f64]) {
        let w = &x[2 * n..];
        for j in 0..n {
            out[j] = self.a * x[j] + self.b * x[n + j];
        }
        for (i, &p) in self.phi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let wi = &w[i * n..(i + 1) * n];
            for j in 0..n {
                out[j] += p * wi[j];
            }
        }
    }

    /// Adds `g` (a gradient with respect to this row's output) chained back
    /// to the flat parameter layout of [`CurveRow::apply_flat`].
    pub fn scatter_flat(&self, g: &[f64], n: usize, out: &mut [f64]) {
        for j in 0..n {
            out[j] += self.a * g[j];
            out[n + j] += self.b * g[j];
        }
        for (i, &p) in self.phi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let oi = &mut out[2 * n + i * n..2 * n + (i + 1) * n];
            for j in 0..n {
                oi[j] += p * g[j];
            }
        }
    }
}

fn unit_phase(t: f64, duration: f64) -> Result<f64> {
    let tol = 1e-12 * duration.max(1.0);
    if !(t >= -tol && t <= duration + tol) {
        return Err(Error::OutOfRange {
            what: "curve time",
            value: t,
            lo: 0.0,
            hi: duration,
        });
    }
    Ok((t / duration).clamp(0.0, 1.0))
}

fn check_order(order: usize) -> Result<()> {
    if order > 3 {
        return Err(Error::OutOfRange {
            what: "derivative order",
            value: order as f64,
            lo: 0.0,
            hi: 3.0,
        });
    }
    Ok(())
}

/// `s`-derivatives of the smoothstep `3s^2 - 2s^3`.
fn smoothstep(s: f64) -> [f64; 4] {
    [3.0 * s * s - 2.0 * s * s * s, 6.0 * s - 6.0 * s * s, 6.0 - 12.0 * s, -12.0]
}

/// `s`-derivatives of the boundary bump `s^2 (s - 1)^2`.
fn bump(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        s2 * s2 - 2.0 * s2 * s + s2,
        4.0 * s2 * s - 6.0 * s2 + 2.0 * s,
        12.0 * s2 - 12.0 * s + 2.0,
        24.0 * s - 12.0,
    ]
}

/// Order-`k` `s`-derivative of `bump(s) * phi_i(s)` for every basis.
fn bumped_basis(basis: &BasisSet, s: f64, k: usize) -> Vec<f64> {
    const BINOM: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    let m = bump(s);
    let rows = basis.rows(s);
    (0..basis.count)
        .map(|i| (0..=k).map(|j| BINOM[k][j] * m[j] * rows[k - j][i]).sum())
        .collect()
}

fn check_weights(basis: &BasisSet, n: usize, w: &[f64]) -> Result<()> {
    check_len("curve weights", basis.count * n, w.len())
}

/// Rest-to-rest curve `q0 + (qT - q0) p(s) + s^2 (s-1)^2 Phi(s) w`,
/// `s = t / T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViaPointCurve {
    pub q0: Vec<f64>,
    pub qt: Vec<f64>,
    /// Row-major `B x n` weights.
    pub w: Vec<f64>,
    pub duration: f64,
    pub basis: BasisSet,
}

impl ViaPointCurve {
    pub fn new(q0: Vec<f64>, qt: Vec<f64>, w: Vec<f64>, duration: f64, basis: BasisSet) -> Result<Self> {
        let c = ViaPointCurve {
            q0,
            qt,
            w,
            duration,
            basis,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_len("curve end position", self.q0.len(), self.qt.len())?;
        check_weights(&self.basis, self.q0.len(), &self.w)?;
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("curve duration must be positive".into()));
        }
        Ok(())
    }

    pub fn row(&self, t: f64, order: usize) -> Result<CurveRow> {
        check_order(order)?;
        let s = unit_phase(t, self.duration)?;
        Ok(via_point_row(&self.basis, self.duration, s, order))
    }
}

/// Row of a via-point curve at phase `s`; shared by optimizers that keep
/// their own parameter vectors.
pub fn via_point_row(basis: &BasisSet, duration: f64, s: f64, order: usize) -> CurveRow {
    let scale = duration.powi(-(order as i32));
    let p = smoothstep(s)[order] * scale;
    CurveRow {
        a: if order == 0 { 1.0 - p } else { -p },
        b: p,
        c: 0.0,
        d: 0.0,
        phi: bumped_basis(basis, s, order).into_iter().map(|v| v * scale).collect(),
    }
}

impl JointTrajectory for ViaPointCurve {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn dof(&self) -> usize {
        self.q0.len()
    }

    fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        Ok(self.row(t, order)?.apply(&self.q0, &self.qt, None, &self.w))
    }
}

/// Curve with prescribed boundary positions and velocities. Velocity terms
/// carry a factor `T`, so boundary velocities hold for any duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionCurve {
    pub q0: Vec<f64>,
    pub dq0: Vec<f64>,
    pub qt: Vec<f64>,
    pub dqt: Vec<f64>,
    /// Row-major `B x n` weights.
    pub w: Vec<f64>,
    pub duration: f64,
    pub basis: BasisSet,
}

impl TransitionCurve {
    pub fn new(
        (q0, dq0): (Vec<f64>, Vec<f64>),
        (qt, dqt): (Vec<f64>, Vec<f64>),
        w: Vec<f64>,
        duration: f64,
        basis: BasisSet,
    ) -> Result<Self> {
        let c = TransitionCurve {
            q0,
            dq0,
            qt,
            dqt,
            w,
            duration,
            basis,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q0.len();
        check_len("transition start velocity", n, self.dq0.len())?;
        check_len("transition end position", n, self.qt.len())?;
        check_len("transition end velocity", n, self.dqt.len())?;
        check_weights(&self.basis, n, &self.w)?;
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("curve duration must be positive".into()));
        }
        Ok(())
    }

    pub fn row(&self, t: f64, order: usize) -> Result<CurveRow> {
        check_order(order)?;
        let s = unit_phase(t, self.duration)?;
        let mut row = via_point_row(&self.basis, self.duration, s, order);
        let scale = self.duration.powi(1 - order as i32);
        let s2 = s * s;
        let ha = [s - 2.0 * s2 + s2 * s, 1.0 - 4.0 * s + 3.0 * s2, 6.0 * s - 4.0, 6.0];
        let hb = [s2 * s - s2, 3.0 * s2 - 2.0 * s, 6.0 * s - 2.0, 6.0];
        row.c = ha[order] * scale;
        row.d = hb[order] * scale;
        Ok(row)
    }
}

impl JointTrajectory for TransitionCurve {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn dof(&self) -> usize {
        self.q0.len()
    }

    fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        Ok(self
            .row(t, order)?
            .apply(&self.q0, &self.qt, Some((&self.dq0, &self.dqt)), &self.w))
    }
}
