//! Scalar reverse-mode differentiation on a thread-local tape.
//!
//! A [`Var`] is a value plus an index into the tape of the current
//! [`gradient`] session. Constants carry no index and never touch the tape,
//! so expressions mixing constants and variables only record the variable
//! parts. Sessions cannot be nested on one thread.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
}

#[derive(Clone, Copy, Debug)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl Var {
    pub fn constant(val: f64) -> Self {
        Var { val, idx: NONE }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    fn is_const(self) -> bool {
        self.idx == NONE
    }

    fn push(val: f64, a: u32, da: f64, b: u32, db: f64) -> Var {
        let idx = TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.push(Node { a, da, b, db });
            (t.len() - 1) as u32
        });
        Var { val, idx }
    }

    fn unary(self, val: f64, d: f64) -> Var {
        if self.is_const() {
            Var::constant(val)
        } else {
            Var::push(val, self.idx, d, NONE, 0.0)
        }
    }

    fn binary(self, other: Var, val: f64, da: f64, db: f64) -> Var {
        match (self.is_const(), other.is_const()) {
            (true, true) => Var::constant(val),
            (false, true) => Var::push(val, self.idx, da, NONE, 0.0),
            (true, false) => Var::push(val, other.idx, db, NONE, 0.0),
            (false, false) => Var::push(val, self.idx, da, other.idx, db),
        }
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, rhs: Var) -> Var {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, rhs: Var) -> Var {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, rhs: Var) -> Var {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, rhs: Var) -> Var {
        let inv = 1.0 / rhs.val;
        let q = self.val * inv;
        self.binary(rhs, q, inv, -q * inv)
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    fn add(self, rhs: f64) -> Var {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    fn sub(self, rhs: f64) -> Var {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    fn mul(self, rhs: f64) -> Var {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    fn div(self, rhs: f64) -> Var {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl Scalar for Var {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    fn val(self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn abs(self) -> Self {
        let s = if self.val >= 0.0 { 1.0 } else { -1.0 };
        self.unary(self.val.abs(), s)
    }
}

struct SessionGuard;

impl SessionGuard {
    fn begin() -> SessionGuard {
        ACTIVE.with(|a| {
            assert!(!a.get(), "nested gradient sessions are not supported");
            a.set(true);
        });
        TAPE.with(|t| t.borrow_mut().clear());
        SessionGuard
    }
}

impl Drop for SessionGuard {
    fn drop(&mut self) {
        TAPE.with(|t| t.borrow_mut().clear());
        ACTIVE.with(|a| a.set(false));
    }
}

/// Evaluates `loss` at `params` and returns `(value, d loss / d params)`.
///
/// The closure receives one tape variable per parameter. A loss that does
/// not depend on its inputs yields a zero gradient. A non-finite loss value
/// is reported as an error instead of a gradient.
pub fn gradient<F>(loss: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Var]) -> Var,
{
    let _guard = SessionGuard::begin();
    let inputs: Vec<Var> = params
        .iter()
        .map(|&p| Var::push(p, NONE, 0.0, NONE, 0.0))
        .collect();
    let out = loss(&inputs);
    if !out.val.is_finite() {
        return Err(Error::NonFinite(format!("loss value {}", out.val)));
    }
    let mut grad = vec![0.0; params.len()];
    if out.is_const() {
        return Ok((out.val, grad));
    }
    TAPE.with(|t| {
        let tape = t.borrow();
        let mut adj = vec![0.0; tape.len()];
        adj[out.idx as usize] = 1.0;
        for i in (0..=out.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = tape[i];
            if node.a != NONE {
                adj[node.a as usize] += g * node.da;
            }
            if node.b != NONE {
                adj[node.b as usize] += g * node.db;
            }
        }
        grad.copy_from_slice(&adj[..params.len()]);
    });
    Ok((out.val, grad))
}
