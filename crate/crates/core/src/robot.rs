//! Planar N-link arm moving in a vertical plane.
//!
//! Coordinates are `(x, z)` with gravity along `-z`. Joint `j` rotates every
//! link distal to it; absolute link angles are cumulative sums of joint
//! angles measured counter-clockwise from `+x`.
//!
//! All kinematic and dynamic quantities are closed-form and generic over
//! [`Scalar`], so the same code serves plain evaluation and reverse-mode
//! gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::learncore::Scalar;

pub type Vec2<S> = [S; 2];

#[inline]
fn perp<S: Scalar>(v: Vec2<S>) -> Vec2<S> {
    [-v[1], v[0]]
}

#[inline]
fn sub<S: Scalar>(a: Vec2<S>, b: Vec2<S>) -> Vec2<S> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot2<S: Scalar>(a: Vec2<S>, b: Vec2<S>) -> S {
    a[0] * b[0] + a[1] * b[1]
}

/// 2-D cross product `a_x b_z - a_z b_x`.
#[inline]
fn cross2<S: Scalar>(a: Vec2<S>, b: Vec2<S>) -> S {
    a[0] * b[1] - a[1] * b[0]
}

/// Euclidean norm; zero vectors map to a constant zero so reverse-mode
/// never sees the infinite slope of `sqrt` at the origin.
pub fn norm2<S: Scalar>(v: Vec2<S>) -> S {
    let sq = dot2(v, v);
    if sq.val() < 1e-30 {
        S::cst(sq.val().sqrt())
    } else {
        sq.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub dq_max: Vec<f64>,
    pub ddq_max: Vec<f64>,
    pub dddq_max: Vec<f64>,
    /// End-effector linear speed bound (m/s).
    pub v_ee_max: f64,
    /// End-effector angular speed bound (rad/s); `None` disables it.
    #[serde(default)]
    pub w_ee_max: Option<f64>,
    pub tau_max: Vec<f64>,
    /// Required distance between non-adjacent links (m).
    pub min_clearance: f64,
}

impl Limits {
    pub fn uniform(n: usize) -> Self {
        use std::f64::consts::PI;
        Limits {
            q_min: vec![-PI; n],
            q_max: vec![PI; n],
            dq_max: vec![3.0; n],
            ddq_max: vec![15.0; n],
            dddq_max: vec![150.0; n],
            v_ee_max: 4.0,
            w_ee_max: None,
            tau_max: vec![40.0; n],
            min_clearance: 0.02,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [
            ("q_min", &self.q_min),
            ("q_max", &self.q_max),
            ("dq_max", &self.dq_max),
            ("ddq_max", &self.ddq_max),
            ("dddq_max", &self.dddq_max),
            ("tau_max", &self.tau_max),
        ] {
            if v.len() != n {
                return Err(Error::InvalidConfig(format!("limits.{name} needs {n} entries")));
            }
        }
        let positive = self
            .dq_max
            .iter()
            .chain(&self.ddq_max)
            .chain(&self.dddq_max)
            .chain(&self.tau_max)
            .chain([&self.v_ee_max, &self.min_clearance])
            .chain(self.w_ee_max.as_ref())
            .all(|&b| b > 0.0);
        if !positive {
            return Err(Error::InvalidConfig("limits must be strictly positive".into()));
        }
        if self.q_min.iter().zip(&self.q_max).any(|(lo, hi)| lo >= hi) {
            return Err(Error::InvalidConfig("limits need q_min < q_max".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarArm {
    pub link_lengths: Vec<f64>,
    pub link_masses: Vec<f64>,
    /// Distance of each link's center of mass from its proximal joint.
    pub com_offsets: Vec<f64>,
    /// Rotational inertia of each link about its center of mass.
    pub link_inertias: Vec<f64>,
    pub gravity: f64,
    /// Held object's position in the end-effector frame.
    pub p_b: [f64; 2],
    pub limits: Limits,
    /// Link index pairs checked for clearance.
    pub collision_pairs: Vec<(usize, usize)>,
}

/// Forward kinematics result.
#[derive(Clone, Debug)]
pub struct Fk<S> {
    pub ee_position: Vec2<S>,
    pub ee_angle: S,
    /// Base, every joint, then the end-effector (`n + 1` points).
    pub joint_positions: Vec<Vec2<S>>,
}

/// Mass matrix (row-major `n x n`), Coriolis/centrifugal and gravity vectors.
#[derive(Clone, Debug)]
pub struct DynamicsTerms<S> {
    pub n: usize,
    pub mass: Vec<S>,
    pub coriolis: Vec<S>,
    pub gravity: Vec<S>,
}

impl<S: Scalar> DynamicsTerms<S> {
    pub fn m(&self, r: usize, c: usize) -> S {
        self.mass[r * self.n + c]
    }
}

impl PlanarArm {
    /// The desk-scale three-link arm: 0.5/0.4/0.3 m uniform rods of
    /// 2/1.5/1 kg.
    pub fn default_three_link() -> Self {
        let lengths = vec![0.5, 0.4, 0.3];
        let masses = vec![2.0, 1.5, 1.0];
        let mut limits = Limits::uniform(3);
        limits.tau_max = vec![40.0, 25.0, 10.0];
        PlanarArm::uniform_rods(lengths, masses, limits).expect("default arm is valid")
    }

    /// Arm made of uniform rods: center of mass at mid-length, inertia
    /// `m l^2 / 12`, all non-adjacent link pairs checked for clearance.
    pub fn uniform_rods(lengths: Vec<f64>, masses: Vec<f64>, limits: Limits) -> Result<Self> {
        let n = lengths.len();
        let arm = PlanarArm {
            com_offsets: lengths.iter().map(|l| 0.5 * l).collect(),
            link_inertias: lengths.iter().zip(&masses).map(|(l, m)| m * l * l / 12.0).collect(),
            link_lengths: lengths,
            link_masses: masses,
            gravity: 9.81,
            p_b: [0.05, 0.0],
            limits,
            collision_pairs: (0..n).flat_map(|i| (i + 2..n).map(move |j| (i, j))).collect(),
        };
        arm.validate()?;
        Ok(arm)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if n == 0 {
            return Err(Error::InvalidConfig("arm needs at least one link".into()));
        }
        for (name, len) in [
            ("link_masses", self.link_masses.len()),
            ("com_offsets", self.com_offsets.len()),
            ("link_inertias", self.link_inertias.len()),
        ] {
            if len != n {
                return Err(Error::InvalidConfig(format!("{name} needs {n} entries")));
            }
        }
        if self.link_lengths.iter().chain(&self.link_masses).any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig("link lengths and masses must be positive".into()));
        }
        if self.link_inertias.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig("link inertias must be non-negative".into()));
        }
        if self
            .com_offsets
            .iter()
            .zip(&self.link_lengths)
            .any(|(&c, &l)| !(0.0..=l).contains(&c))
        {
            return Err(Error::InvalidConfig("com offsets must lie on their link".into()));
        }
        if self
            .collision_pairs
            .iter()
            .any(|&(a, b)| a >= n || b >= n || a.abs_diff(b) < 2)
        {
            return Err(Error::InvalidConfig(
                "collision pairs must name distinct, non-adjacent links".into(),
            ));
        }
        self.limits.validate(n)
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    fn check_dims<S>(&self, v: &[S]) -> Result<()> {
        check_len("joint vector", self.dof(), v.len())
    }

    /// Cumulative (absolute) link angles.
    fn link_angles<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut acc = S::zero();
        q.iter()
            .map(|&qi| {
                acc = acc + qi;
                acc
            })
            .collect()
    }

    pub fn fk<S: Scalar>(&self, q: &[S]) -> Result<Fk<S>> {
        self.check_dims(q)?;
        Ok(self.fk_unchecked(q))
    }

    fn fk_unchecked<S: Scalar>(&self, q: &[S]) -> Fk<S> {
        let angles = self.link_angles(q);
        let mut p = [S::zero(), S::zero()];
        let mut joint_positions = Vec::with_capacity(q.len() + 1);
        joint_positions.push(p);
        for (a, &l) in angles.iter().zip(&self.link_lengths) {
            p = [p[0] + a.cos() * l, p[1] + a.sin() * l];
            joint_positions.push(p);
        }
        Fk {
            ee_position: p,
            ee_angle: *angles.last().unwrap(),
            joint_positions,
        }
    }

    /// World position and velocity of the held object.
    pub fn object_kinematics<S: Scalar>(&self, q: &[S], dq: &[S]) -> Result<(Vec2<S>, Vec2<S>)> {
        self.check_dims(q)?;
        self.check_dims(dq)?;
        let fk = self.fk_unchecked(q);
        let (c, s) = (fk.ee_angle.cos(), fk.ee_angle.sin());
        let [bx, bz] = self.p_b;
        let p = [
            fk.ee_position[0] + c * bx - s * bz,
            fk.ee_position[1] + s * bx + c * bz,
        ];
        Ok((p, self.point_velocity(&fk, p, dq)))
    }

    /// Velocity of a point rigidly attached to the last link.
    fn point_velocity<S: Scalar>(&self, fk: &Fk<S>, p: Vec2<S>, dq: &[S]) -> Vec2<S> {
        let mut v = [S::zero(), S::zero()];
        for (j, &w) in dq.iter().enumerate() {
            let r = perp(sub(p, fk.joint_positions[j]));
            v = [v[0] + r[0] * w, v[1] + r[1] * w];
        }
        v
    }

    /// End-effector frame origin velocity.
    pub fn ee_velocity<S: Scalar>(&self, q: &[S], dq: &[S]) -> Result<Vec2<S>> {
        self.check_dims(q)?;
        self.check_dims(dq)?;
        let fk = self.fk_unchecked(q);
        Ok(self.point_velocity(&fk, fk.ee_position, dq))
    }

    fn com_positions<S: Scalar>(&self, fk: &Fk<S>, q: &[S]) -> Vec<Vec2<S>> {
        let angles = self.link_angles(q);
        angles
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let c = self.com_offsets[i];
                let base = fk.joint_positions[i];
                [base[0] + a.cos() * c, base[1] + a.sin() * c]
            })
            .collect()
    }

    /// `dM/dq_l` for every `l`, each row-major `n x n`.
    pub fn mass_matrix_derivatives<S: Scalar>(&self, q: &[S]) -> Result<Vec<Vec<S>>> {
        self.check_dims(q)?;
        let fk = self.fk_unchecked(q);
        let com = self.com_positions(&fk, q);
        Ok(self.mass_derivatives(&fk, &com))
    }

    fn mass_derivatives<S: Scalar>(&self, fk: &Fk<S>, com: &[Vec2<S>]) -> Vec<Vec<S>> {
        let n = self.dof();
        let p = &fk.joint_positions;
        // d(p_ci - p_j)/dq_l = perp(p_ci - p_max(j,l)) for j, l <= i, hence
        // dM_jk/dq_l = sum_i m_i [cross(p_ci - p_max(j,l), r_ik) + cross(p_ci - p_max(k,l), r_ij)]
        // using perp(a) . b = cross(a, b).
        let mut dm = vec![vec![S::zero(); n * n]; n];
        for (l, dml) in dm.iter_mut().enumerate() {
            for j in 0..n {
                for k in j..n {
                    let mut acc = S::zero();
                    for i in j.max(k).max(l)..n {
                        let ci = com[i];
                        let rij = sub(ci, p[j]);
                        let rik = sub(ci, p[k]);
                        let a = cross2(sub(ci, p[j.max(l)]), rik);
                        let b = cross2(sub(ci, p[k.max(l)]), rij);
                        acc = acc + (a + b) * self.link_masses[i];
                    }
                    dml[j * n + k] = acc;
                    dml[k * n + j] = acc;
                }
            }
        }
        dm
    }

    pub fn dynamics_terms<S: Scalar>(&self, q: &[S], dq: &[S]) -> Result<DynamicsTerms<S>> {
        self.check_dims(q)?;
        self.check_dims(dq)?;
        let n = self.dof();
        let fk = self.fk_unchecked(q);
        let com = self.com_positions(&fk, q);
        let p = &fk.joint_positions;

        let mut mass = vec![S::zero(); n * n];
        for j in 0..n {
            for k in j..n {
                let mut acc = S::zero();
                for i in k..n {
                    let d = dot2(sub(com[i], p[j]), sub(com[i], p[k]));
                    acc = acc + d * self.link_masses[i] + self.link_inertias[i];
                }
                mass[j * n + k] = acc;
                mass[k * n + j] = acc;
            }
        }

        let mut gravity = vec![S::zero(); n];
        for (j, g) in gravity.iter_mut().enumerate() {
            for i in j..n {
                *g = *g + (com[i][0] - p[j][0]) * (self.link_masses[i] * self.gravity);
            }
        }

        let coriolis = if dq.iter().all(|v| v.val() == 0.0) {
            vec![S::zero(); n]
        } else {
            let dm = self.mass_derivatives(&fk, &com);
            christoffel_coriolis(n, &dm, dq)
        };

        Ok(DynamicsTerms {
            n,
            mass,
            coriolis,
            gravity,
        })
    }

    /// Joint torques `M(q) ddq + c(q, dq) + h(q)`.
    pub fn inverse_dynamics<S: Scalar>(&self, q: &[S], dq: &[S], ddq: &[S]) -> Result<Vec<S>> {
        self.check_dims(ddq)?;
        let d = self.dynamics_terms(q, dq)?;
        let n = d.n;
        Ok((0..n)
            .map(|r| {
                let mut f = d.coriolis[r] + d.gravity[r];
                for c in 0..n {
                    f = f + d.m(r, c) * ddq[c];
                }
                f
            })
            .collect())
    }

    /// Joint accelerations produced by torques `tau`.
    pub fn forward_dynamics(&self, q: &[f64], dq: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(tau)?;
        let d = self.dynamics_terms(q, dq)?;
        let n = d.n;
        let m = DMatrix::from_row_slice(n, n, &d.mass);
        let rhs = DVector::from_iterator(n, (0..n).map(|i| tau[i] - d.coriolis[i] - d.gravity[i]));
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::NonFinite("mass matrix is not positive definite".into()))?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }

    /// Coriolis matrix `C` with `C dq = c(q, dq)` built from Christoffel
    /// symbols, so that `dM/dt - 2C` is skew-symmetric.
    pub fn coriolis_matrix(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(dq)?;
        let n = self.dof();
        let dm = self.mass_matrix_derivatives(q)?;
        let mut c = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let gamma = 0.5 * (dm[l][j * n + k] + dm[k][j * n + l] - dm[j][k * n + l]);
                    c[j * n + k] += gamma * dq[l];
                }
            }
        }
        Ok(c)
    }

    /// Minimum distance over the configured collision pairs and the pair
    /// attaining it; `(+inf, None)` when no pairs are configured.
    pub fn min_clearance<S: Scalar>(&self, q: &[S]) -> Result<(S, Option<(usize, usize)>)> {
        self.check_dims(q)?;
        if self.collision_pairs.is_empty() {
            return Ok((S::cst(f64::INFINITY), None));
        }
        let fk = self.fk_unchecked(q);
        let p = &fk.joint_positions;
        let mut best: Option<(S, (usize, usize))> = None;
        for &(a, b) in &self.collision_pairs {
            let d = segment_distance(p[a], p[a + 1], p[b], p[b + 1]);
            if best.as_ref().is_none_or(|(bd, _)| d.val() < bd.val()) {
                best = Some((d, (a, b)));
            }
        }
        let (d, pair) = best.unwrap();
        Ok((d, Some(pair)))
    }

    /// Constraint counts per limit family, for callers that lay out their
    /// own constraint vectors: `(position, velocity, acceleration, jerk,
    /// torque, ee_speed, clearance)`.
    pub fn limit_counts(&self) -> [usize; 7] {
        let n = self.dof();
        [2 * n, n, n, n, n, 1, 1]
    }

    /// Stable digest of the arm description.
    pub fn digest(&self) -> String {
        crate::cliio::digest_json(self)
    }
}

fn christoffel_coriolis<S: Scalar>(n: usize, dm: &[Vec<S>], dq: &[S]) -> Vec<S> {
    // c_j = sum_{k,l} 1/2 (dM_jk/dq_l + dM_jl/dq_k - dM_kl/dq_j) dq_k dq_l
    //     = sum_{k,l} (dM_jk/dq_l - 1/2 dM_kl/dq_j) dq_k dq_l
    (0..n)
        .map(|j| {
            let mut acc = S::zero();
            for k in 0..n {
                for l in 0..n {
                    let g = dm[l][j * n + k] - dm[j][k * n + l] * 0.5;
                    acc = acc + g * dq[k] * dq[l];
                }
            }
            acc
        })
        .collect()
}

/// Distance between segments `[p1, q1]` and `[p2, q2]` via their closest
/// points (clamped parametric solve).
pub fn segment_distance<S: Scalar>(p1: Vec2<S>, q1: Vec2<S>, p2: Vec2<S>, q2: Vec2<S>) -> S {
    const EPS: f64 = 1e-14;
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot2(d1, d1);
    let e = dot2(d2, d2);
    let f = dot2(d2, r);
    let (s, t);
    if a.val() <= EPS && e.val() <= EPS {
        s = S::zero();
        t = S::zero();
    } else if a.val() <= EPS {
        s = S::zero();
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot2(d1, r);
        if e.val() <= EPS {
            t = S::zero();
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot2(d1, d2);
            let denom = a * e - b * b;
            let s0 = if denom.val() > EPS * a.val() * e.val() {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                S::zero()
            };
            let t0 = (b * s0 + f) / e;
            if t0.val() < 0.0 {
                t = S::zero();
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0.val() > 1.0 {
                t = S::cst(1.0);
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    let c1 = [p1[0] + d1[0] * s, p1[1] + d1[1] * s];
    let c2 = [p2[0] + d2[0] * t, p2[1] + d2[1] * t];
    norm2(sub(c1, c2))
}
