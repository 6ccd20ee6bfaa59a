//! Throwing task: ballistic flight, miss distance, jerk-regularized
//! objective, kinodynamic constraint vector and its squared-hinge penalty.

use serde::{Deserialize, Serialize};

use crate::curves::JointTrajectory;
use crate::error::{check_len, Error, Result};
use crate::learncore::{gradient, Scalar, Var};
use crate::robot::PlanarArm;

/// Target in the arm's plane: horizontal range `r` and height `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParam {
    pub r: f64,
    pub h: f64,
}

impl TaskParam {
    pub fn new(r: f64, h: f64) -> Self {
        TaskParam { r, h }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpace {
    pub r_lo: f64,
    pub r_hi: f64,
    pub h_lo: f64,
    pub h_hi: f64,
    /// Targets used for data collection.
    pub seen_grid: Vec<TaskParam>,
}

impl Default for TaskSpace {
    /// `r` in 0.7..=1.2 step 0.1, `h` in 0.0..=0.2 step 0.1.
    fn default() -> Self {
        TaskSpace::grid(0.7, 1.2, 6, 0.0, 0.2, 3)
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

impl TaskSpace {
    /// Rectangle with an evenly spaced seen grid including its corners.
    pub fn grid(r_lo: f64, r_hi: f64, nr: usize, h_lo: f64, h_hi: f64, nh: usize) -> Self {
        let seen_grid = linspace(r_lo, r_hi, nr)
            .into_iter()
            .flat_map(|r| linspace(h_lo, h_hi, nh).into_iter().map(move |h| TaskParam::new(r, h)))
            .collect();
        TaskSpace {
            r_lo,
            r_hi,
            h_lo,
            h_hi,
            seen_grid,
        }
    }

    /// Cell midpoints of the seen grid: targets never used for collection.
    pub fn unseen_grid(&self) -> Vec<TaskParam> {
        let mut rs: Vec<f64> = self.seen_grid.iter().map(|t| t.r).collect();
        let mut hs: Vec<f64> = self.seen_grid.iter().map(|t| t.h).collect();
        for v in [&mut rs, &mut hs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mid = |v: &[f64]| -> Vec<f64> {
            if v.len() < 2 {
                v.to_vec()
            } else {
                v.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
            }
        };
        let (mr, mh) = (mid(&rs), mid(&hs));
        mr.iter()
            .flat_map(|&r| mh.iter().map(move |&h| TaskParam::new(r, h)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_lo < self.r_hi && self.h_lo <= self.h_hi) {
            return Err(Error::InvalidConfig("task space needs r_lo < r_hi and h_lo <= h_hi".into()));
        }
        if self.seen_grid.iter().any(|t| !self.contains(*t)) {
            return Err(Error::InvalidConfig("seen grid leaves the task space".into()));
        }
        Ok(())
    }

    pub fn contains(&self, t: TaskParam) -> bool {
        let tol = 1e-9;
        t.r >= self.r_lo - tol && t.r <= self.r_hi + tol && t.h >= self.h_lo - tol && t.h <= self.h_hi + tol
    }

    pub fn require(&self, t: TaskParam) -> Result<()> {
        if self.contains(t) {
            return Ok(());
        }
        let tol = 1e-9;
        if t.r < self.r_lo - tol || t.r > self.r_hi + tol {
            return Err(Error::OutOfRange {
                what: "target range",
                value: t.r,
                lo: self.r_lo,
                hi: self.r_hi,
            });
        }
        Err(Error::OutOfRange {
            what: "target height",
            value: t.h,
            lo: self.h_lo,
            hi: self.h_hi,
        })
    }

    /// Target scaled to the unit square.
    pub fn normalize(&self, t: TaskParam) -> [f64; 2] {
        let hr = self.h_hi - self.h_lo;
        [
            (t.r - self.r_lo) / (self.r_hi - self.r_lo),
            if hr > 0.0 { (t.h - self.h_lo) / hr } else { 0.0 },
        ]
    }

    /// Maps a unit-square point back into the rectangle.
    pub fn denormalize(&self, u: [f64; 2]) -> TaskParam {
        TaskParam::new(
            self.r_lo + u[0] * (self.r_hi - self.r_lo),
            self.h_lo + u[1] * (self.h_hi - self.h_lo),
        )
    }
}

/// Penalty weight per constraint family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintWeights {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub torque: f64,
    pub ee_speed: f64,
    pub clearance: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        ConstraintWeights {
            position: 1.0,
            velocity: 1.0,
            acceleration: 1.0,
            jerk: 1.0,
            torque: 0.1,
            ee_speed: 1.0,
            clearance: 10.0,
        }
    }
}

impl ConstraintWeights {
    pub fn uniform(w: f64) -> Self {
        ConstraintWeights {
            position: w,
            velocity: w,
            acceleration: w,
            jerk: w,
            torque: w,
            ee_speed: w,
            clearance: w,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        ConstraintWeights {
            position: k * self.position,
            velocity: k * self.velocity,
            acceleration: k * self.acceleration,
            jerk: k * self.jerk,
            torque: k * self.torque,
            ee_speed: k * self.ee_speed,
            clearance: k * self.clearance,
        }
    }

    /// Expands to one weight per constraint entry.
    pub fn vector(&self, n: usize) -> Vec<f64> {
        ConstraintLayout::new(n)
            .categories()
            .map(|c| match c {
                Category::Jl => self.position,
                Category::Jvl => self.velocity,
                Category::Jal => self.acceleration,
                Category::Jjl => self.jerk,
                Category::Jtl => self.torque,
                Category::Cvl => self.ee_speed,
                Category::Col => self.clearance,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub g: f64,
    /// Jerk regularization weight.
    pub w1: f64,
    pub weights: ConstraintWeights,
    pub margin_frac: f64,
    /// Extra clearance demanded on top of the arm's `min_clearance` (m).
    pub clearance_margin: f64,
    /// Landing distance counted as a successful throw (m).
    pub success_threshold: f64,
    /// Landing distance required of optimized training motions (m).
    pub opt_success_threshold: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            g: 9.81,
            w1: 1e-3,
            weights: ConstraintWeights::default(),
            margin_frac: 0.01,
            clearance_margin: 0.02,
            success_threshold: 0.04,
            opt_success_threshold: 0.01,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.g, self.success_threshold, self.opt_success_threshold]
            .iter()
            .all(|&v| v > 0.0);
        let w = self.weights;
        let weights_ok = [w.position, w.velocity, w.acceleration, w.jerk, w.torque, w.ee_speed, w.clearance]
            .iter()
            .all(|&v| v >= 0.0);
        if !positive || self.w1 < 0.0 || self.clearance_margin < 0.0 || !weights_ok {
            return Err(Error::InvalidConfig("task constants must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.margin_frac) {
            return Err(Error::InvalidConfig("margin_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of the ballistic root solve.
#[derive(Clone, Copy, Debug)]
pub struct FlightTime<S> {
    pub dt: S,
    /// False when the object never reaches the target height; `dt` is then
    /// the apex time.
    pub reachable: bool,
}

/// Larger root of `p_z + v_z dt - g dt^2 / 2 = target_h`, or the apex time
/// (clamped at zero) when no real root exists.
pub fn flight_time<S: Scalar>(p_z: S, v_z: S, target_h: f64, g: f64) -> FlightTime<S> {
    let dz = p_z - target_h;
    let disc = v_z * v_z + dz * (2.0 * g);
    if disc.val() < 0.0 {
        return FlightTime {
            dt: (v_z / g).relu(),
            reachable: false,
        };
    }
    let root = if disc.val() < 1e-300 {
        S::cst(disc.val().sqrt())
    } else {
        disc.sqrt()
    };
    let dt = if v_z.val() >= 0.0 {
        (v_z + root) / g
    } else {
        // (v + sqrt D) / g rewritten without cancellation.
        dz * 2.0 / (root - v_z)
    };
    FlightTime { dt, reachable: true }
}

/// Squared planar miss distance of an object released from state
/// `(q, dq)`, and whether the target height is reached.
pub fn release_error<S: Scalar>(
    arm: &PlanarArm,
    q: &[S],
    dq: &[S],
    tau: TaskParam,
    cfg: &TaskConfig,
) -> Result<(S, bool)> {
    let (p, v) = arm.object_kinematics(q, dq)?;
    let ft = flight_time(p[1], v[1], tau.h, cfg.g);
    let x = p[0] + v[0] * ft.dt;
    let ex = x - tau.r;
    if ft.reachable {
        Ok((ex * ex, true))
    } else {
        let z = p[1] + v[1] * ft.dt - ft.dt * ft.dt * (0.5 * cfg.g);
        let ez = z - tau.h;
        Ok((ex * ex + ez * ez, false))
    }
}

/// Release error with its gradient with respect to the release state.
pub struct ReleaseGrad {
    pub error: f64,
    pub reachable: bool,
    pub d_q: Vec<f64>,
    pub d_dq: Vec<f64>,
}

pub fn release_error_grad(arm: &PlanarArm, q: &[f64], dq: &[f64], tau: TaskParam, cfg: &TaskConfig) -> Result<ReleaseGrad> {
    let n = arm.dof();
    check_len("release position", n, q.len())?;
    check_len("release velocity", n, dq.len())?;
    let state: Vec<f64> = q.iter().chain(dq).copied().collect();
    let mut reachable = true;
    let (error, g) = gradient(
        |x: &[Var]| {
            let (e, r) = release_error(arm, &x[..n], &x[n..], tau, cfg).expect("dimensions checked");
            reachable = r;
            e
        },
        &state,
    )?;
    Ok(ReleaseGrad {
        error,
        reachable,
        d_q: g[..n].to_vec(),
        d_dq: g[n..].to_vec(),
    })
}

fn check_release_time<T: JointTrajectory + ?Sized>(traj: &T, eta: f64) -> Result<()> {
    if !(0.0..=traj.duration()).contains(&eta) {
        return Err(Error::OutOfRange {
            what: "release time",
            value: eta,
            lo: 0.0,
            hi: traj.duration(),
        });
    }
    Ok(())
}

/// Squared miss distance of the throw released at `eta`.
pub fn task_error<T: JointTrajectory + ?Sized>(
    traj: &T,
    eta: f64,
    tau: TaskParam,
    arm: &PlanarArm,
    cfg: &TaskConfig,
) -> Result<f64> {
    check_release_time(traj, eta)?;
    let q = traj.eval(eta, 0)?;
    let dq = traj.eval(eta, 1)?;
    Ok(release_error(arm, &q, &dq, tau, cfg)?.0)
}

/// `L` uniform times on `[0, duration]` including both ends.
pub fn uniform_grid(duration: f64, count: usize) -> Vec<f64> {
    linspace(0.0, duration, count)
}

/// Grid mean of the squared jerk norm.
pub fn jerk_regularizer<T: JointTrajectory + ?Sized>(traj: &T, grid: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &t in grid {
        acc += traj.eval(t, 3)?.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(acc / grid.len() as f64)
}

/// Task error plus `w1` times the jerk regularizer on an `L`-point grid.
pub fn objective<T: JointTrajectory + ?Sized>(
    traj: &T,
    eta: f64,
    tau: TaskParam,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    grid_len: usize,
) -> Result<f64> {
    if grid_len < 2 {
        return Err(Error::InvalidConfig("quadrature grid needs at least two points".into()));
    }
    let err = task_error(traj, eta, tau, arm, cfg)?;
    if cfg.w1 == 0.0 {
        return Ok(err);
    }
    let grid = uniform_grid(traj.duration(), grid_len);
    Ok(err + cfg.w1 * jerk_regularizer(traj, &grid)?)
}

/// Constraint families, in the order they appear in a constraint vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Jl,
    Jvl,
    Jal,
    Jjl,
    Jtl,
    Cvl,
    Col,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Jl,
        Category::Jvl,
        Category::Jal,
        Category::Jjl,
        Category::Jtl,
        Category::Cvl,
        Category::Col,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Jl => "JL",
            Category::Jvl => "JVL",
            Category::Jal => "JAL",
            Category::Jjl => "JJL",
            Category::Jtl => "JTL",
            Category::Cvl => "CVL",
            Category::Col => "COL",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Index map of a constraint vector for an `n`-joint arm:
/// `[lower position (n), upper position (n), velocity (n), acceleration (n),
/// jerk (n), torque (n), end-effector speed, clearance]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintLayout {
    pub n: usize,
}

impl ConstraintLayout {
    pub fn new(n: usize) -> Self {
        ConstraintLayout { n }
    }

    pub fn len(&self) -> usize {
        6 * self.n + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn category(&self, i: usize) -> Category {
        let n = self.n;
        match i / n {
            0 | 1 => Category::Jl,
            2 => Category::Jvl,
            3 => Category::Jal,
            4 => Category::Jjl,
            5 => Category::Jtl,
            _ if i == 6 * n => Category::Cvl,
            _ => Category::Col,
        }
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        (0..self.len()).map(|i| self.category(i))
    }
}

/// Signed constraint values (`<= 0` is satisfied) with margins applied.
pub fn constraint_vector<S: Scalar>(
    arm: &PlanarArm,
    state: [&[S]; 4],
    cfg: &TaskConfig,
) -> Result<Vec<S>> {
    let [q, dq, ddq, dddq] = state;
    let n = arm.dof();
    for v in state {
        check_len("constraint state", n, v.len())?;
    }
    let lim = &arm.limits;
    let m = cfg.margin_frac;
    let mut c = Vec::with_capacity(ConstraintLayout::new(n).len());
    for j in 0..n {
        let delta = m * (lim.q_max[j] - lim.q_min[j]) / 2.0;
        c.push(-q[j] + (lim.q_min[j] + delta));
    }
    for j in 0..n {
        let delta = m * (lim.q_max[j] - lim.q_min[j]) / 2.0;
        c.push(q[j] - (lim.q_max[j] - delta));
    }
    let bound = |x: S, b: f64| x.abs() - (b - m * b);
    for (vals, bounds) in [(dq, &lim.dq_max), (ddq, &lim.ddq_max), (dddq, &lim.dddq_max)] {
        for j in 0..n {
            c.push(bound(vals[j], bounds[j]));
        }
    }
    let tau = arm.inverse_dynamics(q, dq, ddq)?;
    for j in 0..n {
        c.push(bound(tau[j], lim.tau_max[j]));
    }
    let v = arm.ee_velocity(q, dq)?;
    let mut speed = bound(crate::robot::norm2(v), lim.v_ee_max);
    if let Some(w_max) = lim.w_ee_max {
        let w = dq.iter().fold(S::zero(), |a, &b| a + b);
        speed = speed.max(bound(w, w_max));
    }
    c.push(speed);
    let (dist, _) = arm.min_clearance(q)?;
    c.push(-dist + (lim.min_clearance + cfg.clearance_margin));
    Ok(c)
}

/// `sum_i W_i max(C_i, 0)^2`.
pub fn penalty<S: Scalar>(c: &[S], w: &[f64]) -> Result<S> {
    check_len("penalty weights", c.len(), w.len())?;
    Ok(c.iter()
        .zip(w)
        .fold(S::zero(), |acc, (&ci, &wi)| acc + ci.relu().square() * wi))
}

/// Gradient of [`penalty`] with respect to `C`.
pub fn penalty_grad(c: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len("penalty weights", c.len(), w.len())?;
    Ok(c.iter().zip(w).map(|(&ci, &wi)| 2.0 * wi * ci.max(0.0)).collect())
}

/// Penalty at one state with its gradient with respect to
/// `[q, dq, ddq, dddq]` (each block `n` long). The gradient is skipped
/// (all zeros) when no constraint is active.
pub fn state_penalty_grad(
    arm: &PlanarArm,
    state: [&[f64]; 4],
    cfg: &TaskConfig,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = arm.dof();
    let c = constraint_vector(arm, state, cfg)?;
    let value = penalty(&c, w)?;
    if value == 0.0 {
        return Ok((0.0, vec![0.0; 4 * n]));
    }
    let flat: Vec<f64> = state.iter().flat_map(|s| s.iter().copied()).collect();
    gradient(
        |x: &[Var]| {
            let c = constraint_vector(arm, [&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..]], cfg)
                .expect("dimensions checked");
            penalty(&c, w).expect("dimensions checked")
        },
        &flat,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{BasisSet, ViaPointCurve};
    use crate::learncore::{fd, rng};
    use crate::robot::Limits;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cfg() -> TaskConfig {
        TaskConfig::default()
    }

    #[test]
    fn flight_time_at_target_height_at_rest() {
        let f = flight_time(0.3, 0.0, 0.3, 9.81);
        assert_eq!(f.dt, 0.0);
        assert!(f.reachable);
    }

    #[test]
    fn flight_time_closed_form() {
        let f = flight_time(1.2, 3.0, 0.3, 9.81);
        let expect = (3.0 + 26.658f64.sqrt()) / 9.81;
        assert!((f.dt - expect).abs() < 1e-12);
        assert!((f.dt - 0.8321).abs() < 1e-4);
        let residual = 1.2 + 3.0 * f.dt - 0.5 * 9.81 * f.dt * f.dt - 0.3;
        assert!(residual.abs() <= 1e-9);
    }

    #[test]
    fn flight_time_unreachable_uses_apex() {
        let f = flight_time(0.0, 0.1, 1.0, 9.81);
        assert!(!f.reachable);
        assert!((f.dt - 0.1 / 9.81).abs() < 1e-15);
        assert!((f.dt - 0.01019).abs() < 1e-5);
    }

    #[test]
    fn flight_time_downward_release_is_stable() {
        let mut r = rng(4);
        for _ in 0..1000 {
            let pz: f64 = r.random_range(-1.0..2.0);
            let vz: f64 = r.random_range(-5.0..5.0);
            let h: f64 = r.random_range(-1.0..1.0);
            let f = flight_time(pz, vz, h, 9.81);
            if f.reachable {
                let res = pz + vz * f.dt - 0.5 * 9.81 * f.dt * f.dt - h;
                assert!(res.abs() <= 1e-9);
                let other = (vz - (vz * vz + 2.0 * 9.81 * (pz - h)).sqrt()) / 9.81;
                assert!(f.dt >= other - 1e-12);
            }
        }
    }

    fn point_arm() -> PlanarArm {
        // A single link of length 0.5 pointing up from a base at height 0.5
        // is emulated by lifting the target instead: the object starts at
        // (0.5, 0) with the link along x; we compare against shifted targets.
        let mut arm = PlanarArm::uniform_rods(vec![0.5], vec![1.0], Limits::uniform(1)).unwrap();
        arm.p_b = [0.0, 1.0];
        arm
    }

    #[test]
    fn rest_release_drops_straight_down() {
        // Object at (0.5, 1.0), released at rest, target (1.5, 0): miss 1.
        let arm = point_arm();
        let (e, reach) = release_error(&arm, &[0.0], &[0.0], TaskParam::new(1.5, 0.0), &cfg()).unwrap();
        assert!(reach);
        assert!((e - 1.0).abs() < 1e-12);
        let heavy = TaskConfig { g: 2.0 * 9.81, ..cfg() };
        let (e2, _) = release_error(&arm, &[0.0], &[0.0], TaskParam::new(1.5, 0.0), &heavy).unwrap();
        assert!((e2 - e).abs() < 1e-12);
        let f1 = flight_time(1.0, 0.0, 0.0, 9.81).dt;
        let f2 = flight_time(1.0, 0.0, 0.0, 2.0 * 9.81).dt;
        assert!((f2 - f1 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constructed_hit_has_zero_error() {
        let arm = PlanarArm::default_three_link();
        let q = [0.4, 0.3, -0.2];
        let dq = [1.5, 1.0, 0.5];
        let (p, v) = arm.object_kinematics(&q, &dq).unwrap();
        let h = 0.1;
        let dt = flight_time(p[1], v[1], h, 9.81).dt;
        let tau = TaskParam::new(p[0] + v[0] * dt, h);
        let (e, _) = release_error(&arm, &q, &dq, tau, &cfg()).unwrap();
        assert!(e < 1e-24);
    }

    #[test]
    fn release_gradient_matches_finite_differences() {
        let arm = PlanarArm::default_three_link();
        let mut r = rng(12);
        let tau = TaskParam::new(1.0, 0.1);
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| r.random_range(-1.5..1.5)).collect();
            let dq: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let g = release_error_grad(&arm, &q, &dq, tau, &cfg()).unwrap();
            let x: Vec<f64> = q.iter().chain(&dq).copied().collect();
            let fdg = fd::gradient(
                |x| release_error(&arm, &x[..3], &x[3..], tau, &cfg()).unwrap().0,
                &x,
                1e-5,
            );
            let an: Vec<f64> = g.d_q.iter().chain(&g.d_dq).copied().collect();
            assert!(fd::rel_err_vec(&an, &fdg, 1e-6) < 1e-4);
        }
    }

    fn random_curve(r: &mut impl Rng, scale: f64) -> ViaPointCurve {
        let q0 = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let qt = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let w = (0..60).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
        ViaPointCurve::new(q0, qt, w, 3.0, BasisSet::default()).unwrap()
    }

    #[test]
    fn objective_without_regularizer_is_task_error() {
        let arm = PlanarArm::default_three_link();
        let c = random_curve(&mut rng(1), 0.5);
        let tau = TaskParam::new(1.0, 0.1);
        let nocost = TaskConfig { w1: 0.0, ..cfg() };
        let j = objective(&c, 1.2, tau, &arm, &nocost, 100).unwrap();
        assert_eq!(j, task_error(&c, 1.2, tau, &arm, &nocost).unwrap());
    }

    struct ConstantJerk;
    impl JointTrajectory for ConstantJerk {
        fn duration(&self) -> f64 {
            2.0
        }
        fn dof(&self) -> usize {
            3
        }
        fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
            Ok(match order {
                0 => vec![t * t * t / 6.0, 0.0, 0.0],
                1 => vec![t * t / 2.0, 0.0, 0.0],
                2 => vec![t, 0.0, 0.0],
                _ => vec![1.0, 1.0, 1.0],
            })
        }
    }

    #[test]
    fn constant_jerk_regularizer() {
        let arm = PlanarArm::default_three_link();
        let tau = TaskParam::new(1.0, 0.1);
        let c = cfg();
        let err = task_error(&ConstantJerk, 0.5, tau, &arm, &c).unwrap();
        let j = objective(&ConstantJerk, 0.5, tau, &arm, &c, 50).unwrap();
        assert!((j - err - c.w1 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn rough_curves_have_larger_regularizer() {
        let mut r = rng(21);
        let grid = uniform_grid(3.0, 10_000);
        for _ in 0..20 {
            let rough = random_curve(&mut r, 1.0);
            let smooth = ViaPointCurve {
                w: vec![0.0; 60],
                ..rough.clone()
            };
            assert!(jerk_regularizer(&rough, &grid).unwrap() > jerk_regularizer(&smooth, &grid).unwrap());
        }
    }

    #[test]
    fn velocity_limit_entry_carries_margin() {
        let arm = PlanarArm::default_three_link();
        let q = [0.3, 0.8, 0.6];
        let dq = [3.0, 0.0, 0.0];
        let z = [0.0; 3];
        let c = constraint_vector(&arm, [&q, &dq, &z, &z], &cfg()).unwrap();
        assert!((c[6] - 0.01 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn resting_mid_posture_is_interior() {
        let arm = PlanarArm::default_three_link();
        let z = [0.0; 3];
        let c = constraint_vector(&arm, [&[0.3, 0.8, 0.6], &z, &z, &z], &cfg()).unwrap();
        assert_eq!(c.len(), ConstraintLayout::new(3).len());
        assert!(c.iter().all(|&v| v < 0.0), "{c:?}");
    }

    #[test]
    fn entries_match_direct_recomputation() {
        let arm = PlanarArm::default_three_link();
        let mut r = rng(31);
        let c = cfg();
        let lim = &arm.limits;
        for _ in 0..50 {
            let st: Vec<Vec<f64>> = [3.0, 3.0, 15.0, 150.0]
                .iter()
                .map(|&s| (0..3).map(|_| r.random_range(-s..s)).collect())
                .collect();
            let v = constraint_vector(&arm, [&st[0], &st[1], &st[2], &st[3]], &c).unwrap();
            let tau = arm.inverse_dynamics(&st[0], &st[1], &st[2]).unwrap();
            let vee = arm.ee_velocity(&st[0], &st[1]).unwrap();
            let (dist, _) = arm.min_clearance(&st[0]).unwrap();
            let mut expect = Vec::new();
            for j in 0..3 {
                expect.push(lim.q_min[j] + 0.01 * (lim.q_max[j] - lim.q_min[j]) / 2.0 - st[0][j]);
            }
            for j in 0..3 {
                expect.push(st[0][j] - lim.q_max[j] + 0.01 * (lim.q_max[j] - lim.q_min[j]) / 2.0);
            }
            for (k, b) in [(1, &lim.dq_max), (2, &lim.ddq_max), (3, &lim.dddq_max)] {
                for j in 0..3 {
                    expect.push(st[k][j].abs() - b[j] + 0.01 * b[j]);
                }
            }
            for j in 0..3 {
                expect.push(tau[j].abs() - lim.tau_max[j] + 0.01 * lim.tau_max[j]);
            }
            expect.push(vee[0].hypot(vee[1]) - lim.v_ee_max + 0.01 * lim.v_ee_max);
            expect.push(lim.min_clearance + c.clearance_margin - dist);
            for (a, b) in v.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn angular_speed_folds_into_ee_entry() {
        let mut arm = PlanarArm::default_three_link();
        arm.limits.w_ee_max = Some(1.0);
        let q = [0.3, 0.8, 0.6];
        let dq = [0.5, 0.5, 0.5];
        let z = [0.0; 3];
        let c = constraint_vector(&arm, [&q, &dq, &z, &z], &cfg()).unwrap();
        assert!((c[18] - (1.5 - 1.0 + 0.01)).abs() < 1e-12);
    }

    #[test]
    fn penalty_arithmetic() {
        assert_eq!(penalty(&[-1.0, -0.2, 0.0], &[1.0; 3]).unwrap(), 0.0);
        let p = penalty(&[-1.0, 0.1, -0.3], &[5.0, 2.0, 7.0]).unwrap();
        assert!((p - 0.02).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut r = rng(41);
        for _ in 0..20 {
            let c: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..8).map(|_| r.random_range(0.1..3.0)).collect();
            let an = penalty_grad(&c, &w).unwrap();
            let num = fd::gradient(|x| penalty(x, &w).unwrap(), &c, 1e-7);
            assert!(fd::rel_err_vec(&an, &num, 1e-6) < 1e-6);
        }
    }

    #[test]
    fn state_penalty_gradient_matches_finite_differences() {
        let arm = PlanarArm::default_three_link();
        let c = cfg();
        let w = c.weights.vector(3);
        let mut r = rng(51);
        let mut checked = 0;
        while checked < 20 {
            let st: Vec<f64> = [3.5, 3.5, 18.0, 170.0]
                .iter()
                .flat_map(|&s| (0..3).map(|_| r.random_range(-s..s)).collect::<Vec<_>>())
                .collect();
            let split = |x: &[f64]| -> f64 {
                let c = constraint_vector(&arm, [&x[..3], &x[3..6], &x[6..9], &x[9..]], &c).unwrap();
                penalty(&c, &w).unwrap()
            };
            let (v, g) = state_penalty_grad(&arm, [&st[..3], &st[3..6], &st[6..9], &st[9..]], &c, &w).unwrap();
            if v == 0.0 {
                continue;
            }
            let num = fd::gradient(split, &st, 1e-5);
            assert!(fd::rel_err_vec(&g, &num, 1e-6) < 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn feasible_state_has_zero_gradient() {
        let arm = PlanarArm::default_three_link();
        let z = [0.0; 3];
        let c = cfg();
        let (v, g) = state_penalty_grad(&arm, [&[0.3, 0.8, 0.6], &z, &z, &z], &c, &c.weights.vector(3)).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn layout_categories() {
        let l = ConstraintLayout::new(3);
        assert_eq!(l.len(), 20);
        assert_eq!(l.category(5), Category::Jl);
        assert_eq!(l.category(6), Category::Jvl);
        assert_eq!(l.category(17), Category::Jtl);
        assert_eq!(l.category(18), Category::Cvl);
        assert_eq!(l.category(19), Category::Col);
    }

    #[test]
    fn default_space_grids() {
        let s = TaskSpace::default();
        s.validate().unwrap();
        assert_eq!(s.seen_grid.len(), 18);
        let unseen = s.unseen_grid();
        assert_eq!(unseen.len(), 10);
        assert!(unseen.iter().all(|t| s.contains(*t) && !s.seen_grid.contains(t)));
        assert!(s.require(TaskParam::new(2.0, 0.1)).is_err());
    }
}
