//! Online use of a trained manifold: batch generation, grid feasibility
//! checks with rejection sampling, benchmark metrics, nearest-phase search
//! and transition replanning after a target change.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curves::{BasisSet, JointTrajectory, TransitionCurve};
use crate::datagen::Motion;
use crate::error::{check_len, Error, Result};
use crate::latentflow::{sample, FlowConfig, VelocityField};
use crate::learncore::{derive_seed, rng};
use crate::manifold::{DecodedMotion, Decoder, Encoder, LatentCode};
use crate::robot::{norm2, PlanarArm};
use crate::task::{constraint_vector, release_error, uniform_grid, Category, ConstraintLayout, TaskConfig, TaskParam, TaskSpace};

/// Category order of the benchmark table columns.
pub const TABLE_ORDER: [Category; 7] = [
    Category::Jl,
    Category::Jvl,
    Category::Jal,
    Category::Jjl,
    Category::Cvl,
    Category::Jtl,
    Category::Col,
];

/// Joint positions and velocities.
pub type Phase = (Vec<f64>, Vec<f64>);

/// A joint trajectory with a release time.
pub trait ThrowMotion: JointTrajectory {
    fn release_time(&self) -> f64;
}

impl ThrowMotion for Motion {
    fn release_time(&self) -> f64 {
        self.eta
    }
}

impl ThrowMotion for DecodedMotion<'_> {
    fn release_time(&self) -> f64 {
        self.code.eta
    }
}

/// The trained model stack.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub flow: VelocityField,
    pub flow_cfg: FlowConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Motions generated per request.
    pub samples: usize,
    /// Points of the feasibility and nearest-phase grids.
    pub grid_len: usize,
    pub transition_duration: f64,
    pub transition_attempts: usize,
    pub transition_grid: usize,
    /// Standard deviation of random transition basis weights.
    pub transition_w_std: f64,
    pub basis: BasisSet,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            samples: 100,
            grid_len: 100,
            transition_duration: 1.0,
            transition_attempts: 32,
            transition_grid: 50,
            transition_w_std: 0.02,
            basis: BasisSet::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.grid_len < 2 || self.transition_grid < 2 {
            return Err(Error::InvalidConfig("planner counts must be positive, grids at least 2".into()));
        }
        if !(self.transition_duration > 0.0 && self.transition_w_std >= 0.0) {
            return Err(Error::InvalidConfig("transition duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Worst signed constraint value per family, in [`Category::ALL`] order.
    pub worst: [f64; 7],
    /// Squared miss distance (m^2).
    pub task_error: f64,
    pub distance: f64,
    pub success: bool,
}

impl FeasibilityReport {
    pub fn satisfied(&self, c: Category) -> bool {
        self.worst[c.index()] <= 0.0
    }

    /// Passes rejection sampling: feasible and on target.
    pub fn accepted(&self) -> bool {
        self.feasible && self.success
    }
}

/// Running per-family maxima of constraint vectors.
#[derive(Clone, Debug)]
pub struct WorstTracker {
    layout: ConstraintLayout,
    pub worst: [f64; 7],
}

impl WorstTracker {
    pub fn new(n: usize) -> Self {
        WorstTracker {
            layout: ConstraintLayout::new(n),
            worst: [f64::NEG_INFINITY; 7],
        }
    }

    pub fn add(&mut self, arm: &PlanarArm, state: [&[f64]; 4], cfg: &TaskConfig) -> Result<()> {
        let c = constraint_vector(arm, state, cfg)?;
        for (i, v) in c.into_iter().enumerate() {
            let k = self.layout.category(i).index();
            self.worst[k] = self.worst[k].max(v);
        }
        Ok(())
    }

    pub fn feasible(&self) -> bool {
        self.worst.iter().all(|&w| w <= 0.0)
    }
}

fn report(worst: WorstTracker, release: Phase, tau: TaskParam, arm: &PlanarArm, cfg: &TaskConfig) -> Result<FeasibilityReport> {
    let (task_error, _) = release_error(arm, &release.0, &release.1, tau, cfg)?;
    let distance = task_error.sqrt();
    Ok(FeasibilityReport {
        feasible: worst.feasible(),
        worst: worst.worst,
        task_error,
        distance,
        success: distance <= cfg.success_threshold,
    })
}

/// Constraint worsts over `times` and the task error at the release time.
pub fn check<T: ThrowMotion + ?Sized>(
    motion: &T,
    tau: TaskParam,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    times: &[f64],
) -> Result<FeasibilityReport> {
    let mut w = WorstTracker::new(arm.dof());
    for &t in times {
        let [q, dq, ddq, dddq] = motion.eval_all(t)?;
        w.add(arm, [&q, &dq, &ddq, &dddq], cfg)?;
    }
    let eta = motion.release_time();
    report(w, (motion.eval(eta, 0)?, motion.eval(eta, 1)?), tau, arm, cfg)
}

/// Constraint worsts of a trajectory without a release.
pub fn constraint_worst<T: JointTrajectory + ?Sized>(
    traj: &T,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    times: &[f64],
) -> Result<WorstTracker> {
    let mut w = WorstTracker::new(arm.dof());
    for &t in times {
        let [q, dq, ddq, dddq] = traj.eval_all(t)?;
        w.add(arm, [&q, &dq, &ddq, &dddq], cfg)?;
    }
    Ok(w)
}

/// [`check`] for many decoded codes at once, sharing the `theta` jets of
/// the grid.
pub fn check_codes(
    dec: &Decoder,
    codes: &[LatentCode],
    tau: TaskParam,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    times: &[f64],
) -> Result<Vec<FeasibilityReport>> {
    let grid = dec.theta_jets(times)?;
    let etas: Vec<f64> = codes.iter().map(|c| c.eta).collect();
    let release = dec.theta_jets(&etas)?;
    codes
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let mut w = WorstTracker::new(arm.dof());
            for c in 0..times.len() {
                let s: [Vec<f64>; 4] = std::array::from_fn(|k| dec.combine(code, &grid, c, k));
                w.add(arm, [&s[0], &s[1], &s[2], &s[3]], cfg)?;
            }
            let phase = (dec.combine(code, &release, i, 0), dec.combine(code, &release, i, 1));
            report(w, phase, tau, arm, cfg)
        })
        .collect()
}

/// `count` flow samples for `tau`, decoded and cached.
pub fn generate(models: &Models, space: &TaskSpace, tau: TaskParam, count: usize, seed: u64) -> Result<Vec<LatentCode>> {
    space.require(tau)?;
    let z = sample(&models.flow, tau, count, &models.flow_cfg, seed)?;
    models.decoder.prepare_batch(&z)
}

/// Closest `(motion, time)` pair to `q_c` over a position table
/// (`positions[i][c]` is motion `i` at `times[c]`), restricted to
/// `t < etas[i]`. Ties keep the smaller index, then the earlier time.
pub fn nearest_phase_table(
    q_c: &[f64],
    positions: &[Vec<Vec<f64>>],
    times: &[f64],
    etas: &[f64],
) -> Result<(usize, f64, f64)> {
    check_len("release times", positions.len(), etas.len())?;
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, rows) in positions.iter().enumerate() {
        check_len("position table", times.len(), rows.len())?;
        for (c, q) in rows.iter().enumerate() {
            if times[c] >= etas[i] {
                continue;
            }
            check_len("query configuration", q.len(), q_c.len())?;
            let d = q.iter().zip(q_c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((i, times[c], d));
            }
        }
    }
    best.ok_or_else(|| Error::Planning("no grid time precedes any release".into()))
}

pub fn nearest_phase<T: ThrowMotion>(q_c: &[f64], motions: &[T], times: &[f64]) -> Result<(usize, f64, f64)> {
    if motions.is_empty() {
        return Err(Error::Planning("no candidate motions".into()));
    }
    let mut table = Vec::with_capacity(motions.len());
    for m in motions {
        table.push(times.iter().map(|&t| m.eval(t, 0)).collect::<Result<Vec<_>>>()?);
    }
    let etas: Vec<f64> = motions.iter().map(|m| m.release_time()).collect();
    nearest_phase_table(q_c, &table, times, &etas)
}

/// [`nearest_phase`] over decoded codes with shared `theta` values.
pub fn nearest_phase_codes(dec: &Decoder, codes: &[LatentCode], q_c: &[f64], times: &[f64]) -> Result<(usize, f64, f64)> {
    if codes.is_empty() {
        return Err(Error::Planning("no candidate motions".into()));
    }
    let jets = dec.theta_jets(times)?;
    let table: Vec<Vec<Vec<f64>>> = codes
        .iter()
        .map(|code| (0..times.len()).map(|c| dec.combine(code, &jets, c, 0)).collect())
        .collect();
    let etas: Vec<f64> = codes.iter().map(|c| c.eta).collect();
    nearest_phase_table(q_c, &table, times, &etas)
}

fn check_phase(arm: &PlanarArm, (q, dq): &Phase, what: &str) -> Result<()> {
    let n = arm.dof();
    check_len("phase position", n, q.len())?;
    check_len("phase velocity", n, dq.len())?;
    let lim = &arm.limits;
    for j in 0..n {
        if !(q[j] >= lim.q_min[j] && q[j] <= lim.q_max[j] && dq[j].abs() <= lim.dq_max[j]) {
            return Err(Error::Planning(format!("{what} phase violates joint {j} limits")));
        }
    }
    Ok(())
}

/// Transition curve between two phases: `w = 0` first, then Gaussian
/// weights, keeping the first curve feasible on the transition grid.
pub fn plan_transition(
    now: &Phase,
    target: &Phase,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    pcfg: &PlannerConfig,
    seed: u64,
) -> Result<(TransitionCurve, usize)> {
    check_phase(arm, now, "current")?;
    check_phase(arm, target, "target")?;
    let times = uniform_grid(pcfg.transition_duration, pcfg.transition_grid);
    let bn = pcfg.basis.count * arm.dof();
    let mut r = rng(seed);
    let mut best: Option<WorstTracker> = None;
    for attempt in 0..pcfg.transition_attempts.max(1) {
        let w = if attempt == 0 {
            vec![0.0; bn]
        } else {
            (0..bn)
                .map(|_| pcfg.transition_w_std * r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let curve = TransitionCurve::new(now.clone(), target.clone(), w, pcfg.transition_duration, pcfg.basis)?;
        let worst = constraint_worst(&curve, arm, cfg, &times)?;
        if worst.feasible() {
            return Ok((curve, attempt + 1));
        }
        let score = |w: &WorstTracker| w.worst.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if best.as_ref().is_none_or(|b| score(&worst) < score(b)) {
            best = Some(worst);
        }
    }
    let worst = best.expect("at least one attempt");
    let detail: Vec<String> = Category::ALL
        .iter()
        .filter(|c| worst.worst[c.index()] > 0.0)
        .map(|c| format!("{} {:+.4}", c.label(), worst.worst[c.index()]))
        .collect();
    Err(Error::Planning(format!(
        "no feasible transition in {} attempts (worst: {})",
        pcfg.transition_attempts.max(1),
        detail.join(", ")
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Transition(TransitionCurve),
    /// A decoded motion entered at local time `offset`.
    Latent { code: LatentCode, offset: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSegment {
    pub start: f64,
    pub end: f64,
    pub segment: Segment,
}

/// A piecewise plan in absolute time.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub segments: Vec<ScheduleSegment>,
    pub tau: TaskParam,
    /// Absolute release time.
    pub release: f64,
}

impl Schedule {
    /// Executes one decoded motion from time 0.
    pub fn single(dec: &Decoder, code: LatentCode, tau: TaskParam) -> Self {
        let release = code.eta;
        Schedule {
            segments: vec![ScheduleSegment {
                start: 0.0,
                end: dec.duration,
                segment: Segment::Latent { code, offset: 0.0 },
            }],
            tau,
            release,
        }
    }

    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.start)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    fn locate(&self, t: f64) -> Result<(&ScheduleSegment, f64)> {
        let tol = 1e-12 * self.end().abs().max(1.0);
        for seg in &self.segments {
            if t >= seg.start - tol && t <= seg.end + tol {
                let local = (t - seg.start).clamp(0.0, seg.end - seg.start);
                return Ok((seg, local));
            }
        }
        Err(Error::OutOfRange {
            what: "schedule time",
            value: t,
            lo: self.start(),
            hi: self.end(),
        })
    }

    fn segment_eval(dec: &Decoder, seg: &Segment, local: f64) -> Result<[Vec<f64>; 4]> {
        match seg {
            Segment::Transition(c) => c.eval_all(local),
            Segment::Latent { code, offset } => {
                let t = (offset + local).min(dec.duration);
                let jets = dec.theta_jets(&[t])?;
                Ok(std::array::from_fn(|k| dec.combine(code, &jets, 0, k)))
            }
        }
    }

    /// Position and its first three derivatives at absolute time `t`.
    pub fn eval_all(&self, dec: &Decoder, t: f64) -> Result<[Vec<f64>; 4]> {
        let (seg, local) = self.locate(t)?;
        Self::segment_eval(dec, &seg.segment, local)
    }

    pub fn phase(&self, dec: &Decoder, t: f64) -> Result<Phase> {
        let [q, dq, ..] = self.eval_all(dec, t)?;
        Ok((q, dq))
    }

    /// States at both sides of every junction: `(left, right)`.
    pub fn junctions(&self, dec: &Decoder) -> Result<Vec<([Vec<f64>; 4], [Vec<f64>; 4])>> {
        self.segments
            .windows(2)
            .map(|w| {
                Ok((
                    Self::segment_eval(dec, &w[0].segment, w[0].end - w[0].start)?,
                    Self::segment_eval(dec, &w[1].segment, 0.0)?,
                ))
            })
            .collect()
    }

    /// Checks every segment on `points` uniform samples and the throw at
    /// the release.
    pub fn check(&self, dec: &Decoder, arm: &PlanarArm, cfg: &TaskConfig, points: usize) -> Result<FeasibilityReport> {
        let mut w = WorstTracker::new(arm.dof());
        for seg in &self.segments {
            for local in uniform_grid(seg.end - seg.start, points.max(2)) {
                let s = Self::segment_eval(dec, &seg.segment, local)?;
                w.add(arm, [&s[0], &s[1], &s[2], &s[3]], cfg)?;
            }
        }
        let release = self.phase(dec, self.release)?;
        report(w, release, self.tau, arm, cfg)
    }
}

/// Outcome of one replanning request.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationPlan {
    pub transition: TransitionCurve,
    pub transition_attempts: usize,
    /// Index of the selected motion among the generated ones.
    pub index: usize,
    pub attach_time: f64,
    pub distance: f64,
    pub code: LatentCode,
    pub schedule: Schedule,
    pub generated: usize,
    pub retained: usize,
    pub planning_seconds: f64,
}

/// Generates, filters and picks a motion for `tau`, executed from time 0.
pub fn initial_plan(
    models: &Models,
    space: &TaskSpace,
    tau: TaskParam,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    pcfg: &PlannerConfig,
    seed: u64,
) -> Result<(Schedule, FeasibilityReport)> {
    let codes = generate(models, space, tau, pcfg.samples, seed)?;
    let times = uniform_grid(models.decoder.duration, pcfg.grid_len);
    let reports = check_codes(&models.decoder, &codes, tau, arm, cfg, &times)?;
    let (i, rep) = reports
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.accepted())
        .min_by(|a, b| a.1.task_error.total_cmp(&b.1.task_error))
        .ok_or_else(|| Error::Planning(format!("no generated motion for ({}, {}) passed the checker", tau.r, tau.h)))?;
    Ok((Schedule::single(&models.decoder, codes[i].clone(), tau), rep))
}

/// Replans from the phase `now` at absolute time `t_now` toward `tau_new`.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    now: &Phase,
    t_now: f64,
    tau_new: TaskParam,
    models: &Models,
    space: &TaskSpace,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    pcfg: &PlannerConfig,
    seed: u64,
) -> Result<AdaptationPlan> {
    pcfg.validate()?;
    let start = Instant::now();
    let dec = &models.decoder;
    let codes = generate(models, space, tau_new, pcfg.samples, derive_seed(seed, &[0]))?;
    let times = uniform_grid(dec.duration, pcfg.grid_len);
    let reports = check_codes(dec, &codes, tau_new, arm, cfg, &times)?;
    let kept: Vec<usize> = (0..codes.len()).filter(|&i| reports[i].accepted()).collect();
    if kept.is_empty() {
        return Err(Error::Planning(format!(
            "no generated motion for ({}, {}) passed rejection sampling",
            tau_new.r, tau_new.h
        )));
    }
    let kept_codes: Vec<LatentCode> = kept.iter().map(|&i| codes[i].clone()).collect();
    let (k, attach_time, distance) = nearest_phase_codes(dec, &kept_codes, &now.0, &times)?;
    let code = kept_codes[k].clone();
    let jets = dec.theta_jets(&[attach_time])?;
    let target = (dec.combine(&code, &jets, 0, 0), dec.combine(&code, &jets, 0, 1));
    let (transition, transition_attempts) = plan_transition(now, &target, arm, cfg, pcfg, derive_seed(seed, &[1]))?;
    let t_attach = t_now + pcfg.transition_duration;
    let schedule = Schedule {
        segments: vec![
            ScheduleSegment {
                start: t_now,
                end: t_attach,
                segment: Segment::Transition(transition.clone()),
            },
            ScheduleSegment {
                start: t_attach,
                end: t_attach + dec.duration - attach_time,
                segment: Segment::Latent {
                    code: code.clone(),
                    offset: attach_time,
                },
            },
        ],
        tau: tau_new,
        release: t_attach + code.eta - attach_time,
    };
    Ok(AdaptationPlan {
        transition,
        transition_attempts,
        index: kept[k],
        attach_time,
        distance,
        code,
        schedule,
        generated: codes.len(),
        retained: kept.len(),
        planning_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One row of the benchmark table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub grid: String,
    pub tasks: usize,
    pub motions: usize,
    /// Motions counted in the rates (all, or the accepted ones under RS).
    pub counted: usize,
    pub success_rate: f64,
    /// Mean miss distance (m).
    pub mean_error: f64,
    /// Percent satisfying each family, in [`Category::ALL`] order.
    pub satisfaction: [f64; 7],
    pub retention: f64,
    /// Mean wall-clock seconds to generate one batch.
    pub gen_seconds: f64,
}

impl MetricsRow {
    pub fn rate(&self, c: Category) -> f64 {
        self.satisfaction[c.index()]
    }
}

fn aggregate(method: &str, grid: &str, tasks: usize, reports: &[&FeasibilityReport], total: usize, gen_seconds: f64) -> MetricsRow {
    let n = reports.len().max(1) as f64;
    let pct = |f: &dyn Fn(&FeasibilityReport) -> bool| 100.0 * reports.iter().filter(|r| f(r)).count() as f64 / n;
    let mut satisfaction = [0.0; 7];
    for c in Category::ALL {
        satisfaction[c.index()] = if reports.is_empty() { f64::NAN } else { pct(&|r| r.satisfied(c)) };
    }
    MetricsRow {
        method: method.to_string(),
        grid: grid.to_string(),
        tasks,
        motions: total,
        counted: reports.len(),
        success_rate: if reports.is_empty() { f64::NAN } else { pct(&|r| r.success) },
        mean_error: if reports.is_empty() {
            f64::NAN
        } else {
            reports.iter().map(|r| r.distance).sum::<f64>() / n
        },
        satisfaction,
        retention: 100.0 * reports.len() as f64 / total.max(1) as f64,
        gen_seconds,
    }
}

/// Generates `k` motions per task on each grid and aggregates their
/// reports: one row over all motions (`method`) and one over the motions
/// kept by rejection sampling (`method` + "+RS").
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    models: &Models,
    method: &str,
    grids: &[(&str, &[TaskParam])],
    space: &TaskSpace,
    arm: &PlanarArm,
    cfg: &TaskConfig,
    pcfg: &PlannerConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<MetricsRow>> {
    let times = uniform_grid(models.decoder.duration, pcfg.grid_len);
    let mut rows = Vec::new();
    for (g, (name, tasks)) in grids.iter().enumerate() {
        if tasks.is_empty() {
            return Err(Error::InvalidConfig(format!("task grid {name} is empty")));
        }
        let mut all = Vec::with_capacity(tasks.len() * k);
        let mut seconds = 0.0;
        for (i, &tau) in tasks.iter().enumerate() {
            let start = Instant::now();
            let codes = generate(models, space, tau, k, derive_seed(seed, &[g as u64, i as u64]))?;
            seconds += start.elapsed().as_secs_f64();
            all.extend(check_codes(&models.decoder, &codes, tau, arm, cfg, &times)?);
        }
        let gen = seconds / tasks.len() as f64;
        let every: Vec<&FeasibilityReport> = all.iter().collect();
        rows.push(aggregate(method, name, tasks.len(), &every, all.len(), gen));
        let kept: Vec<&FeasibilityReport> = all.iter().filter(|r| r.accepted()).collect();
        rows.push(aggregate(&format!("{method}+RS"), name, tasks.len(), &kept, all.len(), gen));
    }
    Ok(rows)
}

/// One sample of a motion profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
    pub torque: Vec<f64>,
    pub ee_speed: f64,
    pub clearance: f64,
}

pub fn profile_row(arm: &PlanarArm, t: f64, state: [Vec<f64>; 4]) -> Result<ProfileRow> {
    let [q, dq, ddq, _] = state;
    let torque = arm.inverse_dynamics(&q, &dq, &ddq)?;
    let ee_speed = norm2(arm.ee_velocity(&q, &dq)?);
    let clearance = arm.min_clearance(&q)?.0;
    Ok(ProfileRow {
        t,
        q,
        dq,
        ddq,
        torque,
        ee_speed,
        clearance,
    })
}

/// Profile of a schedule on `points` uniform absolute times.
pub fn schedule_profile(schedule: &Schedule, dec: &Decoder, arm: &PlanarArm, points: usize) -> Result<Vec<ProfileRow>> {
    let (a, b) = (schedule.start(), schedule.end());
    uniform_grid(b - a, points.max(2))
        .into_iter()
        .map(|dt| {
            let t = a + dt;
            profile_row(arm, t, schedule.eval_all(dec, t)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::ViaPointCurve;
    use crate::datagen::MotionSource;
    use crate::manifold::DmmConfig;
    use nalgebra::DMatrix;

    fn via(q0: &[f64], qt: &[f64], duration: f64, eta: f64) -> Motion {
        Motion {
            source: MotionSource::ViaPoint(
                ViaPointCurve::new(q0.to_vec(), qt.to_vec(), vec![0.0; 60], duration, BasisSet::default()).unwrap(),
            ),
            eta,
        }
    }

    fn tiny_decoder() -> Decoder {
        let cfg = DmmConfig {
            latent_dim: 3,
            n_basis: 5,
            psi_hidden: vec![8],
            theta_hidden: vec![8],
            eta_hidden: vec![4],
            theta_init_scale: 1.0,
            ..DmmConfig::default()
        };
        Decoder::new(&cfg, 3, 3.0, &mut rng(4)).unwrap()
    }

    #[test]
    fn nearest_phase_finds_point_on_trajectory() {
        let motions: Vec<Motion> = (0..5)
            .map(|i| via(&[0.1 * i as f64, 0.2, -0.3], &[0.5, -0.2 * i as f64, 0.4], 3.0, 2.0))
            .collect();
        let times: Vec<f64> = (0..=30).map(|i| 0.1 * i as f64).collect();
        let q = motions[3].eval(0.4, 0).unwrap();
        let (i, t, d) = nearest_phase(&q, &motions, &times).unwrap();
        assert_eq!(i, 3);
        assert!((t - 0.4).abs() < 1e-12);
        assert!(d < 1e-12);
    }

    #[test]
    fn nearest_phase_respects_release_and_single_motion() {
        let m = via(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 3.0, 1.0);
        let times = uniform_grid(3.0, 31);
        let far = m.eval(2.5, 0).unwrap();
        let (i, t, _) = nearest_phase(&far, std::slice::from_ref(&m), &times).unwrap();
        assert_eq!(i, 0);
        assert!(t < 1.0);
        let early = via(&[0.0; 3], &[1.0; 3], 3.0, 0.0);
        assert!(nearest_phase(&far, &[early], &times).is_err());
    }

    #[test]
    fn nearest_phase_ties_prefer_smaller_index_and_time() {
        let table = vec![
            vec![vec![1.0], vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0], vec![0.0]],
        ];
        let (i, t, d) = nearest_phase_table(&[0.0], &table, &[0.0, 1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!((i, t, d), (0, 1.0, 0.0));
    }

    #[test]
    fn resting_transition_is_accepted_immediately() {
        let arm = PlanarArm::default_three_link();
        let phase = (vec![0.3, 0.5, -0.4], vec![0.0; 3]);
        let (curve, attempts) =
            plan_transition(&phase, &phase, &arm, &TaskConfig::default(), &PlannerConfig::default(), 1).unwrap();
        assert_eq!(attempts, 1);
        assert!(curve.w.iter().all(|&w| w == 0.0));
        for t in [0.0, 0.3, 0.9] {
            let q = curve.eval(t, 0).unwrap();
            for j in 0..3 {
                assert!((q[j] - phase.0[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_velocity_motion_is_infeasible() {
        let arm = PlanarArm::default_three_link();
        let cfg = TaskConfig::default();
        let slow = via(&[0.0, 0.3, 0.3], &[0.6, 0.5, 0.2], 3.0, 1.5);
        let fast = via(&[0.0, 0.3, 0.3], &[6.0, 0.5, 0.2], 0.3, 0.15);
        let times = |m: &Motion| uniform_grid(m.duration(), 100);
        let tau = TaskParam::new(1.0, 0.1);
        assert!(check(&slow, tau, &arm, &cfg, &times(&slow)).unwrap().feasible);
        let rep = check(&fast, tau, &arm, &cfg, &times(&fast)).unwrap();
        assert!(rep.worst[Category::Jvl.index()] > 0.0);
        assert!(!rep.feasible);
    }

    #[test]
    fn batched_check_matches_per_motion_check() {
        let arm = PlanarArm::default_three_link();
        let cfg = TaskConfig::default();
        let dec = tiny_decoder();
        let z = DMatrix::from_fn(3, 4, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let codes = dec.prepare_batch(&z).unwrap();
        let times = uniform_grid(3.0, 40);
        let tau = TaskParam::new(0.9, 0.1);
        let batched = check_codes(&dec, &codes, tau, &arm, &cfg, &times).unwrap();
        for (code, b) in codes.iter().zip(&batched) {
            let single = check(&dec.motion(code.clone()), tau, &arm, &cfg, &times).unwrap();
            for k in 0..7 {
                assert!((single.worst[k] - b.worst[k]).abs() < 1e-9);
            }
            assert!((single.task_error - b.task_error).abs() < 1e-9);
        }
    }

    #[test]
    fn rates_are_percentages_and_rs_rows_are_clean() {
        let reports: Vec<FeasibilityReport> = (0..10)
            .map(|i| FeasibilityReport {
                feasible: i % 3 != 0,
                worst: if i % 3 != 0 { [-1.0; 7] } else { [0.5, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0] },
                task_error: 0.0,
                distance: 0.01 * i as f64,
                success: i < 7,
            })
            .collect();
        let every: Vec<&FeasibilityReport> = reports.iter().collect();
        let row = aggregate("m", "seen", 1, &every, 10, 0.0);
        assert_eq!(row.success_rate, 70.0);
        assert_eq!(row.rate(Category::Jl), 60.0);
        let kept: Vec<&FeasibilityReport> = reports.iter().filter(|r| r.accepted()).collect();
        let rs = aggregate("m+RS", "seen", 1, &kept, 10, 0.0);
        assert!(rs.satisfaction.iter().all(|&v| v == 100.0));
        assert_eq!(rs.success_rate, 100.0);
        assert_eq!(rs.retention, 40.0);
    }
}
