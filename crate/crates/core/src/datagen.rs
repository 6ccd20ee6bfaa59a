//! Offline data collection: penalty-method trajectory optimization of
//! via-point curves, retiming to a common duration, and the dataset
//! container.

use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curves::{via_point_row, BasisSet, CurveRow, JointTrajectory, TransitionCurve, ViaPointCurve};
use crate::error::{check_len, Error, Result};
use crate::learncore::{cosine_lr, derive_seed, rng, sigmoid, AdamConfig, AdamState, Rng};
use crate::robot::PlanarArm;
use crate::task::{
    constraint_vector, penalty, release_error, release_error_grad, state_penalty_grad, uniform_grid, TaskConfig,
    TaskParam, TaskSpace,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub attempts_per_task: usize,
    /// Optimizations advanced in lockstep.
    pub batch_width: usize,
    pub max_iters: usize,
    /// Adam base rate, decayed by a cosine schedule over `max_iters`.
    pub lr: f64,
    /// Common duration of every stored motion (s).
    pub duration: f64,
    /// Grid points per trajectory, for both constraint checks and storage.
    pub grid_len: usize,
    pub basis: BasisSet,
    pub eta_init: f64,
    pub eta_min: f64,
    /// Upper clamp on the release time; leaves room for the stop segment.
    pub eta_max: f64,
    /// Weight of the release-time term `w_eta * eta`.
    pub w_eta: f64,
    pub retime_attempts: usize,
    /// Standard deviation of random stop-segment weights.
    pub retime_w_std: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            attempts_per_task: 30,
            batch_width: 10,
            max_iters: 10_000,
            lr: 3e-2,
            duration: 3.0,
            grid_len: 100,
            basis: BasisSet::default(),
            eta_init: 1.2,
            eta_min: 0.2,
            eta_max: 2.5,
            w_eta: 0.05,
            retime_attempts: 32,
            retime_w_std: 0.02,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attempts_per_task == 0 || self.batch_width == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("collection counts must be positive".into()));
        }
        if self.grid_len < 2 || self.basis.count < 2 {
            return Err(Error::InvalidConfig("collection grid and basis need at least two points".into()));
        }
        if !(self.lr > 0.0 && self.duration > 0.0 && self.w_eta >= 0.0 && self.retime_w_std >= 0.0) {
            return Err(Error::InvalidConfig("collection rates and durations must be positive".into()));
        }
        if !(0.0 < self.eta_min && self.eta_min <= self.eta_init && self.eta_init <= self.eta_max)
            || self.eta_max >= self.duration
        {
            return Err(Error::InvalidConfig(
                "need 0 < eta_min <= eta_init <= eta_max < duration".into(),
            ));
        }
        Ok(())
    }
}

/// A throwing motion: joint trajectory plus release time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub source: MotionSource,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionSource {
    ViaPoint(ViaPointCurve),
    /// `head` up to `switch`, then `tail` (started at `switch`).
    Composite {
        head: ViaPointCurve,
        switch: f64,
        tail: TransitionCurve,
    },
}

impl JointTrajectory for Motion {
    fn duration(&self) -> f64 {
        match &self.source {
            MotionSource::ViaPoint(c) => c.duration,
            MotionSource::Composite { switch, tail, .. } => switch + tail.duration,
        }
    }

    fn dof(&self) -> usize {
        match &self.source {
            MotionSource::ViaPoint(c) => c.dof(),
            MotionSource::Composite { head, .. } => head.dof(),
        }
    }

    fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        match &self.source {
            MotionSource::ViaPoint(c) => c.eval(t, order),
            MotionSource::Composite { head, switch, tail } => {
                if t <= *switch {
                    head.eval(t, order)
                } else {
                    tail.eval((t - switch).min(tail.duration), order)
                }
            }
        }
    }
}

/// Joint vector sampled from `q_min + sigmoid(v) (q_max - q_min)` with
/// standard normal `v`.
pub fn random_boundary_init(arm: &PlanarArm, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let lim = &arm.limits;
    let mut draw = || -> Vec<f64> {
        (0..arm.dof())
            .map(|j| {
                let v: f64 = rng.sample(StandardNormal);
                lim.q_min[j] + sigmoid(v) * (lim.q_max[j] - lim.q_min[j])
            })
            .collect()
    };
    let q0 = draw();
    let qt = draw();
    (q0, qt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Success,
    IterationCap,
    NonFinite,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub motion: Motion,
    pub curve: ViaPointCurve,
    /// Objective (task error plus jerk regularizer) at the final iterate.
    pub objective: f64,
    /// Landing distance (m).
    pub distance: f64,
    /// Largest constraint entry over the check grid.
    pub max_violation: f64,
    pub iterations: usize,
    pub status: OptStatus,
    /// Wall-clock time spent on this optimization.
    pub elapsed: Duration,
}

/// Curve rows for every grid time and derivative order, shared across all
/// optimizations with the same horizon, grid and basis.
pub struct GridRows {
    times: Vec<f64>,
    rows: Vec<[CurveRow; 4]>,
}

impl GridRows {
    pub fn new(cfg: &CollectConfig) -> Self {
        let times = uniform_grid(cfg.duration, cfg.grid_len);
        let rows = times
            .iter()
            .map(|&t| {
                let s = (t / cfg.duration).clamp(0.0, 1.0);
                [0, 1, 2, 3].map(|k| via_point_row(&cfg.basis, cfg.duration, s, k))
            })
            .collect();
        GridRows { times, rows }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// One penalty-method optimization, advanced one Adam step at a time so
/// that several can run in lockstep.
pub struct MotionOptimizer<'a> {
    arm: &'a PlanarArm,
    task_cfg: &'a TaskConfig,
    cfg: &'a CollectConfig,
    grid: &'a GridRows,
    weights: Vec<f64>,
    tau: TaskParam,
    x: Vec<f64>,
    adam: AdamState,
    iter: usize,
    elapsed: Duration,
    last: Option<Eval>,
    status: Option<OptStatus>,
}

struct Eval {
    error: f64,
    regularizer: f64,
    penalty: f64,
    max_violation: f64,
    grad: Vec<f64>,
}

impl<'a> MotionOptimizer<'a> {
    pub fn new(
        arm: &'a PlanarArm,
        task_cfg: &'a TaskConfig,
        cfg: &'a CollectConfig,
        grid: &'a GridRows,
        tau: TaskParam,
        seed: u64,
    ) -> Self {
        let n = arm.dof();
        let (q0, qt) = random_boundary_init(arm, &mut rng(seed));
        let mut x = q0;
        x.extend(qt);
        x.extend(std::iter::repeat_n(0.0, cfg.basis.count * n));
        x.push(cfg.eta_init);
        let len = x.len();
        MotionOptimizer {
            arm,
            task_cfg,
            cfg,
            grid,
            weights: task_cfg.weights.vector(n),
            tau,
            x,
            adam: AdamState::new(AdamConfig::with_lr(cfg.lr), len),
            iter: 0,
            elapsed: Duration::ZERO,
            last: None,
            status: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.status.is_some()
    }

    /// Objective value and gradient at the current iterate.
    fn evaluate(&self) -> Result<Eval> {
        let n = self.arm.dof();
        let cfg = self.cfg;
        let x = &self.x;
        let eta_idx = x.len() - 1;
        let inv_l = 1.0 / cfg.grid_len as f64;
        let mut grad = vec![0.0; x.len()];
        let mut st = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut regularizer = 0.0;
        let mut penalty_mean = 0.0;
        let mut max_violation = f64::NEG_INFINITY;
        for rows in &self.grid.rows {
            for k in 0..4 {
                rows[k].apply_flat(x, n, &mut st[k]);
            }
            let state = [&st[0][..], &st[1][..], &st[2][..], &st[3][..]];
            let c = constraint_vector(self.arm, state, self.task_cfg)?;
            max_violation = c.iter().copied().fold(max_violation, f64::max);
            let pen = penalty(&c, &self.weights)?;
            penalty_mean += pen * inv_l;
            if pen > 0.0 {
                let (_, g) = state_penalty_grad(self.arm, state, self.task_cfg, &self.weights)?;
                for k in 0..4 {
                    let gk: Vec<f64> = g[k * n..(k + 1) * n].iter().map(|v| v * inv_l).collect();
                    rows[k].scatter_flat(&gk, n, &mut grad);
                }
            }
            let jj: f64 = st[3].iter().map(|v| v * v).sum();
            regularizer += jj * inv_l;
            let gj: Vec<f64> = st[3].iter().map(|v| 2.0 * self.task_cfg.w1 * inv_l * v).collect();
            rows[3].scatter_flat(&gj, n, &mut grad);
        }

        let eta = x[eta_idx];
        let s = eta / cfg.duration;
        let r: [CurveRow; 3] = [0, 1, 2].map(|k| via_point_row(&cfg.basis, cfg.duration, s, k));
        let mut rel = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for k in 0..3 {
            r[k].apply_flat(x, n, &mut rel[k]);
        }
        let rg = release_error_grad(self.arm, &rel[0], &rel[1], self.tau, self.task_cfg)?;
        r[0].scatter_flat(&rg.d_q, n, &mut grad);
        r[1].scatter_flat(&rg.d_dq, n, &mut grad);
        grad[eta_idx] += (0..n)
            .map(|j| rg.d_q[j] * rel[1][j] + rg.d_dq[j] * rel[2][j])
            .sum::<f64>()
            + cfg.w_eta;
        Ok(Eval {
            error: rg.error,
            regularizer,
            penalty: penalty_mean,
            max_violation,
            grad,
        })
    }

    /// Current decision vector `[q0, qT, w, eta]`.
    pub fn params(&self) -> &[f64] {
        &self.x
    }

    pub fn set_params(&mut self, x: &[f64]) -> Result<()> {
        check_len("optimizer parameters", self.x.len(), x.len())?;
        self.x.copy_from_slice(x);
        Ok(())
    }

    /// Penalized objective (task error, jerk regularizer, grid-mean penalty
    /// and the release-time cost) and its gradient at the current iterate.
    pub fn objective_and_gradient(&self) -> Result<(f64, Vec<f64>)> {
        let ev = self.evaluate()?;
        let eta = self.x[self.x.len() - 1];
        let value = ev.error + self.task_cfg.w1 * ev.regularizer + ev.penalty + self.cfg.w_eta * eta;
        Ok((value, ev.grad))
    }

    /// One iteration: evaluate, test for success, otherwise update.
    pub fn step(&mut self) {
        if self.status.is_some() {
            return;
        }
        let start = Instant::now();
        match self.evaluate() {
            Ok(ev) => {
                let success = ev.error.sqrt() <= self.task_cfg.opt_success_threshold && ev.max_violation <= 0.0;
                if success {
                    self.status = Some(OptStatus::Success);
                } else if self.iter >= self.cfg.max_iters {
                    self.status = Some(OptStatus::IterationCap);
                } else {
                    let lr = cosine_lr(self.cfg.lr, self.iter, self.cfg.max_iters);
                    if self.adam.step_with_lr(&mut self.x, &ev.grad, lr).is_err() {
                        self.status = Some(OptStatus::NonFinite);
                    }
                    let last = self.x.len() - 1;
                    self.x[last] = self.x[last].clamp(self.cfg.eta_min, self.cfg.eta_max);
                    self.iter += 1;
                }
                self.last = Some(ev);
            }
            Err(_) => self.status = Some(OptStatus::NonFinite),
        }
        self.elapsed += start.elapsed();
    }

    pub fn run(mut self) -> OptimizeResult {
        while !self.is_done() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(self) -> OptimizeResult {
        let n = self.arm.dof();
        let b = self.cfg.basis.count;
        let x = &self.x;
        let curve = ViaPointCurve {
            q0: x[..n].to_vec(),
            qt: x[n..2 * n].to_vec(),
            w: x[2 * n..2 * n + b * n].to_vec(),
            duration: self.cfg.duration,
            basis: self.cfg.basis,
        };
        let (objective, distance, max_violation) = match &self.last {
            Some(ev) => (
                ev.error + self.task_cfg.w1 * ev.regularizer,
                ev.error.sqrt(),
                ev.max_violation,
            ),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        OptimizeResult {
            motion: Motion {
                source: MotionSource::ViaPoint(curve.clone()),
                eta: x[x.len() - 1],
            },
            curve,
            objective,
            distance,
            max_violation,
            iterations: self.iter,
            status: self.status.unwrap_or(OptStatus::IterationCap),
            elapsed: self.elapsed,
        }
    }
}

/// Runs one optimization from the seeded random initialization.
pub fn optimize_motion(
    arm: &PlanarArm,
    space: &TaskSpace,
    tau: TaskParam,
    task_cfg: &TaskConfig,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<OptimizeResult> {
    space.require(tau)?;
    let grid = GridRows::new(cfg);
    Ok(MotionOptimizer::new(arm, task_cfg, cfg, &grid, tau, seed).run())
}

/// Runs several optimizations in lockstep, one Adam step each per round.
/// Results equal running each item alone with the same seed.
pub fn optimize_batch(
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    cfg: &CollectConfig,
    grid: &GridRows,
    items: &[(TaskParam, u64)],
) -> Vec<OptimizeResult> {
    let mut opts: Vec<MotionOptimizer> = items
        .iter()
        .map(|&(tau, seed)| MotionOptimizer::new(arm, task_cfg, cfg, grid, tau, seed))
        .collect();
    while opts.iter().any(|o| !o.is_done()) {
        for o in opts.iter_mut() {
            o.step();
        }
    }
    opts.into_iter().map(MotionOptimizer::finish).collect()
}

/// Worst constraint entry of a trajectory over the given times.
pub fn max_violation<T: JointTrajectory + ?Sized>(
    traj: &T,
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    times: &[f64],
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for &t in times {
        let [q, dq, ddq, dddq] = traj.eval_all(t)?;
        let c = constraint_vector(arm, [&q, &dq, &ddq, &dddq], task_cfg)?;
        worst = c.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

/// Keeps the motion up to its release time and appends a stop segment
/// ending at rest at the configured common duration.
pub fn retime_trim_extend(
    motion: &Motion,
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<Motion> {
    let head = match &motion.source {
        MotionSource::ViaPoint(c) => c.clone(),
        MotionSource::Composite { .. } => {
            return Err(Error::InvalidConfig("motion is already retimed".into()));
        }
    };
    let eta = motion.eta;
    if !(eta > 0.0 && eta < cfg.duration) {
        return Err(Error::OutOfRange {
            what: "release time",
            value: eta,
            lo: 0.0,
            hi: cfg.duration,
        });
    }
    let n = arm.dof();
    let q = head.eval(eta, 0)?;
    let dq = head.eval(eta, 1)?;
    let rest = cfg.duration - eta;
    let lim = &arm.limits;
    let q_stop: Vec<f64> = (0..n)
        .map(|j| {
            let delta = task_cfg.margin_frac * (lim.q_max[j] - lim.q_min[j]) / 2.0;
            (q[j] + dq[j] * rest / 3.0).clamp(lim.q_min[j] + delta, lim.q_max[j] - delta)
        })
        .collect();
    let times: Vec<f64> = uniform_grid(cfg.duration, cfg.grid_len)
        .into_iter()
        .filter(|&t| t >= eta)
        .collect();
    let mut r = rng(seed);
    let bn = cfg.basis.count * n;
    for attempt in 0..=cfg.retime_attempts {
        let w = if attempt == 0 {
            vec![0.0; bn]
        } else {
            (0..bn)
                .map(|_| cfg.retime_w_std * r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let tail = TransitionCurve::new((q.clone(), dq.clone()), (q_stop.clone(), vec![0.0; n]), w, rest, cfg.basis)?;
        let out = Motion {
            source: MotionSource::Composite {
                head: head.clone(),
                switch: eta,
                tail,
            },
            eta,
        };
        if max_violation(&out, arm, task_cfg, &times)? <= 0.0 {
            return Ok(out);
        }
    }
    Err(Error::Planning(format!(
        "stop segment infeasible after {} attempts",
        cfg.retime_attempts + 1
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub duration: f64,
    pub grid_len: usize,
    pub dof: usize,
    pub arm_hash: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub tau: TaskParam,
    pub eta: f64,
    /// `L x n` joint samples on the uniform grid.
    pub traj: Vec<Vec<f64>>,
    pub motion: Motion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub entries: Vec<Entry>,
}

pub const DATASET_VERSION: u32 = 1;

impl Dataset {
    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.meta.duration, self.meta.grid_len)
    }

    /// Distinct targets in first-appearance order.
    pub fn tasks(&self) -> Vec<TaskParam> {
        let mut out: Vec<TaskParam> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.tau) {
                out.push(e.tau);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.traj.len() != self.meta.grid_len || e.traj.iter().any(|row| row.len() != self.meta.dof) {
                return Err(Error::InvalidModel(format!("dataset entry {i} has the wrong shape")));
            }
            if !(e.eta > 0.0 && e.eta < self.meta.duration) {
                return Err(Error::InvalidModel(format!("dataset entry {i} has release time outside (0, T)")));
            }
        }
        Ok(())
    }

    /// Deterministic split: every `k`-th entry (by index, starting at
    /// `k - 1`) is held out.
    pub fn split_holdout(&self, every: usize) -> (Vec<usize>, Vec<usize>) {
        let every = every.max(2);
        (0..self.entries.len()).partition(|i| (i + 1) % every != 0)
    }
}

pub fn sample_grid<T: JointTrajectory + ?Sized>(traj: &T, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    times.iter().map(|&t| traj.eval(t, 0)).collect()
}

/// Per-target collection outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskYield {
    pub tau: TaskParam,
    pub attempts: usize,
    pub optimized: usize,
    pub stored: usize,
    pub iteration_cap: usize,
    pub non_finite: usize,
    pub retime_failed: usize,
    pub mean_eta: f64,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug)]
pub struct CollectReport {
    pub yields: Vec<TaskYield>,
    /// Wall-clock seconds of every optimization, in run order.
    pub attempt_seconds: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Lower quartile, median and upper quartile (linear interpolation).
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [at(0.25), at(0.5), at(0.75)]
}

/// Collects successful, retimed motions for every seen target.
pub fn collect(
    arm: &PlanarArm,
    space: &TaskSpace,
    task_cfg: &TaskConfig,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<(Dataset, CollectReport)> {
    arm.validate()?;
    space.validate()?;
    task_cfg.validate()?;
    cfg.validate()?;
    if space.seen_grid.is_empty() {
        return Err(Error::InvalidConfig("seen grid is empty".into()));
    }
    let grid = GridRows::new(cfg);
    let times = grid.times().to_vec();
    let mut entries = Vec::new();
    let mut report = CollectReport {
        yields: Vec::new(),
        attempt_seconds: Vec::new(),
        warnings: Vec::new(),
    };
    for (ti, &tau) in space.seen_grid.iter().enumerate() {
        let mut y = TaskYield {
            tau,
            attempts: cfg.attempts_per_task,
            optimized: 0,
            stored: 0,
            iteration_cap: 0,
            non_finite: 0,
            retime_failed: 0,
            mean_eta: f64::NAN,
            mean_iterations: 0.0,
        };
        let mut etas = Vec::new();
        let seeds: Vec<u64> = (0..cfg.attempts_per_task)
            .map(|a| derive_seed(seed, &[ti as u64, a as u64]))
            .collect();
        for chunk in seeds.chunks(cfg.batch_width) {
            let items: Vec<(TaskParam, u64)> = chunk.iter().map(|&s| (tau, s)).collect();
            for (res, &s) in optimize_batch(arm, task_cfg, cfg, &grid, &items).into_iter().zip(chunk) {
                report.attempt_seconds.push(res.elapsed.as_secs_f64());
                y.mean_iterations += res.iterations as f64 / cfg.attempts_per_task as f64;
                match res.status {
                    OptStatus::Success => y.optimized += 1,
                    OptStatus::IterationCap => {
                        y.iteration_cap += 1;
                        continue;
                    }
                    OptStatus::NonFinite => {
                        y.non_finite += 1;
                        continue;
                    }
                }
                match retime_trim_extend(&res.motion, arm, task_cfg, cfg, derive_seed(s, &[1])) {
                    Ok(motion) => {
                        etas.push(motion.eta);
                        entries.push(Entry {
                            tau,
                            eta: motion.eta,
                            traj: sample_grid(&motion, &times)?,
                            motion,
                        });
                        y.stored += 1;
                    }
                    Err(_) => y.retime_failed += 1,
                }
            }
        }
        if !etas.is_empty() {
            y.mean_eta = etas.iter().sum::<f64>() / etas.len() as f64;
        } else {
            let msg = format!("no successful motion for target r={} h={}", tau.r, tau.h);
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        log::info!(
            "target r={:.2} h={:.2}: stored {}/{} (mean eta {:.3})",
            tau.r,
            tau.h,
            y.stored,
            y.attempts,
            y.mean_eta
        );
        report.yields.push(y);
    }
    let meta = DatasetMeta {
        format_version: DATASET_VERSION,
        duration: cfg.duration,
        grid_len: cfg.grid_len,
        dof: arm.dof(),
        arm_hash: arm.digest(),
        config_hash: crate::cliio::digest_json(&(cfg, task_cfg, space)),
    };
    Ok((Dataset { meta, entries }, report))
}

/// Release error of a motion's throw.
pub fn motion_distance(motion: &Motion, arm: &PlanarArm, tau: TaskParam, task_cfg: &TaskConfig) -> Result<f64> {
    let q = motion.eval(motion.eta, 0)?;
    let dq = motion.eval(motion.eta, 1)?;
    Ok(release_error(arm, &q, &dq, tau, task_cfg)?.0.sqrt())
}

/// Grid-mean penalty of a trajectory (diagnostics).
pub fn mean_penalty<T: JointTrajectory + ?Sized>(
    traj: &T,
    arm: &PlanarArm,
    task_cfg: &TaskConfig,
    times: &[f64],
) -> Result<f64> {
    let w = task_cfg.weights.vector(arm.dof());
    let mut acc = 0.0;
    for &t in times {
        let [q, dq, ddq, dddq] = traj.eval_all(t)?;
        acc += penalty(&constraint_vector(arm, [&q, &dq, &ddq, &dddq], task_cfg)?, &w)?;
    }
    Ok(acc / times.len() as f64)
}
