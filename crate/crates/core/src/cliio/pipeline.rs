//! Pipeline stages over a single output directory.
//!
//! Every stage reads its inputs from the directory and writes its outputs
//! back atomically, so any stage can be re-run on its own. Wall-clock
//! timings go to separate `*_timing.csv` files; every other artifact is a
//! pure function of the configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use super::config::{Stage, ToolkitConfig};
use super::store::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint};
use super::write_csv;
use crate::curves::JointTrajectory;
use crate::datagen::{quartiles, Dataset};
use crate::error::{Error, Result};
use crate::latentflow::{latent_pairs, train_flow, VelocityField};
use crate::learncore::derive_seed;
use crate::manifold::{recon_metrics, train_dmm, Decoder, Encoder};
use crate::planner::{
    adapt, check_codes, generate, initial_plan, schedule_profile, FeasibilityReport, MetricsRow, Models,
    ProfileRow, Schedule, ScheduleSegment, Segment, TABLE_ORDER,
};
use crate::task::{uniform_grid, TaskParam};
use crate::tmo::{category_labels, finetune, TmoEnv};

pub const DATASET_FILE: &str = "dataset.json";
pub const DMM_FILE: &str = "dmm.json";
pub const MODELS_FILE: &str = "models.json";
pub const MODELS_TMO_FILE: &str = "models_tmo.json";

/// Points per profile written by `plan` and `adapt`.
const PROFILE_POINTS: usize = 200;

pub struct Pipeline {
    pub cfg: ToolkitConfig,
    /// Use the fine-tuned decoder where one applies.
    pub use_tmo: bool,
    /// Filter generated motions through the checker.
    pub use_rs: bool,
}

/// Scripted target changes for `adapt`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub start: TaskParam,
    #[serde(default)]
    pub event: Vec<ScenarioEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEvent {
    /// Absolute time of the change (s).
    pub time: f64,
    pub r: f64,
    pub h: f64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// One handled scenario event.
#[derive(Clone, Debug, PartialEq)]
pub struct EventOutcome {
    pub time: f64,
    pub tau: TaskParam,
    /// False when the event came after the release and was ignored.
    pub adapted: bool,
    pub generated: usize,
    pub retained: usize,
    pub index: usize,
    pub attach_time: f64,
    pub phase_distance: f64,
    pub transition_attempts: usize,
    /// Largest mismatch between the transition's end states and the
    /// phases it connects.
    pub boundary_residual: f64,
    pub planning_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptOutcome {
    pub schedule: Schedule,
    pub events: Vec<EventOutcome>,
    pub report: FeasibilityReport,
    /// Largest position or velocity jump across segment junctions.
    pub junction_residual: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fmt_vec(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| x.to_string())
}

impl Pipeline {
    pub fn new(cfg: ToolkitConfig) -> Self {
        Pipeline {
            cfg,
            use_tmo: true,
            use_rs: true,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        write_csv(&self.path(name), &self.cfg.hash(), header, rows)
    }

    fn checkpoint(&self, name: &str, stage: &'static str) -> Result<Checkpoint> {
        let ck = load_checkpoint(&self.path(name), stage)?;
        if ck.config_hash != self.cfg.hash() {
            log::warn!("{name} was written under a different configuration");
        }
        Ok(ck)
    }

    pub fn dataset(&self) -> Result<(Dataset, String)> {
        load_dataset(&self.path(DATASET_FILE))
    }

    fn split(&self, ds: &Dataset) -> (Vec<usize>, Vec<usize>) {
        ds.split_holdout(self.cfg.dmm.holdout_every)
    }

    /// Optimizes training motions on the seen grid.
    pub fn collect(&self) -> Result<Dataset> {
        let c = &self.cfg;
        let (ds, report) = crate::datagen::collect(&c.arm, &c.space, &c.task, &c.collect, c.stage_seed(Stage::Collect))?;
        save_dataset(&self.path(DATASET_FILE), &ds)?;
        let header: Vec<String> = [
            "r",
            "h",
            "attempts",
            "optimized",
            "stored",
            "iteration_cap",
            "non_finite",
            "retime_failed",
            "mean_eta",
            "mean_iterations",
        ]
        .map(String::from)
        .to_vec();
        let rows: Vec<Vec<String>> = report
            .yields
            .iter()
            .map(|y| {
                vec![
                    y.tau.r.to_string(),
                    y.tau.h.to_string(),
                    y.attempts.to_string(),
                    y.optimized.to_string(),
                    y.stored.to_string(),
                    y.iteration_cap.to_string(),
                    y.non_finite.to_string(),
                    y.retime_failed.to_string(),
                    y.mean_eta.to_string(),
                    y.mean_iterations.to_string(),
                ]
            })
            .collect();
        self.csv("collect_report.csv", &header, &rows)?;
        let q = quartiles(&report.attempt_seconds);
        let total: f64 = report.attempt_seconds.iter().sum();
        self.csv(
            "collect_timing.csv",
            &["attempts", "total_s", "q25_s", "median_s", "q75_s"].map(String::from),
            &[vec![
                report.attempt_seconds.len().to_string(),
                total.to_string(),
                q[0].to_string(),
                q[1].to_string(),
                q[2].to_string(),
            ]],
        )?;
        Ok(ds)
    }

    /// Trains the encoder and decoder; writes `dmm.json`.
    pub fn train_dmm(&self) -> Result<(Encoder, Decoder)> {
        let c = &self.cfg;
        let (ds, ds_hash) = self.dataset()?;
        let (train, held) = self.split(&ds);
        let start = Instant::now();
        let (enc, dec, logs) = train_dmm(&ds, &train, &c.dmm, c.stage_seed(Stage::TrainDmm))?;
        let seconds = start.elapsed().as_secs_f64();
        save_checkpoint(
            &self.path(DMM_FILE),
            &Checkpoint {
                provenance: "dmm".into(),
                config_hash: c.hash(),
                dataset_hash: ds_hash,
                duration: dec.duration,
                dof: dec.dof,
                space: None,
                nets: dmm_blocks(&enc, &dec),
            },
        )?;
        let rows: Vec<Vec<String>> = logs
            .iter()
            .map(|l| vec![l.epoch.to_string(), l.loss.to_string(), l.traj.to_string(), l.eta.to_string()])
            .collect();
        self.csv("dmm_loss.csv", &["epoch", "loss", "traj", "eta"].map(String::from), &rows)?;
        let mut rows = Vec::new();
        for (name, idx) in [("train", &train), ("heldout", &held)] {
            let m = recon_metrics(&enc, &dec, &ds, idx, &c.dmm)?;
            log::info!(
                "{name}: weighted rmse {:.4}, rmse {:.4}, eta within 0.1 s {:.1}%",
                m.weighted_rmse,
                m.rmse,
                100.0 * m.eta_within(0.1)
            );
            rows.push(vec![
                name.to_string(),
                idx.len().to_string(),
                m.weighted_rmse.to_string(),
                m.rmse.to_string(),
                m.eta_within(0.1).to_string(),
            ]);
        }
        self.csv(
            "dmm_metrics.csv",
            &["split", "entries", "weighted_rmse", "rmse", "eta_within_0.1"].map(String::from),
            &rows,
        )?;
        self.csv("dmm_timing.csv", &["train_s".to_string()], &[vec![seconds.to_string()]])?;
        Ok((enc, dec))
    }

    fn load_dmm(&self) -> Result<(Encoder, Decoder, Checkpoint)> {
        let ck = self.checkpoint(DMM_FILE, "train-dmm")?;
        let (enc, dec) = dmm_from(&ck)?;
        Ok((enc, dec, ck))
    }

    /// Fits the latent flow on the frozen encoder's codes; writes the
    /// combined `models.json`.
    pub fn train_flow(&self) -> Result<Models> {
        let c = &self.cfg;
        let (enc, dec, ck) = self.load_dmm()?;
        let (ds, ds_hash) = self.dataset()?;
        if ds_hash != ck.dataset_hash {
            log::warn!("dataset changed since train-dmm");
        }
        let (train, _) = self.split(&ds);
        let pairs = latent_pairs(&enc, &ds, &train)?;
        let start = Instant::now();
        let (flow, losses) = train_flow(&pairs, &c.space, &c.flow, c.stage_seed(Stage::TrainFlow))?;
        let seconds = start.elapsed().as_secs_f64();
        let models = Models {
            encoder: enc,
            decoder: dec,
            flow,
            flow_cfg: c.flow.clone(),
        };
        save_checkpoint(&self.path(MODELS_FILE), &self.models_checkpoint(&models, "pre-tmo", ck.dataset_hash))?;
        let rows: Vec<Vec<String>> = losses
            .iter()
            .enumerate()
            .map(|(i, l)| vec![i.to_string(), l.to_string()])
            .collect();
        self.csv("flow_loss.csv", &["epoch", "loss"].map(String::from), &rows)?;
        self.csv("flow_timing.csv", &["train_s".to_string()], &[vec![seconds.to_string()]])?;
        Ok(models)
    }

    fn models_checkpoint(&self, m: &Models, provenance: &str, dataset_hash: String) -> Checkpoint {
        let mut nets = dmm_blocks(&m.encoder, &m.decoder);
        nets.push(("flow".into(), m.flow.net.clone()));
        Checkpoint {
            provenance: provenance.into(),
            config_hash: self.cfg.hash(),
            dataset_hash,
            duration: m.decoder.duration,
            dof: m.decoder.dof,
            space: Some(m.flow.space.clone()),
            nets,
        }
    }

    /// Models before (`tmo = false`) or after fine-tuning.
    pub fn models(&self, tmo: bool) -> Result<Models> {
        let ck = if tmo {
            self.checkpoint(MODELS_TMO_FILE, "finetune")?
        } else {
            self.checkpoint(MODELS_FILE, "train-flow")?
        };
        let (encoder, decoder) = dmm_from(&ck)?;
        let space = ck
            .space
            .clone()
            .ok_or_else(|| Error::InvalidModel("checkpoint lacks a task space".into()))?;
        Ok(Models {
            encoder,
            decoder,
            flow: VelocityField::from_net(ck.net("flow")?.clone(), space)?,
            flow_cfg: self.cfg.flow.clone(),
        })
    }

    /// Fine-tunes the decoder with encoder and flow frozen; writes
    /// `models_tmo.json`. A non-finite loss stores the last finite decoder
    /// and returns an error.
    pub fn finetune(&self) -> Result<Models> {
        let c = &self.cfg;
        // Loading the dmm checkpoint first makes the missing-stage message
        // follow pipeline order.
        self.load_dmm()?;
        let models = self.models(false)?;
        let ds_hash = self.checkpoint(MODELS_FILE, "train-flow")?.dataset_hash;
        let (ds, _) = self.dataset()?;
        let (train, _) = self.split(&ds);
        let env = TmoEnv {
            arm: &c.arm,
            task: &c.task,
            space: &c.space,
            flow: &models.flow,
            flow_cfg: &c.flow,
        };
        let start = Instant::now();
        let out = finetune(
            &models.encoder,
            &models.decoder,
            &env,
            &ds,
            &train,
            &c.dmm,
            &c.tmo,
            c.stage_seed(Stage::Finetune),
        )?;
        let seconds = start.elapsed().as_secs_f64();
        let tuned = Models {
            decoder: out.decoder,
            ..models
        };
        save_checkpoint(&self.path(MODELS_TMO_FILE), &self.models_checkpoint(&tuned, "post-tmo", ds_hash))?;
        let mut header: Vec<String> = ["step", "loss", "task_error", "jerk", "penalty", "recon"].map(String::from).to_vec();
        header.extend(category_labels().iter().map(|l| format!("penalty_{l}")));
        let rows: Vec<Vec<String>> = out
            .logs
            .iter()
            .map(|l| {
                let mut row = vec![
                    l.step.to_string(),
                    l.task.loss.to_string(),
                    l.task.task_error.to_string(),
                    l.task.jerk.to_string(),
                    l.task.penalty.to_string(),
                    l.recon.to_string(),
                ];
                row.extend(fmt_vec(&l.task.category_penalty));
                row
            })
            .collect();
        self.csv("tmo_log.csv", &header, &rows)?;
        self.csv("tmo_timing.csv", &["train_s".to_string()], &[vec![seconds.to_string()]])?;
        if let Some(reason) = out.aborted {
            return Err(Error::NonFinite(format!("fine-tuning stopped at {reason}; kept the last finite decoder")));
        }
        Ok(tuned)
    }

    /// Benchmark rows on the seen and unseen grids; writes `metrics.csv`.
    pub fn evaluate(&self) -> Result<Vec<MetricsRow>> {
        let c = &self.cfg;
        self.load_dmm()?;
        let mut variants = vec![("DMMFP", self.models(false)?)];
        if self.use_tmo {
            variants.push(("DMMFP+TMO", self.models(true)?));
        }
        let (seen, unseen) = (c.seen_grid(), c.unseen_grid());
        let grids: [(&str, &[TaskParam]); 2] = [("seen", &seen), ("unseen", &unseen)];
        let seed = c.stage_seed(Stage::Evaluate);
        let mut rows = Vec::new();
        for (name, models) in &variants {
            let r = crate::planner::evaluate(
                models,
                name,
                &grids,
                &c.space,
                &c.arm,
                &c.task,
                &c.planner,
                c.eval.samples_per_task,
                seed,
            )?;
            rows.extend(r.into_iter().filter(|r| self.use_rs || !r.method.ends_with("+RS")));
        }
        let mut header: Vec<String> = ["method", "grid", "tasks", "motions", "counted", "SR", "mean_error"]
            .map(String::from)
            .to_vec();
        header.extend(TABLE_ORDER.iter().map(|c| c.label().to_string()));
        header.push("retention".into());
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.method.clone(),
                    r.grid.clone(),
                    r.tasks.to_string(),
                    r.motions.to_string(),
                    r.counted.to_string(),
                    r.success_rate.to_string(),
                    r.mean_error.to_string(),
                ];
                row.extend(TABLE_ORDER.iter().map(|&c| r.rate(c).to_string()));
                row.push(r.retention.to_string());
                row
            })
            .collect();
        self.csv("metrics.csv", &header, &body)?;
        let timing: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.method.clone(), r.grid.clone(), r.gen_seconds.to_string()])
            .collect();
        self.csv("metrics_timing.csv", &["method", "grid", "gen_s_per_task"].map(String::from), &timing)?;
        Ok(rows)
    }

    fn planning_models(&self) -> Result<Models> {
        self.load_dmm()?;
        if self.use_tmo {
            self.models(false)?;
        }
        self.models(self.use_tmo)
    }

    /// Plans one throw to `tau` and writes its profile to
    /// `plan_profile.csv`.
    pub fn plan(&self, tau: TaskParam) -> Result<(Schedule, FeasibilityReport)> {
        let c = &self.cfg;
        c.space.require(tau)?;
        let models = self.planning_models()?;
        let seed = c.stage_seed(Stage::Plan);
        let start = Instant::now();
        let (schedule, report) = if self.use_rs {
            initial_plan(&models, &c.space, tau, &c.arm, &c.task, &c.planner, seed)?
        } else {
            let codes = generate(&models, &c.space, tau, c.planner.samples, seed)?;
            let times = uniform_grid(models.decoder.duration, c.planner.grid_len);
            let reports = check_codes(&models.decoder, &codes, tau, &c.arm, &c.task, &times)?;
            let (i, rep) = reports
                .into_iter()
                .enumerate()
                .min_by(|a, b| a.1.task_error.total_cmp(&b.1.task_error))
                .ok_or_else(|| Error::Planning("no motion generated".into()))?;
            (Schedule::single(&models.decoder, codes[i].clone(), tau), rep)
        };
        let seconds = start.elapsed().as_secs_f64();
        let profile = schedule_profile(&schedule, &models.decoder, &c.arm, PROFILE_POINTS)?;
        let (header, rows) = profile_table(&profile, c.arm.dof());
        self.csv("plan_profile.csv", &header, &rows)?;
        self.csv(
            "plan_summary.csv",
            &["r", "h", "release", "feasible", "success", "distance"].map(String::from),
            &[vec![
                tau.r.to_string(),
                tau.h.to_string(),
                schedule.release.to_string(),
                report.feasible.to_string(),
                report.success.to_string(),
                report.distance.to_string(),
            ]],
        )?;
        self.csv("plan_timing.csv", &["plan_s".to_string()], &[vec![seconds.to_string()]])?;
        Ok((schedule, report))
    }

    /// Executes a scenario: an initial plan, then a replan at every event
    /// before the release.
    pub fn adapt(&self, scenario: &Scenario) -> Result<AdaptOutcome> {
        let c = &self.cfg;
        c.space.require(scenario.start)?;
        if scenario.event.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::InvalidConfig("scenario events must be in time order".into()));
        }
        let models = self.planning_models()?;
        let dec = &models.decoder;
        let seed = c.stage_seed(Stage::Adapt);
        let (mut schedule, _) = initial_plan(&models, &c.space, scenario.start, &c.arm, &c.task, &c.planner, derive_seed(seed, &[0]))?;
        let mut events = Vec::new();
        for (k, ev) in scenario.event.iter().enumerate() {
            let tau = TaskParam::new(ev.r, ev.h);
            c.space.require(tau)?;
            if ev.time < schedule.start() {
                return Err(Error::InvalidConfig(format!("event at {} s precedes the schedule", ev.time)));
            }
            if ev.time >= schedule.release {
                log::warn!("event at {} s comes after the release; ignored", ev.time);
                events.push(EventOutcome {
                    time: ev.time,
                    tau,
                    adapted: false,
                    generated: 0,
                    retained: 0,
                    index: 0,
                    attach_time: f64::NAN,
                    phase_distance: f64::NAN,
                    transition_attempts: 0,
                    boundary_residual: f64::NAN,
                    planning_seconds: 0.0,
                });
                continue;
            }
            let now = schedule.phase(dec, ev.time)?;
            let plan = adapt(
                &now,
                ev.time,
                tau,
                &models,
                &c.space,
                &c.arm,
                &c.task,
                &c.planner,
                derive_seed(seed, &[k as u64 + 1]),
            )?;
            let tr = &plan.transition;
            let jets = dec.theta_jets(&[plan.attach_time])?;
            let residual = [
                max_abs_diff(&tr.eval(0.0, 0)?, &now.0),
                max_abs_diff(&tr.eval(0.0, 1)?, &now.1),
                max_abs_diff(&tr.eval(tr.duration, 0)?, &dec.combine(&plan.code, &jets, 0, 0)),
                max_abs_diff(&tr.eval(tr.duration, 1)?, &dec.combine(&plan.code, &jets, 0, 1)),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            let mut segments: Vec<ScheduleSegment> = schedule
                .segments
                .iter()
                .filter(|s| s.start < ev.time)
                .cloned()
                .map(|mut s| {
                    s.end = s.end.min(ev.time);
                    s
                })
                .collect();
            segments.extend(plan.schedule.segments.iter().cloned());
            schedule = Schedule {
                segments,
                tau,
                release: plan.schedule.release,
            };
            events.push(EventOutcome {
                time: ev.time,
                tau,
                adapted: true,
                generated: plan.generated,
                retained: plan.retained,
                index: plan.index,
                attach_time: plan.attach_time,
                phase_distance: plan.distance,
                transition_attempts: plan.transition_attempts,
                boundary_residual: residual,
                planning_seconds: plan.planning_seconds,
            });
        }
        let report = schedule.check(dec, &c.arm, &c.task, c.planner.grid_len)?;
        let junction_residual = schedule
            .junctions(dec)?
            .iter()
            .map(|(l, r)| max_abs_diff(&l[0], &r[0]).max(max_abs_diff(&l[1], &r[1])))
            .fold(0.0, f64::max);

        let profile = schedule_profile(&schedule, dec, &c.arm, PROFILE_POINTS)?;
        let (mut header, rows) = profile_table(&profile, c.arm.dof());
        header.insert(1, "segment".into());
        let rows: Vec<Vec<String>> = rows
            .into_iter()
            .zip(&profile)
            .map(|(mut row, p)| {
                row.insert(1, segment_label(&schedule, p.t).to_string());
                row
            })
            .collect();
        self.csv("adapt_schedule.csv", &header, &rows)?;
        let header: Vec<String> = [
            "time",
            "r",
            "h",
            "adapted",
            "generated",
            "retained",
            "index",
            "attach_time",
            "phase_distance",
            "transition_attempts",
            "boundary_residual",
        ]
        .map(String::from)
        .to_vec();
        let rows: Vec<Vec<String>> = events
            .iter()
            .map(|e| {
                vec![
                    e.time.to_string(),
                    e.tau.r.to_string(),
                    e.tau.h.to_string(),
                    e.adapted.to_string(),
                    e.generated.to_string(),
                    e.retained.to_string(),
                    e.index.to_string(),
                    e.attach_time.to_string(),
                    e.phase_distance.to_string(),
                    e.transition_attempts.to_string(),
                    e.boundary_residual.to_string(),
                ]
            })
            .collect();
        self.csv("adapt_events.csv", &header, &rows)?;
        self.csv(
            "adapt_result.csv",
            &["release", "r", "h", "feasible", "success", "distance", "junction_residual"].map(String::from),
            &[vec![
                schedule.release.to_string(),
                schedule.tau.r.to_string(),
                schedule.tau.h.to_string(),
                report.feasible.to_string(),
                report.success.to_string(),
                report.distance.to_string(),
                junction_residual.to_string(),
            ]],
        )?;
        let timing: Vec<Vec<String>> = events
            .iter()
            .map(|e| vec![e.time.to_string(), e.planning_seconds.to_string()])
            .collect();
        self.csv("adapt_timing.csv", &["time", "planning_s"].map(String::from), &timing)?;
        Ok(AdaptOutcome {
            schedule,
            events,
            report,
            junction_residual,
        })
    }
}

fn segment_label(schedule: &Schedule, t: f64) -> &'static str {
    let seg = schedule
        .segments
        .iter()
        .rev()
        .find(|s| t >= s.start)
        .or(schedule.segments.first());
    match seg.map(|s| &s.segment) {
        Some(Segment::Transition(_)) => "transition",
        _ => "latent",
    }
}

fn profile_table(profile: &[ProfileRow], n: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["t".to_string()];
    for prefix in ["q", "dq", "ddq", "torque"] {
        header.extend((1..=n).map(|j| format!("{prefix}{j}")));
    }
    header.push("ee_speed".into());
    header.push("clearance".into());
    let rows = profile
        .iter()
        .map(|p| {
            let mut row = vec![p.t.to_string()];
            for v in [&p.q, &p.dq, &p.ddq, &p.torque] {
                row.extend(fmt_vec(v));
            }
            row.push(p.ee_speed.to_string());
            row.push(p.clearance.to_string());
            row
        })
        .collect();
    (header, rows)
}

fn dmm_blocks(enc: &Encoder, dec: &Decoder) -> Vec<(String, crate::learncore::Mlp)> {
    vec![
        ("encoder".into(), enc.net.clone()),
        ("psi".into(), dec.psi.clone()),
        ("theta".into(), dec.theta.clone()),
        ("eta_net".into(), dec.eta_net.clone()),
    ]
}

fn dmm_from(ck: &Checkpoint) -> Result<(Encoder, Decoder)> {
    let net = ck.net("encoder")?.clone();
    let inputs = net.input_dim() - 1;
    if ck.dof == 0 || inputs % ck.dof != 0 {
        return Err(Error::InvalidModel("encoder input does not match the joint count".into()));
    }
    let enc = Encoder {
        grid_len: inputs / ck.dof,
        net,
        duration: ck.duration,
        dof: ck.dof,
    };
    let dec = Decoder::from_parts(
        ck.net("psi")?.clone(),
        ck.net("theta")?.clone(),
        ck.net("eta_net")?.clone(),
        ck.dof,
        ck.duration,
    )?;
    Ok((enc, dec))
}
