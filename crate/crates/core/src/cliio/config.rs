//! The single configuration file driving every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::CollectConfig;
use crate::error::{Error, Result};
use crate::latentflow::FlowConfig;
use crate::learncore::derive_seed;
use crate::manifold::DmmConfig;
use crate::planner::PlannerConfig;
use crate::robot::PlanarArm;
use crate::task::{TaskConfig, TaskParam, TaskSpace};
use crate::tmo::TmoConfig;

/// Evaluation benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Motions generated per target.
    pub samples_per_task: usize,
    /// Seen targets; the task space's training grid when absent.
    pub seen: Option<Vec<TaskParam>>,
    /// Unseen targets; the training grid's cell centers when absent.
    pub unseen: Option<Vec<TaskParam>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples_per_task: 100,
            seen: None,
            unseen: None,
        }
    }
}

/// Pipeline stages, used to derive per-stage seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Collect,
    TrainDmm,
    TrainFlow,
    Finetune,
    Evaluate,
    Plan,
    Adapt,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::TrainDmm => "train-dmm",
            Stage::TrainFlow => "train-flow",
            Stage::Finetune => "finetune",
            Stage::Evaluate => "evaluate",
            Stage::Plan => "plan",
            Stage::Adapt => "adapt",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    /// Master seed; every stage derives its own seed from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "PlanarArm::default_three_link")]
    pub arm: PlanarArm,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub space: TaskSpace,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub dmm: DmmConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub tmo: TmoConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        ToolkitConfig {
            seed: 0,
            out_dir: default_out_dir(),
            arm: PlanarArm::default_three_link(),
            task: TaskConfig::default(),
            space: TaskSpace::default(),
            collect: CollectConfig::default(),
            dmm: DmmConfig::default(),
            flow: FlowConfig::default(),
            tmo: TmoConfig::default(),
            planner: PlannerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ToolkitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ToolkitConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.arm.validate()?;
        self.task.validate()?;
        self.space.validate()?;
        self.collect.validate()?;
        self.dmm.validate(self.collect.grid_len, self.arm.dof())?;
        self.flow.validate()?;
        self.tmo.validate()?;
        self.planner.validate()?;
        if self.eval.samples_per_task == 0 {
            return Err(Error::InvalidConfig("eval.samples_per_task must be positive".into()));
        }
        for t in self.seen_grid().iter().chain(&self.unseen_grid()) {
            self.space.require(*t)?;
        }
        Ok(())
    }

    /// Hash of the configuration with the output directory removed, so
    /// identical settings hash identically wherever they run.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        super::digest_json(&c)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, &[stage.tag()])
    }

    pub fn seen_grid(&self) -> Vec<TaskParam> {
        self.eval.seen.clone().unwrap_or_else(|| self.space.seen_grid.clone())
    }

    pub fn unseen_grid(&self) -> Vec<TaskParam> {
        self.eval.unseen.clone().unwrap_or_else(|| self.space.unseen_grid())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ToolkitConfig::default();
        let back = ToolkitConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ToolkitConfig::from_toml("").unwrap(), ToolkitConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ToolkitConfig::from_toml("sed = 3").is_err());
        assert!(ToolkitConfig::from_toml("[dmm]\nlatent = 3").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ToolkitConfig::from_toml("seed = 7\n[dmm]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.dmm.epochs, 5);
        assert_eq!(cfg.dmm.n_basis, 100);
        assert_eq!(cfg.task.g, 9.81);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ToolkitConfig::from_toml("[flow]\nds = 0.3\n").is_err());
        assert!(ToolkitConfig::from_toml("[dmm]\nlatent_dim = 1000\n").is_err());
    }

    #[test]
    fn stage_seeds_differ_and_follow_master() {
        let a = ToolkitConfig::default();
        let b = ToolkitConfig {
            seed: 1,
            ..ToolkitConfig::default()
        };
        assert_ne!(a.stage_seed(Stage::Collect), a.stage_seed(Stage::TrainDmm));
        assert_ne!(a.stage_seed(Stage::Collect), b.stage_seed(Stage::Collect));
    }

    #[test]
    fn out_dir_does_not_change_hash() {
        let a = ToolkitConfig::default();
        let b = ToolkitConfig {
            out_dir: "elsewhere".into(),
            ..ToolkitConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
    }
}
