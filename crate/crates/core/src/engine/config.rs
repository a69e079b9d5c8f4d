use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::captioner::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::teacher::TeacherConfig;
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentMode {
    /// Asks questions and learns from the improved captions.
    #[default]
    Inquisitive,
    /// Only samples captions for the teacher to score.
    Mute,
    /// No lifetime data; as many extra reference captions as give-ups would buy.
    EqualGt,
    /// References for every lifetime scene.
    AllGt,
}

impl StudentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StudentMode::Inquisitive => "inquisitive",
            StudentMode::Mute => "mute",
            StudentMode::EqualGt => "equal_gt",
            StudentMode::AllGt => "all_gt",
        }
    }
}

impl std::str::FromStr for StudentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inquisitive" | "is" => Ok(StudentMode::Inquisitive),
            "mute" | "ms" => Ok(StudentMode::Mute),
            "equal_gt" => Ok(StudentMode::EqualGt),
            "all_gt" => Ok(StudentMode::AllGt),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Who picks the ask step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AskStrategy {
    #[default]
    Learned,
    Random,
    MaxEntropy,
    ClosenessScore,
    /// Never asks.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub lr: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 32,
            lr: 3e-3,
        }
    }
}

/// One lifetime experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: StudentMode,
    pub seed: u64,
    pub world: WorldConfig,
    /// Load this corpus directory instead of generating `world`.
    pub corpus_dir: Option<PathBuf>,
    /// Scenes held out for evaluation (the highest ids).
    pub test_scenes: usize,
    pub warmup_fraction: f64,
    pub chunks: usize,
    /// Percentage of chunk scenes whose collected captions are kept.
    pub keep_percent: u32,
    /// Captions kept per scene, and references bought per give-up.
    pub m: usize,
    /// Questions per caption.
    pub questions: usize,
    pub passes_inquisitive: usize,
    pub passes_mute: usize,
    /// Sampling temperature of the inquisitive sampled branch.
    pub jitter_temperature: f64,
    pub mute_temperature: f64,
    pub ask_strategy: AskStrategy,
    pub teacher: TeacherConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub policy: PolicyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: StudentMode::Inquisitive,
            seed: 1,
            world: WorldConfig::default(),
            corpus_dir: None,
            test_scenes: 100,
            warmup_fraction: 0.1,
            chunks: 3,
            keep_percent: 70,
            m: 2,
            questions: 1,
            passes_inquisitive: 8,
            passes_mute: 4,
            jitter_temperature: 0.05,
            mute_temperature: 1.0,
            ask_strategy: AskStrategy::Learned,
            teacher: TeacherConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                epochs: 30,
                lr: 1e-2,
                ..TrainConfig::default()
            },
            policy: PolicyConfig::default(),
        }
    }
}

pub const KEEP_PERCENT_GRID: [u32; 5] = [60, 70, 80, 90, 100];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !KEEP_PERCENT_GRID.contains(&self.keep_percent) {
            return Err(Error::Config(format!(
                "keep_percent must be one of {KEEP_PERCENT_GRID:?}"
            )));
        }
        if self.m == 0 || self.chunks == 0 || self.passes_inquisitive == 0 || self.passes_mute == 0
        {
            return Err(Error::Config(
                "m, chunks and passes must be positive".into(),
            ));
        }
        if !(self.jitter_temperature > 0.0 && self.mute_temperature > 0.0) {
            return Err(Error::Config("temperatures must be positive".into()));
        }
        if !(self.policy.lr >= 0.0 && self.policy.hidden > 0) {
            return Err(Error::Config(
                "policy lr must be nonnegative and hidden positive".into(),
            ));
        }
        if self.model.hidden == 0 || self.model.pos_embed == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        self.teacher.validate()?;
        self.train.validate()?;
        if self.corpus_dir.is_none() {
            self.world.validate()?;
            if self.test_scenes >= self.world.num_scenes {
                return Err(Error::Config("test split leaves no training scenes".into()));
            }
        }
        Ok(())
    }

    pub fn passes(&self) -> usize {
        match self.mode {
            StudentMode::Mute => self.passes_mute,
            _ => self.passes_inquisitive,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
