use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SgdParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Finetune,
    Featstar,
    Rad,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Finetune, Strategy::Featstar, Strategy::Rad];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Finetune => "finetune",
            Strategy::Featstar => "featstar",
            Strategy::Rad => "rad",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "finetune" => Ok(Strategy::Finetune),
            "featstar" | "feat*" => Ok(Strategy::Featstar),
            "rad" => Ok(Strategy::Rad),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected finetune, featstar or rad)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Argmax over the unrotated logits of all heads.
    Heads,
    /// Nearest class mean over stored prototypes.
    Nme,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heads" => Ok(EvalMode::Heads),
            "nme" => Ok(EvalMode::Nme),
            other => Err(Error::Config(format!("unknown eval mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillMode {
    /// KL between temperature-softmaxed feature vectors.
    Kl,
    /// Mean squared feature difference.
    L2,
}

impl FromStr for DistillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(DistillMode::Kl),
            "l2" => Ok(DistillMode::L2),
            other => Err(Error::Config(format!("unknown distill mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the classification loss.
    pub alpha: f64,
    /// Weight of the distillation loss.
    pub beta: f64,
    /// Softmax temperature applied to features before the KL term.
    pub tau: f64,
    pub epochs_initial: usize,
    pub epochs_incremental: usize,
    pub lr_initial: f64,
    pub lr_incremental: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub eval_mode: EvalMode,
    pub distill_mode: DistillMode,
    /// Add the three rotated copies of every training image, with their
    /// own labels, to RAD's and Feat*'s initial task and to RAD's
    /// incremental tasks. Finetune never uses rotations.
    pub rotation: bool,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            tau: 0.2,
            epochs_initial: 50,
            epochs_incremental: 100,
            lr_initial: 0.1,
            lr_incremental: 0.001,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 5e-4,
            eval_mode: EvalMode::Heads,
            distill_mode: DistillMode::Kl,
            rotation: true,
            hidden_dims: vec![128],
            feature_dim: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(self.alpha >= 0.0 && self.alpha.is_finite(), format!("alpha must be >= 0, got {}", self.alpha))?;
        check(self.beta >= 0.0 && self.beta.is_finite(), format!("beta must be >= 0, got {}", self.beta))?;
        check(self.tau > 0.0 && self.tau.is_finite(), format!("tau must be > 0, got {}", self.tau))?;
        check(self.epochs_initial >= 1, "epochs_initial must be >= 1".into())?;
        check(self.epochs_incremental >= 1, "epochs_incremental must be >= 1".into())?;
        check(self.batch_size >= 1, "batch_size must be >= 1".into())?;
        check(self.lr_initial >= 0.0 && self.lr_incremental >= 0.0, "learning rates must be >= 0".into())?;
        check((0.0..1.0).contains(&self.momentum), format!("momentum must be in [0, 1), got {}", self.momentum))?;
        check(self.weight_decay >= 0.0, "weight_decay must be >= 0".into())?;
        check(self.feature_dim >= 1 && !self.hidden_dims.contains(&0), "layer widths must be positive".into())
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.feature_dim))
            .collect()
    }

    pub fn sgd(&self, lr: f64) -> SgdParams {
        SgdParams {
            lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// Losses of one epoch, averaged over its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub task: usize,
    pub epoch: usize,
    pub lr: f64,
    pub l_c: f64,
    /// Absent when the strategy has no distillation term.
    pub l_distil: Option<f64>,
    pub l_all: f64,
    /// Whether `l_distil` contributed to the update (false when beta = 0).
    pub distil_optimized: bool,
    /// False when the objective was identically zero and no step was taken.
    pub updated: bool,
}
