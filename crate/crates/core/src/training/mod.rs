//! Adversarial training, transfer-learning baselines, evaluation and checkpoints.

mod adam;
mod baseline;
mod checkpoint;
mod evaluate;
mod experiment;
mod prepare;
mod schedule;
mod steps;
mod trainer;

pub use adam::{adam_step, clip_by_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use baseline::{LstmBaseline, LstmBaselineVars};
pub use checkpoint::{config_hash, Checkpoint, CheckpointError, LabelConvention, ParamInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use evaluate::{evaluate, BasinPrediction, Evaluation, Forecaster};
pub use experiment::{run_experiment, summarize_runs, train_run, ExperimentReport, MeanStd, RunSummary};
pub use prepare::{prepare_domain, prepare_domain_with_stats, BasinWindows, PreparedData, PreparedDomain};
pub use schedule::{epoch_rng, paired_schedule, shuffled_batches, Stream};
pub use steps::{adversarial_epoch, discriminator_step, supervised_epoch, AdversarialOptim, EpochStats, Supervised};
pub use trainer::{BestModel, Phase, TrainLogEntry, TrainedModel, Trainer, TrainerState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, WindowSpec};
use crate::layers::{LayerError, Scoring};
use crate::metrics::MetricsError;
use crate::model::{ModelConfig, ModelError};
use crate::numerics::NumericsError;

pub const DEFAULT_LR_FIRST_EPOCH: f64 = 0.001;
pub const DEFAULT_LR_REST: f64 = 0.0005;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{what}: expected {expected} tensors/elements, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {what} in epoch {epoch}")]
    NonFinite { epoch: usize, what: &'static str },
    #[error("no {0} windows")]
    EmptyWindows(&'static str),
    #[error("{0}")]
    Phase(String),
}

/// Learning rate for a 1-based epoch: 0.001 on the first, 0.0005 afterwards.
pub fn lr_schedule(epoch: usize) -> f64 {
    if epoch <= 1 {
        DEFAULT_LR_FIRST_EPOCH
    } else {
        DEFAULT_LR_REST
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Adversarial,
    Seq2seqTl,
    LstmTl,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Adversarial, Mode::Seq2seqTl, Mode::LstmTl];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adversarial => "adversarial",
            Mode::Seq2seqTl => "seq2seq_tl",
            Mode::LstmTl => "lstm_tl",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected adversarial, seq2seq_tl or lstm_tl)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub hidden_size: usize,
    pub latent_size: usize,
    pub discriminator_hidden: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub lr_first_epoch: f64,
    pub lr_rest: f64,
    pub epochs: usize,
    /// Source pretraining epochs of the transfer baselines; `None` uses `epochs`.
    pub pretrain_epochs: Option<usize>,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub seed: u64,
    /// Added to each basin's variance in the loss denominator.
    pub loss_epsilon: f64,
    /// Maximum gradient norm per parameter group; 0 disables clipping.
    pub clip_norm: f64,
    pub scoring: Scoring,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Adversarial,
            hidden_size: 128,
            latent_size: 64,
            discriminator_hidden: 64,
            dropout: 0.4,
            lambda: 0.1,
            lr_first_epoch: DEFAULT_LR_FIRST_EPOCH,
            lr_rest: DEFAULT_LR_REST,
            epochs: 100,
            pretrain_epochs: None,
            batch_size: 64,
            eval_batch_size: 512,
            lookback: 90,
            horizon: 1,
            stride: 1,
            seed: 0,
            loss_epsilon: 0.1,
            clip_norm: 1.0,
            scoring: Scoring::Additive,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.pretrain_epochs == Some(0) {
            return bad("pretrain_epochs must be >= 1");
        }
        if self.hidden_size == 0 || self.latent_size == 0 || self.discriminator_hidden == 0 {
            return bad("layer widths must be >= 1");
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr_first_epoch > 0.0 && self.lr_rest > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(self.loss_epsilon > 0.0) || !(self.clip_norm >= 0.0) {
            return bad("loss_epsilon must be > 0 and clip_norm >= 0");
        }
        self.window_spec().validate()?;
        Ok(())
    }

    /// Configured schedule; equals [`lr_schedule`] with the default rates.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch <= 1 {
            self.lr_first_epoch
        } else {
            self.lr_rest
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            lookback: self.lookback,
            horizon: self.horizon,
            stride: self.stride,
        }
    }

    pub fn pretrain(&self) -> usize {
        self.pretrain_epochs.unwrap_or(self.epochs)
    }

    pub fn total_epochs(&self) -> usize {
        match self.mode {
            Mode::Adversarial => self.epochs,
            Mode::Seq2seqTl | Mode::LstmTl => self.pretrain() + self.epochs,
        }
    }

    pub fn model_config(&self, dynamic_inputs: usize, static_inputs: usize) -> ModelConfig {
        ModelConfig {
            dynamic_inputs,
            static_inputs,
            hidden: self.hidden_size,
            latent: self.latent_size,
            discriminator_hidden: self.discriminator_hidden,
            dropout: self.dropout,
            scoring: self.scoring,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_values() {
        assert_eq!(lr_schedule(1), 0.001);
        assert_eq!(lr_schedule(2), 0.0005);
        assert_eq!(lr_schedule(100), 0.0005);
        let cfg = TrainConfig::default();
        for e in 1..=100 {
            assert_eq!(cfg.lr(e), lr_schedule(e));
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.hidden_size, 128);
        assert_eq!(c.dropout, 0.4);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.epochs, 100);
        assert_eq!(c.mode, Mode::Adversarial);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        for c in [
            TrainConfig { lambda: -0.1, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { lookback: 0, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("gru".parse::<Mode>().unwrap_err().contains("gru"));
    }
}
