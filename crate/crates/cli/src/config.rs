//! File-backed experiment configuration.
//!
//! The TOML file has a handful of top-level keys plus one table per concern.
//! Every key is optional; missing keys take the defaults of the core crate,
//! and unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use hydroda::data::{CsvSchema, SplitRanges, SynthConfig, SYNTH_DYNAMIC};
use hydroda::layers::Scoring;
use hydroda::training::{Mode, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Sole source of randomness for synthesis, initialization, shuffling and dropout.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub splits: SplitRanges,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source_dir: PathBuf,
    pub target_dir: PathBuf,
    pub date_column: String,
    pub dynamic_columns: Vec<String>,
    pub streamflow_column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_size: usize,
    pub latent_size: usize,
    pub discriminator_hidden: usize,
    pub dropout: f64,
    pub lookback: usize,
    pub horizon: usize,
    pub scoring: Scoring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub mode: Mode,
    pub lambda: f64,
    pub lr_first_epoch: f64,
    pub lr_rest: f64,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_epochs: Option<usize>,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub stride: usize,
    pub loss_epsilon: f64,
    pub clip_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_source_basins: usize,
    pub n_target_basins: usize,
    pub start_date: NaiveDate,
    pub length_days: usize,
    pub shift_strength: f64,
    pub missing_rate: f64,
    pub noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: TrainConfig::default().seed,
            out_dir: PathBuf::from("runs/experiment"),
            data: DataConfig::default(),
            splits: SplitRanges::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source_dir: PathBuf::from("data/source"),
            target_dir: PathBuf::from("data/target"),
            date_column: "date".into(),
            dynamic_columns: SYNTH_DYNAMIC.iter().map(|s| s.to_string()).collect(),
            streamflow_column: "streamflow".into(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_size: t.hidden_size,
            latent_size: t.latent_size,
            discriminator_hidden: t.discriminator_hidden,
            dropout: t.dropout,
            lookback: t.lookback,
            horizon: t.horizon,
            scoring: t.scoring,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode,
            lambda: t.lambda,
            lr_first_epoch: t.lr_first_epoch,
            lr_rest: t.lr_rest,
            epochs: t.epochs,
            pretrain_epochs: t.pretrain_epochs,
            batch_size: t.batch_size,
            eval_batch_size: t.eval_batch_size,
            stride: t.stride,
            loss_epsilon: t.loss_epsilon,
            clip_norm: t.clip_norm,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_source_basins: s.n_source_basins,
            n_target_basins: s.n_target_basins,
            start_date: s.start_date,
            length_days: s.length_days,
            shift_strength: s.shift_strength,
            missing_rate: s.missing_rate,
            noise: s.noise,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.into(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|message| CliError::Config {
            path: path.into(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes to TOML")
    }

    pub fn train_config(&self) -> TrainConfig {
        let (m, t) = (&self.model, &self.training);
        TrainConfig {
            mode: t.mode,
            hidden_size: m.hidden_size,
            latent_size: m.latent_size,
            discriminator_hidden: m.discriminator_hidden,
            dropout: m.dropout,
            lambda: t.lambda,
            lr_first_epoch: t.lr_first_epoch,
            lr_rest: t.lr_rest,
            epochs: t.epochs,
            pretrain_epochs: t.pretrain_epochs,
            batch_size: t.batch_size,
            eval_batch_size: t.eval_batch_size,
            lookback: m.lookback,
            horizon: m.horizon,
            stride: t.stride,
            seed: self.seed,
            loss_epsilon: t.loss_epsilon,
            clip_norm: t.clip_norm,
            scoring: m.scoring,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_source_basins: s.n_source_basins,
            n_target_basins: s.n_target_basins,
            start_date: s.start_date,
            length_days: s.length_days,
            shift_strength: s.shift_strength,
            missing_rate: s.missing_rate,
            noise: s.noise,
            seed: self.seed,
        }
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            date_column: self.data.date_column.clone(),
            dynamic_columns: self.data.dynamic_columns.clone(),
            streamflow_column: self.data.streamflow_column.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("invalid configuration: {e}"));
        self.train_config().validate().map_err(|e| bad(&e))?;
        self.splits.validate().map_err(|e| bad(&e))?;
        if self.data.dynamic_columns.is_empty() {
            return Err(CliError::Usage("invalid configuration: data.dynamic_columns is empty".into()));
        }
        Ok(())
    }

    /// Writes the resolved configuration next to the outputs it produced.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("config.resolved.toml");
        fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_core_crate() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.synth_config(), SynthConfig { seed: 0, ..SynthConfig::default() });
        assert_eq!(cfg.schema(), CsvSchema::new(SYNTH_DYNAMIC.iter().map(|s| s.to_string()).collect()));
    }

    #[test]
    fn partial_file_fills_in_defaults() {
        let cfg = ExperimentConfig::parse(
            "seed = 7\n[training]\nmode = \"seq2seq_tl\"\nepochs = 3\n[model]\nhidden_size = 16\n",
        )
        .unwrap();
        let t = cfg.train_config();
        assert_eq!((t.seed, t.mode, t.epochs, t.hidden_size), (7, Mode::Seq2seqTl, 3, 16));
        assert_eq!(t.lambda, 0.1);
        assert_eq!(cfg.synth_config().seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "sed = 1\n",
            "[training]\nepoch = 3\n",
            "[model]\nhidden = 3\n",
            "[splits.train]\nstart = \"1999-10-01\"\nend = \"2000-09-30\"\nmiddle = 1\n",
            "[extra]\n",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert!(err.contains("unknown"), "{text}: {err}");
        }
        assert!(ExperimentConfig::parse("[training]\nmode = \"gan\"\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.training.pretrain_epochs = Some(4);
        cfg.model.dropout = 0.25;
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let plain = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&plain.to_toml()).unwrap(), plain);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.dropout = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.data.dynamic_columns.clear();
        assert!(cfg.validate().is_err());
    }
}
