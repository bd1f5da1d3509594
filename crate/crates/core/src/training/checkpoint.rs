//! Checkpoint container.
//!
//! Layout: one header line `HYDRODA-CHECKPOINT v<version> sha256=<hex>`
//! followed by a JSON payload. Tensors inside the payload are raw
//! little-endian buffers in base64, so a round trip is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{PreparedData, TrainConfig, TrainedModel, Trainer};
use crate::data::NormStats;
use crate::layers::Parameters;
use crate::model::{ModelConfig, SOURCE_LABEL, TARGET_LABEL};

pub const CHECKPOINT_MAGIC: &str = "HYDRODA-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint file: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch: file is truncated or corrupted")]
    Checksum,
    #[error("checkpoint payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint config hash {found} does not match the current config ({expected})")]
    ConfigMismatch { expected: String, found: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConvention {
    pub source: f64,
    pub target: f64,
}

impl Default for LabelConvention {
    fn default() -> Self {
        Self {
            source: SOURCE_LABEL,
            target: TARGET_LABEL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub label_convention: LabelConvention,
    pub config_hash: String,
    pub source_stats: NormStats,
    pub target_stats: NormStats,
    pub dynamic_names: Vec<String>,
    pub static_names: Vec<String>,
    /// Names and shapes of the current model's parameters, for inspection.
    pub parameters: Vec<ParamInfo>,
    pub trainer: Trainer,
}

#[derive(Serialize)]
struct Architecture<'a> {
    mode: &'a str,
    hidden: usize,
    latent: usize,
    discriminator_hidden: usize,
    lookback: usize,
    horizon: usize,
    scoring: crate::layers::Scoring,
    dynamic_inputs: usize,
    static_inputs: usize,
}

/// SHA-256 over the fields that determine parameter shapes and window layout.
pub fn config_hash(cfg: &TrainConfig, mc: &ModelConfig) -> String {
    let arch = Architecture {
        mode: cfg.mode.as_str(),
        hidden: mc.hidden,
        latent: mc.latent,
        discriminator_hidden: mc.discriminator_hidden,
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        scoring: mc.scoring,
        dynamic_inputs: mc.dynamic_inputs,
        static_inputs: mc.static_inputs,
    };
    let json = serde_json::to_vec(&arch).expect("architecture serializes");
    hex::encode(Sha256::digest(json))
}

fn param_infos(model: &TrainedModel) -> Vec<ParamInfo> {
    let mut out = Vec::new();
    let mut push = |name: String, t: &crate::numerics::Tensor| {
        out.push(ParamInfo {
            name,
            shape: t.shape().to_vec(),
        })
    };
    match model {
        TrainedModel::Adversarial(m) => {
            m.source.visit("source", &mut push);
            m.target.visit("target", &mut push);
            m.projection.visit("projection", &mut push);
            m.discriminator.visit("discriminator", &mut push);
        }
        TrainedModel::Seq2seqTl(g) => g.visit("seq2seq", &mut push),
        TrainedModel::LstmTl(b) => b.visit("lstm", &mut push),
    }
    out
}

impl Checkpoint {
    pub fn new(trainer: &Trainer, data: &PreparedData) -> Self {
        Self {
            label_convention: LabelConvention::default(),
            config_hash: config_hash(&trainer.config, &trainer.model_config),
            source_stats: data.source.stats.clone(),
            target_stats: data.target.stats.clone(),
            dynamic_names: data.target.dynamic_names.clone(),
            static_names: data.target.static_names.clone(),
            parameters: param_infos(&trainer.current_model()),
            trainer: trainer.clone(),
        }
    }

    /// Fails unless `cfg` describes the same architecture this checkpoint was trained with.
    pub fn verify_config(&self, cfg: &TrainConfig) -> Result<(), CheckpointError> {
        let stored = &self.trainer.model_config;
        let mc = cfg.model_config(stored.dynamic_inputs, stored.static_inputs);
        let expected = config_hash(cfg, &mc);
        if expected != self.config_hash {
            return Err(CheckpointError::ConfigMismatch {
                expected,
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let payload = serde_json::to_vec(self)?;
        let digest = hex::encode(Sha256::digest(&payload));
        let mut out = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} sha256={digest}\n").into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if !bytes.starts_with(CHECKPOINT_MAGIC.as_bytes()) {
            return Err(CheckpointError::Format("missing header".into()));
        }
        let newline = bytes.iter().position(|&b| b == b'\n').ok_or(CheckpointError::Checksum)?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))?;
        let mut parts = header.split(' ');
        parts.next();
        let version = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| CheckpointError::Format(format!("bad header '{header}'")))?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let digest = parts
            .next()
            .and_then(|d| d.strip_prefix("sha256="))
            .ok_or_else(|| CheckpointError::Format(format!("bad header '{header}'")))?;
        let payload = &bytes[newline + 1..];
        if hex::encode(Sha256::digest(payload)) != digest {
            return Err(CheckpointError::Checksum);
        }
        Ok(serde_json::from_slice(payload)?)
    }

    /// Writes through a temporary sibling and renames, so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
