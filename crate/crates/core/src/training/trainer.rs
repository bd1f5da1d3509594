use serde::{Deserialize, Serialize};

use super::schedule::{epoch_rng, shuffled_batches, Stream};
use super::steps::{adversarial_epoch, supervised_epoch, AdversarialOptim, EpochStats};
use super::{evaluate, AdamState, Forecaster, LstmBaseline, Mode, PreparedData, TrainConfig, TrainError};
use crate::model::{init_rng, DomainModels, GeneratorNetwork, InitStream, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adversarial,
    Pretrain,
    Finetune,
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub phase: Phase,
    pub phase_epoch: usize,
    pub lr: f64,
    pub loss_source: Option<f64>,
    pub loss_target: Option<f64>,
    pub loss_discriminator: Option<f64>,
    pub discriminator_accuracy: Option<f64>,
    pub discriminator_loss_initial: Option<f64>,
    /// Median NSE of the target generator on the target validation split.
    pub validation_nse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Adversarial(DomainModels),
    Seq2seqTl(GeneratorNetwork),
    LstmTl(LstmBaseline),
}

impl TrainedModel {
    /// The network that forecasts the target domain.
    pub fn target_forecaster(&self) -> &dyn Forecaster {
        match self {
            TrainedModel::Adversarial(m) => &m.target,
            TrainedModel::Seq2seqTl(g) => g,
            TrainedModel::LstmTl(b) => b,
        }
    }

    pub fn source_forecaster(&self) -> &dyn Forecaster {
        match self {
            TrainedModel::Adversarial(m) => &m.source,
            other => other.target_forecaster(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainerState {
    Adversarial { models: DomainModels, optim: AdversarialOptim },
    Seq2seqTl { model: GeneratorNetwork, optim: AdamState },
    LstmTl { model: LstmBaseline, optim: AdamState },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub epoch: usize,
    pub validation_nse: f64,
    pub model: TrainedModel,
}

/// Resumable training run: everything needed to continue lives in this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model_config: ModelConfig,
    pub state: TrainerState,
    pub log: Vec<TrainLogEntry>,
    pub best: Option<BestModel>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model_config: ModelConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let seed = config.seed;
        let state = match config.mode {
            Mode::Adversarial => {
                let models = DomainModels::new(&model_config, seed)?;
                TrainerState::Adversarial {
                    optim: AdversarialOptim::new(&models),
                    models,
                }
            }
            Mode::Seq2seqTl => {
                let model = GeneratorNetwork::new(&mut init_rng(seed, InitStream::SourceGenerator), &model_config)?;
                TrainerState::Seq2seqTl {
                    optim: AdamState::new(&model),
                    model,
                }
            }
            Mode::LstmTl => {
                let model = LstmBaseline::new(
                    &mut init_rng(seed, InitStream::Baseline),
                    model_config.input_width(),
                    config.hidden_size,
                    config.horizon,
                    config.dropout,
                )?;
                TrainerState::LstmTl {
                    optim: AdamState::new(&model),
                    model,
                }
            }
        };
        Ok(Self {
            config,
            model_config,
            state,
            log: Vec::new(),
            best: None,
        })
    }

    pub fn completed_epochs(&self) -> usize {
        self.log.len()
    }

    pub fn is_finished(&self) -> bool {
        self.completed_epochs() >= self.config.total_epochs()
    }

    /// Phase and 1-based epoch within the phase for a global 1-based epoch.
    pub fn phase_of(&self, epoch: usize) -> (Phase, usize) {
        match self.config.mode {
            Mode::Adversarial => (Phase::Adversarial, epoch),
            _ => {
                let p = self.config.pretrain();
                if epoch <= p {
                    (Phase::Pretrain, epoch)
                } else {
                    (Phase::Finetune, epoch - p)
                }
            }
        }
    }

    pub fn current_model(&self) -> TrainedModel {
        match &self.state {
            TrainerState::Adversarial { models, .. } => TrainedModel::Adversarial(models.clone()),
            TrainerState::Seq2seqTl { model, .. } => TrainedModel::Seq2seqTl(model.clone()),
            TrainerState::LstmTl { model, .. } => TrainedModel::LstmTl(model.clone()),
        }
    }

    /// Best-validation model when one was recorded, otherwise the current one.
    pub fn final_model(&self) -> TrainedModel {
        self.best.as_ref().map_or_else(|| self.current_model(), |b| b.model.clone())
    }

    fn check_data(&self, data: &PreparedData) -> Result<(), TrainError> {
        let mc = &self.model_config;
        for (name, d) in [("source", &data.source), ("target", &data.target)] {
            if d.n_dynamic() != mc.dynamic_inputs || d.n_static() != mc.static_inputs {
                return Err(TrainError::Config(format!(
                    "{name} data has {}+{} features, model expects {}+{}",
                    d.n_dynamic(),
                    d.n_static(),
                    mc.dynamic_inputs,
                    mc.static_inputs
                )));
            }
        }
        Ok(())
    }

    fn supervised_phase(&mut self, data: &PreparedData, phase: Phase, phase_epoch: usize) -> Result<EpochStats, TrainError> {
        let (windows, shuffle, dropout) = match phase {
            Phase::Pretrain => (&data.source.train, Stream::SourceShuffle, Stream::SourceDropout),
            _ => (&data.target.train, Stream::TargetShuffle, Stream::TargetDropout),
        };
        if windows.is_empty() {
            return Err(TrainError::EmptyWindows(if phase == Phase::Pretrain { "source" } else { "target" }));
        }
        let cfg = &self.config;
        let batches = shuffled_batches(windows.len(), cfg.batch_size, &mut epoch_rng(cfg.seed, phase_epoch, shuffle));
        let mut rng = epoch_rng(cfg.seed, phase_epoch, dropout);
        let lr = cfg.lr(phase_epoch);
        let n_dyn = self.model_config.dynamic_inputs;
        let loss = match &mut self.state {
            TrainerState::Seq2seqTl { model, optim } => {
                if phase == Phase::Finetune && phase_epoch == 1 {
                    *optim = AdamState::new(model);
                }
                supervised_epoch(model, optim, windows, &batches, n_dyn, cfg, lr, &mut rng, phase_epoch)?
            }
            TrainerState::LstmTl { model, optim } => {
                if phase == Phase::Finetune && phase_epoch == 1 {
                    *optim = AdamState::new(model);
                }
                supervised_epoch(model, optim, windows, &batches, n_dyn, cfg, lr, &mut rng, phase_epoch)?
            }
            TrainerState::Adversarial { .. } => {
                return Err(TrainError::Phase("adversarial trainer has no transfer phases".into()))
            }
        };
        let mut stats = EpochStats {
            steps: batches.len(),
            ..EpochStats::default()
        };
        if phase == Phase::Pretrain {
            stats.loss_source = Some(loss);
        } else {
            stats.loss_target = Some(loss);
        }
        Ok(stats)
    }

    /// Runs the next epoch of the transfer baseline's source phase.
    pub fn pretrain_epoch(&mut self, data: &PreparedData) -> Result<TrainLogEntry, TrainError> {
        match self.phase_of(self.completed_epochs() + 1) {
            (Phase::Pretrain, _) if !self.is_finished() => self.train_epoch(data),
            _ => Err(TrainError::Phase("pretraining is already complete".into())),
        }
    }

    /// Runs the next fine-tuning epoch; fails until pretraining has completed.
    pub fn finetune_epoch(&mut self, data: &PreparedData) -> Result<TrainLogEntry, TrainError> {
        match self.phase_of(self.completed_epochs() + 1) {
            (Phase::Finetune, _) if !self.is_finished() => self.train_epoch(data),
            (Phase::Pretrain, _) => Err(TrainError::Phase(format!(
                "fine-tuning requested after {} of {} pretraining epochs",
                self.completed_epochs(),
                self.config.pretrain()
            ))),
            _ => Err(TrainError::Phase("no fine-tuning phase remains".into())),
        }
    }

    pub fn train_epoch(&mut self, data: &PreparedData) -> Result<TrainLogEntry, TrainError> {
        if self.is_finished() {
            return Err(TrainError::Phase("all epochs are complete".into()));
        }
        self.check_data(data)?;
        let epoch = self.completed_epochs() + 1;
        let (phase, phase_epoch) = self.phase_of(epoch);
        let stats = match (&mut self.state, phase) {
            (TrainerState::Adversarial { models, optim }, _) => adversarial_epoch(
                models,
                optim,
                &data.source.train,
                &data.target.train,
                self.model_config.dynamic_inputs,
                &self.config,
                epoch,
            )?,
            _ => self.supervised_phase(data, phase, phase_epoch)?,
        };

        let validation_nse = if phase == Phase::Pretrain || data.target.validation.is_empty() {
            None
        } else {
            self.validation_nse(data)?
        };
        let entry = TrainLogEntry {
            epoch,
            phase,
            phase_epoch,
            lr: self.config.lr(phase_epoch),
            loss_source: stats.loss_source,
            loss_target: stats.loss_target,
            loss_discriminator: stats.loss_discriminator,
            discriminator_accuracy: stats.discriminator_accuracy,
            discriminator_loss_initial: stats.discriminator_loss_initial,
            validation_nse,
        };
        if let Some(v) = validation_nse.filter(|v| v.is_finite()) {
            if self.best.as_ref().is_none_or(|b| v > b.validation_nse) {
                self.best = Some(BestModel {
                    epoch,
                    validation_nse: v,
                    model: self.current_model(),
                });
            }
        }
        self.log.push(entry.clone());
        Ok(entry)
    }

    fn validation_nse(&self, data: &PreparedData) -> Result<Option<f64>, TrainError> {
        if data.target.validation.iter().all(|b| b.windows.is_empty()) {
            return Ok(None);
        }
        let model = self.current_model();
        let e = evaluate(
            model.target_forecaster(),
            &data.target.validation,
            &data.target.stats,
            self.model_config.dynamic_inputs,
            self.config.eval_batch_size,
            Some(self.config.seed),
        )?;
        Ok(e.report.median.nse)
    }

    /// Trains to completion, calling `on_epoch` after every epoch.
    pub fn run<F>(&mut self, data: &PreparedData, mut on_epoch: F) -> Result<(), TrainError>
    where
        F: FnMut(&Trainer, &TrainLogEntry) -> Result<(), TrainError>,
    {
        while !self.is_finished() {
            let entry = self.train_epoch(data)?;
            on_epoch(self, &entry)?;
        }
        Ok(())
    }
}
