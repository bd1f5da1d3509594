use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::schedule::{epoch_rng, paired_schedule, Stream};
use super::{adam_step, clip_by_norm, AdamState, LstmBaseline, TrainConfig, TrainError};
use crate::data::WindowSample;
use crate::layers::Parameters;
use crate::metrics::{bce_with_logits, logit_accuracy, nse_loss};
use crate::model::{
    discriminator_logits, pair_features, DiscriminatorNetwork, DomainModels, GeneratorNetwork, PairRngs, WindowBatch,
};
use crate::numerics::{Gradients, Tape, Tensor, Var};

/// A model trained on the variance-weighted squared error alone.
pub trait Supervised: Parameters {
    /// Records a training-mode pass and returns the loss with the bound
    /// parameter handles in [`Parameters::visit`] order.
    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        batch: &WindowBatch,
        cfg: &TrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, Vec<Var>), TrainError>;
}

impl Supervised for GeneratorNetwork {
    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        batch: &WindowBatch,
        cfg: &TrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, Vec<Var>), TrainError> {
        let gv = self.bind(tape, true);
        let f = gv.forward(tape, batch, true, Some(rng))?;
        let loss = nse_loss(tape, f.predictions, &batch.targets, &batch.mask, &batch.variance, cfg.loss_epsilon)?;
        let mut vars = Vec::new();
        gv.collect(&mut vars);
        Ok((loss, vars))
    }
}

impl Supervised for LstmBaseline {
    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        batch: &WindowBatch,
        cfg: &TrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, Vec<Var>), TrainError> {
        let v = self.bind(tape, true);
        let y = v.forward(tape, batch, Some(rng))?;
        let loss = nse_loss(tape, y, &batch.targets, &batch.mask, &batch.variance, cfg.loss_epsilon)?;
        let mut vars = Vec::new();
        v.collect(&mut vars);
        Ok((loss, vars))
    }
}

fn group_grads(grads: &Gradients, vars: &[Var], params: &dyn Parameters) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(vars.len());
    let mut i = 0;
    params.visit("", &mut |_, t| {
        out.push(grads.get_or_zeros(vars[i], t.shape()));
        i += 1;
    });
    out
}

fn update(
    params: &mut dyn Parameters,
    grads: &Gradients,
    vars: &[Var],
    opt: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(), TrainError> {
    let mut g = group_grads(grads, vars, params);
    clip_by_norm(&mut g, cfg.clip_norm);
    adam_step(params, &g, opt, lr)
}

pub(crate) fn make_batch(windows: &[WindowSample], idx: &[usize], n_dynamic: usize) -> Result<WindowBatch, TrainError> {
    let refs: Vec<&WindowSample> = idx.iter().map(|&i| &windows[i]).collect();
    Ok(WindowBatch::from_samples(&refs, n_dynamic)?)
}

fn finite(v: f64, epoch: usize, what: &'static str) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFinite { epoch, what })
    }
}

/// One pass over `batches` (index lists into `windows`); returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn supervised_epoch<M: Supervised>(
    model: &mut M,
    opt: &mut AdamState,
    windows: &[WindowSample],
    batches: &[Vec<usize>],
    n_dynamic: usize,
    cfg: &TrainConfig,
    lr: f64,
    dropout_rng: &mut dyn RngCore,
    epoch: usize,
) -> Result<f64, TrainError> {
    if windows.is_empty() || batches.is_empty() {
        return Err(TrainError::EmptyWindows("training"));
    }
    let mut total = 0.0;
    for idx in batches {
        let batch = make_batch(windows, idx, n_dynamic)?;
        let mut tape = Tape::new();
        let (loss, vars) = model.loss_on_tape(&mut tape, &batch, cfg, dropout_rng)?;
        total += finite(tape.value(loss).data()[0], epoch, "loss")?;
        let grads = tape.backward(loss)?;
        update(model, &grads, &vars, opt, cfg, lr)?;
    }
    Ok(total / batches.len() as f64)
}

/// Minimizes the domain BCE of `disc` on fixed features.
/// Returns the loss and accuracy measured before the update.
pub fn discriminator_step(
    disc: &mut DiscriminatorNetwork,
    opt: &mut AdamState,
    features: &Tensor,
    labels: &[f64],
    lr: f64,
    clip_norm: f64,
) -> Result<(f64, f64), TrainError> {
    let mut tape = Tape::new();
    let dv = disc.bind(&mut tape, true);
    let x = tape.constant(features.clone());
    let z = discriminator_logits(&mut tape, &dv, x)?;
    let loss = bce_with_logits(&mut tape, z, labels)?;
    let acc = logit_accuracy(tape.value(z).data(), labels);
    let value = tape.value(loss).data()[0];
    let mut vars = Vec::new();
    dv.collect(&mut vars);
    let grads = tape.backward(loss)?;
    let mut g = group_grads(&grads, &vars, disc);
    clip_by_norm(&mut g, clip_norm);
    adam_step(disc, &g, opt, lr)?;
    Ok((value, acc))
}

/// Separate ADAM state per parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialOptim {
    pub source: AdamState,
    pub target: AdamState,
    pub projection: AdamState,
    pub discriminator: AdamState,
}

impl AdversarialOptim {
    pub fn new(m: &DomainModels) -> Self {
        Self {
            source: AdamState::new(&m.source),
            target: AdamState::new(&m.target),
            projection: AdamState::new(&m.projection),
            discriminator: AdamState::new(&m.discriminator),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss_source: Option<f64>,
    pub loss_target: Option<f64>,
    pub loss_discriminator: Option<f64>,
    pub discriminator_accuracy: Option<f64>,
    /// Discriminator loss on the first batch, before any update in the epoch.
    pub discriminator_loss_initial: Option<f64>,
    pub steps: usize,
}

/// One adversarial epoch over paired source/target batches.
///
/// Each step first updates θ_D on detached projected contexts, then
/// updates θ_S, θ_T and the projection on `L_GS + L_GT − λ·L_D` with the
/// freshly updated discriminator held fixed.
pub fn adversarial_epoch(
    models: &mut DomainModels,
    opt: &mut AdversarialOptim,
    source: &[WindowSample],
    target: &[WindowSample],
    n_dynamic: usize,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    if source.is_empty() {
        return Err(TrainError::EmptyWindows("source"));
    }
    if target.is_empty() {
        return Err(TrainError::EmptyWindows("target"));
    }
    let lr = cfg.lr(epoch);
    let schedule = paired_schedule(source.len(), target.len(), cfg.batch_size, cfg.seed, epoch);
    let mut rng_s = epoch_rng(cfg.seed, epoch, Stream::SourceDropout);
    let mut rng_t = epoch_rng(cfg.seed, epoch, Stream::TargetDropout);
    let (mut ls_sum, mut lt_sum, mut ld_sum, mut acc_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut initial = None;

    for (si, ti) in &schedule {
        let sb = make_batch(source, si, n_dynamic)?;
        let tb = make_batch(target, ti, n_dynamic)?;
        let mut tape = Tape::new();
        let gs = models.source.bind(&mut tape, true);
        let gt = models.target.bind(&mut tape, true);
        let pv = models.projection.bind(&mut tape, true);
        let rngs = PairRngs {
            source: Some(&mut rng_s),
            target: Some(&mut rng_t),
        };
        let pair = pair_features(&mut tape, &gs, &gt, &pv, &sb, &tb, true, rngs)?;
        let ls = nse_loss(&mut tape, pair.source.predictions, &sb.targets, &sb.mask, &sb.variance, cfg.loss_epsilon)?;
        let lt = nse_loss(&mut tape, pair.target.predictions, &tb.targets, &tb.mask, &tb.variance, cfg.loss_epsilon)?;
        ls_sum += finite(tape.value(ls).data()[0], epoch, "source loss")?;
        lt_sum += finite(tape.value(lt).data()[0], epoch, "target loss")?;

        let features = tape.value(pair.features).clone();
        let (ld, acc) = discriminator_step(
            &mut models.discriminator,
            &mut opt.discriminator,
            &features,
            &pair.labels,
            lr,
            cfg.clip_norm,
        )?;
        ld_sum += finite(ld, epoch, "discriminator loss")?;
        acc_sum += acc;
        initial.get_or_insert(ld);

        let mut total = tape.add(ls, lt)?;
        if cfg.lambda > 0.0 {
            let dv = models.discriminator.bind(&mut tape, false);
            let z = discriminator_logits(&mut tape, &dv, pair.features)?;
            let ld = bce_with_logits(&mut tape, z, &pair.labels)?;
            let adv = tape.scale(ld, -cfg.lambda);
            total = tape.add(total, adv)?;
        }
        let grads = tape.backward(total)?;
        let (mut vs, mut vt, mut vp) = (Vec::new(), Vec::new(), Vec::new());
        gs.collect(&mut vs);
        gt.collect(&mut vt);
        pv.collect(&mut vp);
        update(&mut models.source, &grads, &vs, &mut opt.source, cfg, lr)?;
        update(&mut models.target, &grads, &vt, &mut opt.target, cfg, lr)?;
        update(&mut models.projection, &grads, &vp, &mut opt.projection, cfg, lr)?;
    }
    let n = schedule.len() as f64;
    Ok(EpochStats {
        loss_source: Some(ls_sum / n),
        loss_target: Some(lt_sum / n),
        loss_discriminator: Some(ld_sum / n),
        discriminator_accuracy: Some(acc_sum / n),
        discriminator_loss_initial: initial,
        steps: schedule.len(),
    })
}
