//! Private sequence generators, the shared latent projection and the domain discriminator.
//!
//! Every generator embeds `concat(dynamic_n, static)` with an MLP, encodes
//! the embedded history with an LSTM, and decodes `τ` steps with an
//! attention-fed LSTM whose input is `concat(previous flow, context)`.
//! Batches are laid out time-major: rows `n·B .. (n+1)·B` of the input
//! matrix hold step `n` of every window.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WindowSample;
use crate::layers::{
    dropout_on_tape, lstm_cell_step, lstm_sequence, Activation, AttentionParams, AttentionVars, DropoutSpec,
    LayerError, Linear, LinearVars, LstmParams, LstmState, LstmVars, MlpParams, MlpVars, Parameters, Scoring,
};
use crate::numerics::{sigmoid, NumericsError, Tape, Tensor, Var};

/// Label assigned to source-domain features; target features get `1 − SOURCE_LABEL`.
pub const SOURCE_LABEL: f64 = 1.0;
pub const TARGET_LABEL: f64 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("teacher forcing needs {expected} values per window, got {got}")]
    Teacher { expected: usize, got: usize },
    #[error("{what}: {reason}")]
    Shape { what: &'static str, reason: String },
}

/// Architecture sizes shared by both generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dynamic_inputs: usize,
    pub static_inputs: usize,
    pub hidden: usize,
    pub latent: usize,
    pub discriminator_hidden: usize,
    pub dropout: f64,
    pub scoring: Scoring,
}

impl ModelConfig {
    pub fn input_width(&self) -> usize {
        self.dynamic_inputs + self.static_inputs
    }
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// A stack of windows prepared for one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub size: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// `(N·B) × (d_dyn + d_stat)`, time-major.
    pub inputs: Tensor,
    /// `B × 1`
    pub last_observed: Tensor,
    /// Teacher-forced decoder inputs, `B × τ`.
    pub teacher: Tensor,
    /// `B × τ`; 0 where masked.
    pub targets: Tensor,
    /// `B × τ`; 1 = observed.
    pub mask: Tensor,
    pub variance: Vec<f64>,
}

impl WindowBatch {
    pub fn from_samples(samples: &[&WindowSample], dynamic_inputs: usize) -> Result<Self, ModelError> {
        let first = samples.first().ok_or(ModelError::EmptyBatch("window"))?;
        let b = samples.len();
        let n = first.lookback(dynamic_inputs);
        let tau = first.horizon();
        let d_stat = first.static_attrs.len();
        if n == 0 || first.history.len() != n * dynamic_inputs {
            return Err(ModelError::Shape {
                what: "window history",
                reason: format!("{} values for {dynamic_inputs} features", first.history.len()),
            });
        }
        if tau == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        let width = dynamic_inputs + d_stat;
        let mut inputs = vec![0.0; n * b * width];
        let mut last = Vec::with_capacity(b);
        let mut teacher = Vec::with_capacity(b * tau);
        let mut targets = Vec::with_capacity(b * tau);
        let mut mask = Vec::with_capacity(b * tau);
        let mut variance = Vec::with_capacity(b);
        for (j, s) in samples.iter().enumerate() {
            if s.history.len() != n * dynamic_inputs || s.horizon() != tau || s.static_attrs.len() != d_stat {
                return Err(ModelError::Shape {
                    what: "window batch",
                    reason: format!("window {j} ({}) differs in shape from the first", s.basin_id),
                });
            }
            for step in 0..n {
                let row = &mut inputs[(step * b + j) * width..(step * b + j + 1) * width];
                row[..dynamic_inputs].copy_from_slice(&s.history[step * dynamic_inputs..(step + 1) * dynamic_inputs]);
                row[dynamic_inputs..].copy_from_slice(&s.static_attrs);
            }
            last.push(s.last_observed_y);
            teacher.extend(s.teacher_inputs());
            targets.extend_from_slice(&s.targets);
            mask.extend(s.target_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
            variance.push(s.obs_variance);
        }
        Ok(Self {
            size: b,
            lookback: n,
            horizon: tau,
            inputs: Tensor::new(vec![n * b, width], inputs)?,
            last_observed: Tensor::new(vec![b, 1], last)?,
            teacher: Tensor::new(vec![b, tau], teacher)?,
            targets: Tensor::new(vec![b, tau], targets)?,
            mask: Tensor::new(vec![b, tau], mask)?,
            variance,
        })
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// All parameters of one private generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNetwork {
    pub embedding: MlpParams,
    pub encoder: LstmParams,
    pub attention: AttentionParams,
    pub decoder: LstmParams,
    pub output_head: Linear,
    pub dropout: DropoutSpec,
}

impl GeneratorNetwork {
    pub fn new<R: RngCore + ?Sized>(rng: &mut R, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let h = cfg.hidden;
        Ok(Self {
            embedding: MlpParams::new(rng, &[cfg.input_width(), h, h], Activation::Tanh),
            encoder: LstmParams::new(rng, h, h),
            attention: AttentionParams::new(rng, h, h, h, cfg.scoring),
            decoder: LstmParams::new(rng, 1 + h, h),
            output_head: Linear::new(rng, h, 1),
            dropout: DropoutSpec::new(cfg.dropout, true)?,
        })
    }

    pub fn context_width(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// Checks the width chain embedding → encoder → decoder.
    pub fn is_consistent(&self) -> bool {
        let w = self.embedding.widths();
        self.embedding.is_consistent()
            && w.last() == Some(&self.encoder.input_size())
            && self.decoder.input_size() == 1 + self.context_width()
            && self.output_head.in_width() == self.decoder.hidden_size()
            && self.output_head.out_width() == 1
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> GeneratorVars {
        GeneratorVars {
            embedding: self.embedding.bind(tape, trainable),
            encoder: self.encoder.bind(tape, trainable),
            attention: self.attention.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
            head: self.output_head.bind(tape, trainable),
            dropout: self.dropout,
        }
    }
}

impl Parameters for GeneratorNetwork {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.embedding.visit(&format!("{prefix}.embedding"), f);
        self.encoder.visit(&format!("{prefix}.encoder"), f);
        self.attention.visit(&format!("{prefix}.attention"), f);
        self.decoder.visit(&format!("{prefix}.decoder"), f);
        self.output_head.visit(&format!("{prefix}.head"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.embedding.visit_mut(f);
        self.encoder.visit_mut(f);
        self.attention.visit_mut(f);
        self.decoder.visit_mut(f);
        self.output_head.visit_mut(f);
    }
}

/// Tape handles of a forecast; each list has `τ` entries.
#[derive(Clone, Debug)]
pub struct ForecastVars {
    /// `B × τ`
    pub predictions: Var,
    /// `B × h` per step.
    pub contexts: Vec<Var>,
    /// `B × N` per step.
    pub attention: Vec<Var>,
}

/// Concrete forecast values.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    /// `B × τ`, normalized flow units.
    pub predictions: Tensor,
    pub contexts: Vec<Tensor>,
    pub attention: Vec<Tensor>,
}

impl ForecastOutput {
    fn read(tape: &Tape, f: &ForecastVars) -> Self {
        Self {
            predictions: tape.value(f.predictions).clone(),
            contexts: f.contexts.iter().map(|&v| tape.value(v).clone()).collect(),
            attention: f.attention.iter().map(|&v| tape.value(v).clone()).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorVars {
    pub embedding: MlpVars,
    pub encoder: LstmVars,
    pub attention: AttentionVars,
    pub decoder: LstmVars,
    pub head: LinearVars,
    pub dropout: DropoutSpec,
}

impl GeneratorVars {
    /// Same order as [`Parameters::visit_mut`] on the network.
    pub fn collect(&self, out: &mut Vec<Var>) {
        self.embedding.collect(out);
        out.extend([self.encoder.w, self.encoder.u, self.encoder.b]);
        self.attention.collect(out);
        out.extend([self.decoder.w, self.decoder.u, self.decoder.b]);
        self.head.collect(out);
    }

    /// Embeds a time-major `(N·B) × d` input; returns one `B × e` matrix per step.
    /// Dropout on the hidden layer is applied when `rng` is given.
    pub fn embed(
        &self,
        tape: &mut Tape,
        inputs: Var,
        steps: usize,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Vec<Var>, ModelError> {
        let rows = tape.value(inputs).matrix_dims()?.0;
        if steps == 0 || rows % steps != 0 {
            return Err(ModelError::Shape {
                what: "embedding input",
                reason: format!("{rows} rows cannot hold {steps} steps"),
            });
        }
        let b = rows / steps;
        let spec = self.dropout;
        let embedded = match rng {
            Some(r) => self.embedding.forward(tape, inputs, Some((&spec, r)))?,
            None => self.embedding.forward::<dyn RngCore>(tape, inputs, None)?,
        };
        if steps == 1 {
            return Ok(vec![embedded]);
        }
        (0..steps)
            .map(|n| Ok(tape.slice(embedded, 0, n * b, b)?))
            .collect()
    }

    /// Runs the encoder from a zero state. With `rng`, hidden outputs pass through dropout.
    pub fn encode(
        &self,
        tape: &mut Tape,
        embedded: &[Var],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Vec<Var>, LstmState), ModelError> {
        let first = embedded.first().ok_or(LayerError::EmptySequence("encode"))?;
        let b = tape.value(*first).matrix_dims()?.0;
        let init = LstmState::zeros(tape, b, self.encoder.hidden);
        let (mut hs, last) = lstm_sequence(tape, &self.encoder, embedded, init)?;
        if let Some(r) = rng {
            for h in &mut hs {
                *h = dropout_on_tape(tape, &self.dropout, *h, &mut *r)?;
            }
        }
        Ok((hs, last))
    }

    /// Decodes `horizon` steps starting from the encoder's final state.
    ///
    /// The attention query is the previous decoder hidden state. Step `n`
    /// feeds `teacher[:, n]` when teacher inputs are supplied, otherwise
    /// `last_observed` at step 0 and the previous prediction afterwards.
    pub fn decode(
        &self,
        tape: &mut Tape,
        states: &[Var],
        init: LstmState,
        last_observed: Var,
        teacher: Option<Var>,
        horizon: usize,
    ) -> Result<ForecastVars, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        if let Some(t) = teacher {
            let (_, cols) = tape.value(t).matrix_dims()?;
            if cols != horizon {
                return Err(ModelError::Teacher {
                    expected: horizon,
                    got: cols,
                });
            }
        }
        let keys = self.attention.prepare_keys(tape, states)?;
        let mut state = init;
        let mut prev_y = last_observed;
        let mut preds = Vec::with_capacity(horizon);
        let mut contexts = Vec::with_capacity(horizon);
        let mut attention = Vec::with_capacity(horizon);
        for n in 0..horizon {
            if let Some(t) = teacher {
                prev_y = if horizon == 1 { t } else { tape.slice(t, 1, n, 1)? };
            }
            let (weights, context) = self.attention.attend(tape, state.h, &keys)?;
            let input = tape.concat(&[prev_y, context], 1)?;
            state = lstm_cell_step(tape, &self.decoder, input, state)?;
            let y = self.head.forward(tape, state.h)?;
            preds.push(y);
            contexts.push(context);
            attention.push(weights);
            prev_y = y;
        }
        let predictions = if horizon == 1 { preds[0] } else { tape.concat(&preds, 1)? };
        Ok(ForecastVars {
            predictions,
            contexts,
            attention,
        })
    }

    /// Full pass over a batch. `rng` enables dropout (training mode).
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &WindowBatch,
        teacher_forcing: bool,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<ForecastVars, ModelError> {
        if batch.size == 0 {
            return Err(ModelError::EmptyBatch("generator"));
        }
        let x = tape.constant(batch.inputs.clone());
        let embedded = self.embed(tape, x, batch.lookback, reborrow(&mut rng))?;
        let (states, last) = self.encode(tape, &embedded, reborrow(&mut rng))?;
        let y0 = tape.constant(batch.last_observed.clone());
        let teacher = teacher_forcing.then(|| tape.constant(batch.teacher.clone()));
        self.decode(tape, &states, last, y0, teacher, batch.horizon)
    }
}

fn reborrow<'b>(rng: &'b mut Option<&mut dyn RngCore>) -> Option<&'b mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Eval-mode free-running forecast.
pub fn predict(gen: &GeneratorNetwork, batch: &WindowBatch) -> Result<ForecastOutput, ModelError> {
    let mut tape = Tape::new();
    let g = gen.bind(&mut tape, false);
    let f = g.forward(&mut tape, batch, false, None)?;
    Ok(ForecastOutput::read(&tape, &f))
}

/// Embeds one window: `dynamic` is `N × d_dyn`, `statics` is broadcast to every step.
pub fn embed_inputs(gen: &GeneratorNetwork, dynamic: &Tensor, statics: &[f64]) -> Result<Tensor, ModelError> {
    let (n, d) = dynamic.matrix_dims()?;
    let width = d + statics.len();
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        data.extend_from_slice(dynamic.row(i));
        data.extend_from_slice(statics);
    }
    let mut tape = Tape::new();
    let g = gen.bind(&mut tape, false);
    let x = tape.constant(Tensor::new(vec![n, width], data)?);
    let steps = g.embed(&mut tape, x, 1, None)?;
    Ok(tape.value(steps[0]).clone())
}

/// Eval-mode encoder over an `N × e` embedding; returns every hidden state and the final `(h, c)`.
pub fn encode(gen: &GeneratorNetwork, embedded: &Tensor) -> Result<(Vec<Tensor>, (Tensor, Tensor)), ModelError> {
    let (n, e) = embedded.matrix_dims()?;
    if n == 0 {
        return Err(LayerError::EmptySequence("encode").into());
    }
    let mut tape = Tape::new();
    let g = gen.bind(&mut tape, false);
    let steps: Vec<Var> = (0..n)
        .map(|i| tape.constant(Tensor::from_parts(vec![1, e], embedded.row(i).to_vec())))
        .collect();
    let (hs, last) = g.encode(&mut tape, &steps, None)?;
    Ok((
        hs.iter().map(|&h| tape.value(h).clone()).collect(),
        (tape.value(last.h).clone(), tape.value(last.c).clone()),
    ))
}

/// Eval-mode decoder for a single window.
pub fn decode_forecast(
    gen: &GeneratorNetwork,
    states: &[Tensor],
    final_state: (&Tensor, &Tensor),
    last_observed_y: f64,
    teacher_targets: Option<&[f64]>,
    horizon: usize,
) -> Result<ForecastOutput, ModelError> {
    if let Some(t) = teacher_targets {
        if t.len() != horizon {
            return Err(ModelError::Teacher {
                expected: horizon,
                got: t.len(),
            });
        }
    }
    let mut tape = Tape::new();
    let g = gen.bind(&mut tape, false);
    let hs: Vec<Var> = states.iter().map(|s| tape.constant(s.clone())).collect();
    let init = LstmState {
        h: tape.constant(final_state.0.clone()),
        c: tape.constant(final_state.1.clone()),
    };
    let y0 = tape.constant(Tensor::from_parts(vec![1, 1], vec![last_observed_y]));
    let teacher = teacher_targets.map(|t| tape.constant(Tensor::from_parts(vec![1, t.len()], t.to_vec())));
    let f = g.decode(&mut tape, &hs, init, y0, teacher, horizon)?;
    Ok(ForecastOutput::read(&tape, &f))
}

// ---------------------------------------------------------------------------
// Shared projection and discriminator
// ---------------------------------------------------------------------------

/// `h_c = tanh(c·W + b)`; one instance serves both domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedProjection {
    pub affine: Linear,
}

impl SharedProjection {
    pub fn new<R: RngCore + ?Sized>(rng: &mut R, context: usize, latent: usize) -> Self {
        Self {
            affine: Linear::new(rng, context, latent),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LinearVars {
        self.affine.bind(tape, trainable)
    }
}

impl Parameters for SharedProjection {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.affine.visit(prefix, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.affine.visit_mut(f);
    }
}

pub fn project_on_tape(tape: &mut Tape, proj: &LinearVars, context: Var) -> Result<Var, ModelError> {
    let width = tape.value(proj.weight).shape()[0];
    let (_, got) = tape.value(context).matrix_dims()?;
    if got != width {
        return Err(LayerError::Width {
            layer: "shared projection",
            expected: width,
            got,
        }
        .into());
    }
    let z = proj.forward(tape, context)?;
    Ok(tape.tanh(z))
}

pub fn project_shared(proj: &SharedProjection, context: &Tensor) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let p = proj.bind(&mut tape, false);
    let c = tape.constant(context.clone());
    let h = project_on_tape(&mut tape, &p, c)?;
    Ok(tape.value(h).clone())
}

/// MLP ending in one logit; `sigmoid(logit)` is the probability of the source domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorNetwork {
    pub mlp: MlpParams,
}

impl DiscriminatorNetwork {
    pub fn new<R: RngCore + ?Sized>(rng: &mut R, latent: usize, hidden: usize) -> Self {
        Self {
            mlp: MlpParams::new(rng, &[latent, hidden, 1], Activation::Tanh),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        self.mlp.bind(tape, trainable)
    }
}

impl Parameters for DiscriminatorNetwork {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.mlp.visit(prefix, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.mlp.visit_mut(f);
    }
}

pub fn discriminator_logits(tape: &mut Tape, disc: &MlpVars, features: Var) -> Result<Var, ModelError> {
    Ok(disc.forward::<dyn RngCore>(tape, features, None)?)
}

/// Source-domain probability for every row of `h_c`.
pub fn discriminate(disc: &DiscriminatorNetwork, h_c: &Tensor) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let d = disc.bind(&mut tape, false);
    let x = tape.constant(h_c.clone());
    let z = discriminator_logits(&mut tape, &d, x)?;
    Ok(tape.value(z).data().iter().map(|&v| sigmoid(v)).collect())
}

// ---------------------------------------------------------------------------
// Domain pair
// ---------------------------------------------------------------------------

/// Both generator passes plus the projected features of every context.
#[derive(Clone, Debug)]
pub struct PairFeatures {
    pub source: ForecastVars,
    pub target: ForecastVars,
    /// `τ·(B_S + B_T) × latent`: all source contexts step by step, then all target contexts.
    pub features: Var,
    pub labels: Vec<f64>,
}

/// Dropout streams for the two private generators; `None` means eval mode.
pub struct PairRngs<'a> {
    pub source: Option<&'a mut dyn RngCore>,
    pub target: Option<&'a mut dyn RngCore>,
}

impl PairRngs<'_> {
    pub fn eval() -> Self {
        Self {
            source: None,
            target: None,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn pair_features(
    tape: &mut Tape,
    gs: &GeneratorVars,
    gt: &GeneratorVars,
    proj: &LinearVars,
    source: &WindowBatch,
    target: &WindowBatch,
    teacher_forcing: bool,
    rngs: PairRngs<'_>,
) -> Result<PairFeatures, ModelError> {
    if source.size == 0 {
        return Err(ModelError::EmptyBatch("source"));
    }
    if target.size == 0 {
        return Err(ModelError::EmptyBatch("target"));
    }
    let fs = gs.forward(tape, source, teacher_forcing, rngs.source)?;
    let ft = gt.forward(tape, target, teacher_forcing, rngs.target)?;
    let all: Vec<Var> = fs.contexts.iter().chain(&ft.contexts).copied().collect();
    let stacked = tape.concat(&all, 0)?;
    let features = project_on_tape(tape, proj, stacked)?;
    let mut labels = vec![SOURCE_LABEL; source.size * source.horizon];
    labels.extend(std::iter::repeat_n(TARGET_LABEL, target.size * target.horizon));
    Ok(PairFeatures {
        source: fs,
        target: ft,
        features,
        labels,
    })
}

/// Result of [`forward_domain_pair`].
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPairOutput {
    pub source: ForecastOutput,
    pub target: ForecastOutput,
    pub probabilities: Vec<f64>,
    pub labels: Vec<f64>,
}

/// Eval-mode pass of both generators, the projection and the discriminator.
pub fn forward_domain_pair(
    gs: &GeneratorNetwork,
    gt: &GeneratorNetwork,
    proj: &SharedProjection,
    disc: &DiscriminatorNetwork,
    source: &WindowBatch,
    target: &WindowBatch,
) -> Result<DomainPairOutput, ModelError> {
    let mut tape = Tape::new();
    let gsv = gs.bind(&mut tape, false);
    let gtv = gt.bind(&mut tape, false);
    let pv = proj.bind(&mut tape, false);
    let dv = disc.bind(&mut tape, false);
    let pair = pair_features(&mut tape, &gsv, &gtv, &pv, source, target, false, PairRngs::eval())?;
    let z = discriminator_logits(&mut tape, &dv, pair.features)?;
    Ok(DomainPairOutput {
        source: ForecastOutput::read(&tape, &pair.source),
        target: ForecastOutput::read(&tape, &pair.target),
        probabilities: tape.value(z).data().iter().map(|&v| sigmoid(v)).collect(),
        labels: pair.labels,
    })
}

/// The full adversarial model set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainModels {
    pub source: GeneratorNetwork,
    pub target: GeneratorNetwork,
    pub projection: SharedProjection,
    pub discriminator: DiscriminatorNetwork,
}

/// Identifies an independent initialization stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStream {
    SourceGenerator = 1,
    TargetGenerator = 2,
    Projection = 3,
    Discriminator = 4,
    Baseline = 5,
}

pub fn init_rng(seed: u64, stream: InitStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1000 + stream as u64);
    rng
}

impl DomainModels {
    /// Each network draws its initial weights from its own stream, so the
    /// source generator does not depend on the target architecture.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Ok(Self {
            source: GeneratorNetwork::new(&mut init_rng(seed, InitStream::SourceGenerator), cfg)?,
            target: GeneratorNetwork::new(&mut init_rng(seed, InitStream::TargetGenerator), cfg)?,
            projection: SharedProjection::new(&mut init_rng(seed, InitStream::Projection), cfg.hidden, cfg.latent),
            discriminator: DiscriminatorNetwork::new(
                &mut init_rng(seed, InitStream::Discriminator),
                cfg.latent,
                cfg.discriminator_hidden,
            ),
        })
    }
}
