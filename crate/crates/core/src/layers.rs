//! Parameterized building blocks: MLP, LSTM, additive attention and dropout.
//!
//! Weight matrices are stored input-major (`in × out`) so a batch of row
//! vectors `X (B × in)` maps through `X · W`. Each block has a plain
//! parameter container and a `*Vars` counterpart holding the same tensors
//! once they are recorded on a [`Tape`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{NumericsError, Tape, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{layer}: expected input width {expected}, got {got}")]
    Width {
        layer: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{0}: empty sequence")]
    EmptySequence(&'static str),
    #[error("invalid dropout rate {0}; must lie in [0, 1)")]
    DropoutRate(f64),
}

/// Walks named parameter tensors in a fixed order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));

    fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut |name, t| out.push((name, t)));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Glorot-uniform matrix of shape `fan_in × fan_out`.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

fn bind(tape: &mut Tape, t: &Tensor, trainable: bool) -> Var {
    tape.leaf(t.clone(), trainable)
}

fn check_width(tape: &Tape, x: Var, layer: &'static str, expected: usize) -> Result<(), LayerError> {
    let (_, got) = tape.value(x).matrix_dims()?;
    if got != expected {
        return Err(LayerError::Width { layer, expected, got });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Affine / MLP
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: glorot(rng, fan_in, fan_out),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LinearVars {
        LinearVars {
            weight: bind(tape, &self.weight, trainable),
            bias: bind(tape, &self.bias, trainable),
        }
    }
}

impl LinearVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, LayerError> {
        let xw = tape.matmul(x, self.weight)?;
        Ok(tape.add_row(xw, self.bias)?)
    }

    pub fn collect(&self, out: &mut Vec<Var>) {
        out.extend([self.weight, self.bias]);
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Stack of affine layers; every layer but the last is followed by `activation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
    pub activation: Activation,
    in_width: usize,
}

impl MlpParams {
    /// `widths` lists every layer boundary, e.g. `[in, hidden, out]`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, widths: &[usize], activation: Activation) -> Self {
        let layers = widths.windows(2).map(|w| Linear::new(rng, w[0], w[1])).collect();
        Self { layers, activation }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(Linear::in_width).collect();
        if let Some(last) = self.layers.last() {
            w.push(last.out_width());
        }
        w
    }

    /// True when consecutive layer widths chain.
    pub fn is_consistent(&self) -> bool {
        self.layers.windows(2).all(|p| p[0].out_width() == p[1].in_width())
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.bind(tape, trainable)).collect(),
            activation: self.activation,
            in_width: self.layers.first().map_or(0, Linear::in_width),
        }
    }
}

impl Parameters for MlpParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}

impl MlpVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        for l in &self.layers {
            l.collect(out);
        }
    }

    /// Hidden layers pass through `dropout` when one is supplied.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        mut dropout: Option<(&DropoutSpec, &mut R)>,
    ) -> Result<Var, LayerError> {
        check_width(tape, x, "mlp", self.in_width)?;
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = self.activation.apply(tape, h);
                if let Some((spec, rng)) = dropout.as_mut() {
                    h = dropout_on_tape(tape, spec, h, *rng)?;
                }
            }
        }
        Ok(h)
    }
}

/// Evaluates an MLP without dropout.
pub fn mlp_forward(tape: &mut Tape, params: &MlpVars, x: Var) -> Result<Var, LayerError> {
    params.forward::<rand::rngs::ThreadRng>(tape, x, None)
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Single-layer LSTM with gate blocks ordered `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `in × 4h`
    pub w: Tensor,
    /// `h × 4h`
    pub u: Tensor,
    /// `1 × 4h`
    pub b: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Glorot weights, forget-gate bias 1, other biases 0.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut b = Tensor::zeros(&[1, 4 * hidden]);
        for x in &mut b.data_mut()[hidden..2 * hidden] {
            *x = 1.0;
        }
        Self {
            w: glorot(rng, input, 4 * hidden),
            u: glorot(rng, hidden, 4 * hidden),
            b,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[input, 4 * hidden]),
            u: Tensor::zeros(&[hidden, 4 * hidden]),
            b: Tensor::zeros(&[1, 4 * hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LstmVars {
        LstmVars {
            w: bind(tape, &self.w, trainable),
            u: bind(tape, &self.u, trainable),
            b: bind(tape, &self.b, trainable),
            input: self.input_size(),
            hidden: self.hidden_size(),
        }
    }
}

impl Parameters for LstmParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "u"), &self.u);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.w);
        f(&mut self.u);
        f(&mut self.b);
    }
}

/// Hidden and cell state of a batch, each `B × h`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, batch: usize, hidden: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros(&[batch, hidden])),
            c: tape.constant(Tensor::zeros(&[batch, hidden])),
        }
    }
}

impl LstmVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.extend([self.w, self.u, self.b]);
    }
}

pub fn lstm_cell_step(tape: &mut Tape, params: &LstmVars, x: Var, prev: LstmState) -> Result<LstmState, LayerError> {
    check_width(tape, x, "lstm input", params.input)?;
    check_width(tape, prev.h, "lstm hidden", params.hidden)?;
    check_width(tape, prev.c, "lstm cell", params.hidden)?;
    let h = params.hidden;
    let xw = tape.matmul(x, params.w)?;
    let hu = tape.matmul(prev.h, params.u)?;
    let pre = tape.add(xw, hu)?;
    let gates = tape.add_row(pre, params.b)?;
    let i_pre = tape.slice(gates, 1, 0, h)?;
    let f_pre = tape.slice(gates, 1, h, h)?;
    let g_pre = tape.slice(gates, 1, 2 * h, h)?;
    let o_pre = tape.slice(gates, 1, 3 * h, h)?;
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);
    let keep = tape.mul(f, prev.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Folds [`lstm_cell_step`] over `xs`; returns every hidden state and the final state.
pub fn lstm_sequence(
    tape: &mut Tape,
    params: &LstmVars,
    xs: &[Var],
    init: LstmState,
) -> Result<(Vec<Var>, LstmState), LayerError> {
    if xs.is_empty() {
        return Err(LayerError::EmptySequence("lstm_sequence"));
    }
    let mut state = init;
    let mut hs = Vec::with_capacity(xs.len());
    for &x in xs {
        state = lstm_cell_step(tape, params, x, state)?;
        hs.push(state.h);
    }
    Ok((hs, state))
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// `vᵀ tanh(W₁ h_n + W₂ h̄_s)`
    #[default]
    Additive,
    /// `h_nᵀ h̄_s`; requires equal query and key widths.
    Dot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Query projection, `h_dec × a`.
    pub w_query: Tensor,
    /// Key projection, `h_enc × a`.
    pub w_key: Tensor,
    /// Score vector, `a × 1`.
    pub v: Tensor,
    pub scoring: Scoring,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w_query: Var,
    pub w_key: Var,
    pub v: Var,
    pub scoring: Scoring,
    pub query_width: usize,
    pub key_width: usize,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, query: usize, key: usize, width: usize, scoring: Scoring) -> Self {
        Self {
            w_query: glorot(rng, query, width),
            w_key: glorot(rng, key, width),
            v: glorot(rng, width, 1),
            scoring,
        }
    }

    pub fn width(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> AttentionVars {
        AttentionVars {
            w_query: bind(tape, &self.w_query, trainable),
            w_key: bind(tape, &self.w_key, trainable),
            v: bind(tape, &self.v, trainable),
            scoring: self.scoring,
            query_width: self.w_query.shape()[0],
            key_width: self.w_key.shape()[0],
        }
    }
}

impl Parameters for AttentionParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_query"), &self.w_query);
        f(join(prefix, "w_key"), &self.w_key);
        f(join(prefix, "v"), &self.v);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.w_query);
        f(&mut self.w_key);
        f(&mut self.v);
    }
}

/// Encoder states with their key projections, computed once per sequence.
#[derive(Clone, Debug)]
pub struct AttentionKeys {
    pub states: Vec<Var>,
    projected: Vec<Var>,
}

impl AttentionVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.extend([self.w_query, self.w_key, self.v]);
    }

    pub fn prepare_keys(&self, tape: &mut Tape, states: &[Var]) -> Result<AttentionKeys, LayerError> {
        if states.is_empty() {
            return Err(LayerError::EmptySequence("attend"));
        }
        let mut projected = Vec::new();
        for &s in states {
            check_width(tape, s, "attention key", self.key_width)?;
            if self.scoring == Scoring::Additive {
                projected.push(tape.matmul(s, self.w_key)?);
            }
        }
        Ok(AttentionKeys {
            states: states.to_vec(),
            projected,
        })
    }

    /// Returns `(weights B × S, context B × h_enc)`.
    pub fn attend(&self, tape: &mut Tape, query: Var, keys: &AttentionKeys) -> Result<(Var, Var), LayerError> {
        check_width(tape, query, "attention query", self.query_width)?;
        let mut scores = Vec::with_capacity(keys.states.len());
        match self.scoring {
            Scoring::Additive => {
                let q = tape.matmul(query, self.w_query)?;
                for &k in &keys.projected {
                    let sum = tape.add(q, k)?;
                    let t = tape.tanh(sum);
                    scores.push(tape.matmul(t, self.v)?);
                }
            }
            Scoring::Dot => {
                for &s in &keys.states {
                    let p = tape.mul(query, s)?;
                    scores.push(tape.row_sum(p)?);
                }
            }
        }
        let scores = tape.concat(&scores, 1)?;
        let weights = tape.softmax(scores, 1)?;
        let mut context = None;
        for (j, &s) in keys.states.iter().enumerate() {
            let a = tape.slice(weights, 1, j, 1)?;
            let term = tape.mul_col(s, a)?;
            context = Some(match context {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((weights, context.expect("non-empty keys")))
    }
}

/// Convenience wrapper: projects keys and attends in one call.
pub fn attend(tape: &mut Tape, params: &AttentionVars, query: Var, states: &[Var]) -> Result<(Var, Var), LayerError> {
    let keys = params.prepare_keys(tape, states)?;
    params.attend(tape, query, &keys)
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rate: f64,
    pub training: bool,
}

impl DropoutSpec {
    pub fn new(rate: f64, training: bool) -> Result<Self, LayerError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(LayerError::DropoutRate(rate));
        }
        Ok(Self { rate, training })
    }

    pub fn eval(self) -> Self {
        Self {
            training: false,
            ..self
        }
    }

    pub fn is_active(&self) -> bool {
        self.training && self.rate > 0.0
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 − p)`; identity in eval mode.
pub fn dropout_on_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    spec: &DropoutSpec,
    x: Var,
    rng: &mut R,
) -> Result<Var, LayerError> {
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(LayerError::DropoutRate(spec.rate));
    }
    if !spec.is_active() {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - spec.rate);
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < spec.rate { 0.0 } else { keep })
        .collect();
    let m = tape.constant(Tensor::from_parts(shape, mask));
    Ok(tape.mul(x, m)?)
}
