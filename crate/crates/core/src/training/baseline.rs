use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::layers::{dropout_on_tape, lstm_sequence, DropoutSpec, LayerError, Linear, LinearVars, LstmParams, LstmState, LstmVars, Parameters};
use crate::model::{ModelError, WindowBatch};
use crate::numerics::{Tape, Tensor, Var};

/// Encoder-only LSTM over `concat(dynamic, static)` with an affine head emitting all `τ` steps at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmBaseline {
    pub encoder: LstmParams,
    pub head: Linear,
    pub dropout: DropoutSpec,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmBaselineVars {
    pub encoder: LstmVars,
    pub head: LinearVars,
    pub dropout: DropoutSpec,
}

impl LstmBaseline {
    pub fn new<R: RngCore + ?Sized>(
        rng: &mut R,
        input: usize,
        hidden: usize,
        horizon: usize,
        dropout: f64,
    ) -> Result<Self, LayerError> {
        Ok(Self {
            encoder: LstmParams::new(rng, input, hidden),
            head: Linear::new(rng, hidden, horizon),
            dropout: DropoutSpec::new(dropout, true)?,
        })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LstmBaselineVars {
        LstmBaselineVars {
            encoder: self.encoder.bind(tape, trainable),
            head: self.head.bind(tape, trainable),
            dropout: self.dropout,
        }
    }

    pub fn predict(&self, batch: &WindowBatch) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape, false);
        let y = v.forward(&mut tape, batch, None)?;
        Ok(tape.value(y).clone())
    }
}

impl Parameters for LstmBaseline {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.encoder.visit(&format!("{prefix}.encoder"), f);
        self.head.visit(&format!("{prefix}.head"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.encoder.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl LstmBaselineVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.extend([self.encoder.w, self.encoder.u, self.encoder.b]);
        self.head.collect(out);
    }

    /// Returns `B × τ` predictions; `rng` enables dropout on the final hidden state.
    pub fn forward(&self, tape: &mut Tape, batch: &WindowBatch, rng: Option<&mut dyn RngCore>) -> Result<Var, ModelError> {
        if batch.size == 0 {
            return Err(ModelError::EmptyBatch("baseline"));
        }
        let x = tape.constant(batch.inputs.clone());
        let b = batch.size;
        let steps: Vec<Var> = if batch.lookback == 1 {
            vec![x]
        } else {
            (0..batch.lookback)
                .map(|n| tape.slice(x, 0, n * b, b))
                .collect::<Result<_, _>>()?
        };
        let init = LstmState::zeros(tape, b, self.encoder.hidden);
        let (_, last) = lstm_sequence(tape, &self.encoder, &steps, init)?;
        let h = match rng {
            Some(r) => dropout_on_tape(tape, &self.dropout, last.h, r)?,
            None => last.h,
        };
        Ok(self.head.forward(tape, h)?)
    }
}
