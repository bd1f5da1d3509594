use super::{NumericsError, Tape, Tensor, Var};

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(input index, flat coordinate)` of the worst mismatch.
    pub worst: (usize, usize),
    pub coordinates: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item().ok_or_else(|| NumericsError::NonScalarLoss {
        shape: tape.value(out).shape().to_vec(),
    })
}

/// Checks every coordinate of every input.
///
/// The error per coordinate is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)` with the
/// numeric value taken from a central difference of width `2·step`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
        tolerance,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, inputs[i].shape());
        for j in 0..inputs[i].len() {
            let original = inputs[i].data()[j];
            probe[i].data_mut()[j] = original + step;
            let plus = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = original - step;
            let minus = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
