//! Training losses and hydrological skill scores.
//!
//! Skill scores return `None` when undefined (too few points, zero
//! variance); `None` is serialized as `null` and never enters a median.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{sigmoid, softplus, NumericsError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty list of basins")]
    EmptyReport,
    #[error("predicted and observed lengths differ ({predicted} vs {observed})")]
    Length { predicted: usize, observed: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Unmasked `(predicted, observed)` pairs.
fn pairs(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Vec<(f64, f64)> {
    predicted
        .iter()
        .zip(observed)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m.get(*i).copied().unwrap_or(false)))
        .map(|(_, (&p, &o))| (p, o))
        .collect()
}

struct Moments {
    mean_m: f64,
    mean_o: f64,
    std_m: f64,
    std_o: f64,
    cov: f64,
    n: usize,
}

/// Population moments of the unmasked pairs; `None` below two points.
fn moments(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<(Moments, Vec<(f64, f64)>)> {
    let p = pairs(predicted, observed, mask);
    if p.len() < 2 || predicted.len() != observed.len() {
        return None;
    }
    let n = p.len() as f64;
    let mean_m = p.iter().map(|x| x.0).sum::<f64>() / n;
    let mean_o = p.iter().map(|x| x.1).sum::<f64>() / n;
    let var_m = p.iter().map(|x| (x.0 - mean_m).powi(2)).sum::<f64>() / n;
    let var_o = p.iter().map(|x| (x.1 - mean_o).powi(2)).sum::<f64>() / n;
    let cov = p.iter().map(|x| (x.0 - mean_m) * (x.1 - mean_o)).sum::<f64>() / n;
    Some((
        Moments {
            mean_m,
            mean_o,
            std_m: var_m.sqrt(),
            std_o: var_o.sqrt(),
            cov,
            n: p.len(),
        },
        p,
    ))
}

/// Nash–Sutcliffe efficiency over unmasked points.
pub fn nse(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let (m, p) = moments(predicted, observed, mask)?;
    let denom: f64 = p.iter().map(|x| (x.1 - m.mean_o).powi(2)).sum();
    if denom <= 0.0 {
        return None;
    }
    let num: f64 = p.iter().map(|x| (x.0 - x.1).powi(2)).sum();
    Some(1.0 - num / denom)
}

/// Pearson correlation.
pub fn pearson_r(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let (m, _) = moments(predicted, observed, mask)?;
    (m.std_m > 0.0 && m.std_o > 0.0).then(|| m.cov / (m.std_m * m.std_o))
}

/// Kling–Gupta efficiency with `β = μ_m / μ_o`.
pub fn kge(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let (m, _) = moments(predicted, observed, mask)?;
    if m.std_m <= 0.0 || m.std_o <= 0.0 || m.mean_o == 0.0 {
        return None;
    }
    let r = m.cov / (m.std_m * m.std_o);
    let alpha = m.std_m / m.std_o;
    let beta = m.mean_m / m.mean_o;
    Some(1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt())
}

/// `σ_m / σ_o`.
pub fn alpha_nse(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let (m, _) = moments(predicted, observed, mask)?;
    (m.std_o > 0.0).then(|| m.std_m / m.std_o)
}

/// `(μ_m − μ_o) / σ_o`.
pub fn beta_nse(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let (m, _) = moments(predicted, observed, mask)?;
    (m.std_o > 0.0).then(|| (m.mean_m - m.mean_o) / m.std_o)
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SkillScores {
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub alpha_nse: Option<f64>,
    pub beta_nse: Option<f64>,
    pub r: Option<f64>,
    /// Number of unmasked points the scores were computed from.
    pub points: usize,
}

impl SkillScores {
    pub fn compute(predicted: &[f64], observed: &[f64], mask: Option<&[bool]>) -> Self {
        Self {
            nse: nse(predicted, observed, mask),
            kge: kge(predicted, observed, mask),
            alpha_nse: alpha_nse(predicted, observed, mask),
            beta_nse: beta_nse(predicted, observed, mask),
            r: pearson_r(predicted, observed, mask),
            points: moments(predicted, observed, mask).map_or(0, |(m, _)| m.n),
        }
    }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Variance-normalized squared error, averaged over the batch.
///
/// `predicted` is `B × τ`. `observed` and `mask` (1 = observed) share that
/// shape; `basin_variance` holds one entry per batch row. Minimizing this
/// maximizes per-basin NSE.
pub fn nse_loss(
    tape: &mut Tape,
    predicted: Var,
    observed: &Tensor,
    mask: &Tensor,
    basin_variance: &[f64],
    eps: f64,
) -> Result<Var, MetricsError> {
    let (b, tau) = tape.value(predicted).matrix_dims()?;
    if observed.len() != b * tau || mask.len() != b * tau || basin_variance.len() != b {
        return Err(MetricsError::Length {
            predicted: b * tau,
            observed: observed.len(),
        });
    }
    let weights: Vec<f64> = (0..b * tau)
        .map(|i| mask.data()[i] / (basin_variance[i / tau] + eps))
        .collect();
    let obs = tape.constant(observed.clone().reshape(vec![b, tau])?);
    let w = tape.constant(Tensor::from_parts(vec![b, tau], weights));
    let diff = tape.sub(predicted, obs)?;
    let sq = tape.mul(diff, diff)?;
    let weighted = tape.mul(sq, w)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, 1.0 / b as f64))
}

/// Binary cross-entropy from logits: `mean(softplus(z) − y·z)`.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, labels: &[f64]) -> Result<Var, MetricsError> {
    let shape = tape.value(logits).shape().to_vec();
    if tape.value(logits).len() != labels.len() {
        return Err(MetricsError::Length {
            predicted: tape.value(logits).len(),
            observed: labels.len(),
        });
    }
    let y = tape.constant(Tensor::new(shape, labels.to_vec())?);
    let sp = tape.softplus(logits);
    let yz = tape.mul(y, logits)?;
    let per = tape.sub(sp, yz)?;
    Ok(tape.mean(per))
}

/// Plain BCE from logits.
pub fn bce_logits_value(logits: &[f64], labels: &[f64]) -> f64 {
    let n = logits.len() as f64;
    logits.iter().zip(labels).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / n
}

/// Plain BCE from probabilities, evaluated through their logits.
pub fn bce(probabilities: &[f64], labels: &[f64]) -> f64 {
    let logits: Vec<f64> = probabilities.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
    bce_logits_value(&logits, labels)
}

/// Fraction of logits on the correct side of zero (label 1 ⇔ logit > 0).
pub fn logit_accuracy(logits: &[f64], labels: &[f64]) -> f64 {
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| (sigmoid(z) > 0.5) == (y > 0.5))
        .count();
    hits as f64 / logits.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Median; averages the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinScores {
    pub basin_id: String,
    pub scores: SkillScores,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MedianScores {
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub alpha_nse: Option<f64>,
    pub beta_nse: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub basins: Vec<BasinScores>,
    pub median: MedianScores,
    pub nse_negative_count: usize,
    /// Basins whose NSE is undefined (excluded from the medians).
    pub undefined_nse_count: usize,
    pub seed: Option<u64>,
}

pub fn aggregate(per_basin: Vec<BasinScores>, seed: Option<u64>) -> Result<MetricsReport, MetricsError> {
    if per_basin.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    let column = |f: fn(&SkillScores) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = per_basin.iter().filter_map(|b| f(&b.scores)).collect();
        median(&v)
    };
    let median = MedianScores {
        nse: column(|s| s.nse),
        kge: column(|s| s.kge),
        alpha_nse: column(|s| s.alpha_nse),
        beta_nse: column(|s| s.beta_nse),
        r: column(|s| s.r),
    };
    let nse_negative_count = per_basin.iter().filter(|b| b.scores.nse.is_some_and(|x| x < 0.0)).count();
    let undefined_nse_count = per_basin.iter().filter(|b| b.scores.nse.is_none()).count();
    Ok(MetricsReport {
        basins: per_basin,
        median,
        nse_negative_count,
        undefined_nse_count,
        seed,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl MetricsReport {
    /// One row per basin followed by a `median` summary row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["basin_id", "nse", "kge", "alpha_nse", "beta_nse", "r", "points"])?;
        for b in &self.basins {
            let s = &b.scores;
            w.write_record([
                b.basin_id.clone(),
                cell(s.nse),
                cell(s.kge),
                cell(s.alpha_nse),
                cell(s.beta_nse),
                cell(s.r),
                s.points.to_string(),
            ])?;
        }
        let m = &self.median;
        w.write_record([
            "median".to_string(),
            cell(m.nse),
            cell(m.kge),
            cell(m.alpha_nse),
            cell(m.beta_nse),
            cell(m.r),
            String::new(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
