use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BasinSeries, DataError, NormStats};

/// Lookback `N`, horizon `τ` and stride of the sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.lookback == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(DataError::Invalid {
                what: "window spec",
                reason: format!("{self:?}: lookback, horizon and stride must be >= 1"),
            });
        }
        Ok(())
    }
}

/// One normalized training example.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub basin_id: String,
    /// Date of the first target step (the forecast issue date is the day before).
    pub target_start: NaiveDate,
    /// `N × d_dyn`, row-major.
    pub history: Vec<f64>,
    pub static_attrs: Vec<f64>,
    /// Most recent observed flow inside the history; the normalized mean (0) when none is observed.
    pub last_observed_y: f64,
    /// `τ` normalized flows; 0 where masked.
    pub targets: Vec<f64>,
    pub target_mask: Vec<bool>,
    /// Normalized training-period flow variance of the basin, used to weight the loss.
    pub obs_variance: f64,
}

impl WindowSample {
    pub fn lookback(&self, n_dynamic: usize) -> usize {
        self.history.len() / n_dynamic.max(1)
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    /// Decoder inputs under teacher forcing: `last_observed_y`, then each
    /// preceding target (a masked target repeats the previous input).
    pub fn teacher_inputs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.targets.len());
        let mut prev = self.last_observed_y;
        for t in 0..self.targets.len() {
            out.push(prev);
            if self.target_mask[t] {
                prev = self.targets[t];
            }
        }
        out
    }
}

/// Slides a window over `series`.
///
/// Windows are dropped when any history step has invalid forcings or when
/// every target is masked. A series shorter than `N + τ` yields no windows.
pub fn make_windows(
    series: &BasinSeries,
    static_attrs: &[f64],
    stats: &NormStats,
    spec: WindowSpec,
    obs_variance: f64,
) -> Result<Vec<WindowSample>, DataError> {
    spec.validate()?;
    let (n, tau) = (spec.lookback, spec.horizon);
    let len = series.len();
    if len < n + tau {
        return Ok(Vec::new());
    }
    let statics = stats.statics.normalize(static_attrs);
    let dyn_norm: Vec<Vec<f64>> = series.dynamic.iter().map(|r| stats.dynamic.normalize(r)).collect();

    // invalid_before[i] = number of invalid forcing rows in [0, i)
    let mut invalid_before = vec![0usize; len + 1];
    for i in 0..len {
        invalid_before[i + 1] = invalid_before[i] + usize::from(!series.dynamic_valid[i]);
    }

    let mut out = Vec::new();
    for start in (0..=len - n - tau).step_by(spec.stride) {
        let hist_end = start + n;
        if invalid_before[hist_end] - invalid_before[start] > 0 {
            continue;
        }
        let target_mask = series.mask[hist_end..hist_end + tau].to_vec();
        if !target_mask.iter().any(|&m| m) {
            continue;
        }
        let last_observed_y = (start..hist_end)
            .rev()
            .find(|&i| series.mask[i])
            .map_or(0.0, |i| stats.normalize_flow(series.streamflow[i]));
        let targets = (hist_end..hist_end + tau)
            .map(|i| {
                if series.mask[i] {
                    stats.normalize_flow(series.streamflow[i])
                } else {
                    0.0
                }
            })
            .collect();
        out.push(WindowSample {
            basin_id: series.basin_id.clone(),
            target_start: series.dates[hist_end],
            history: dyn_norm[start..hist_end].concat(),
            static_attrs: statics.clone(),
            last_observed_y,
            targets,
            target_mask,
            obs_variance,
        });
    }
    Ok(out)
}
