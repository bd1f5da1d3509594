use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::steps::make_batch;
use super::{BasinWindows, LstmBaseline, TrainError};
use crate::data::NormStats;
use crate::metrics::{aggregate, BasinScores, MetricsReport, SkillScores};
use crate::model::{predict, GeneratorNetwork, WindowBatch};
use crate::numerics::Tensor;

/// Anything that maps a batch to `B × τ` normalized predictions in eval mode.
pub trait Forecaster {
    fn forecast(&self, batch: &WindowBatch) -> Result<Tensor, TrainError>;
}

impl Forecaster for GeneratorNetwork {
    fn forecast(&self, batch: &WindowBatch) -> Result<Tensor, TrainError> {
        Ok(predict(self, batch)?.predictions)
    }
}

impl Forecaster for LstmBaseline {
    fn forecast(&self, batch: &WindowBatch) -> Result<Tensor, TrainError> {
        Ok(self.predict(batch)?)
    }
}

/// Lead-`τ` forecasts of one basin in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinPrediction {
    pub basin_id: String,
    pub dates: Vec<NaiveDate>,
    pub predicted: Vec<f64>,
    /// `None` where the observation is missing.
    pub observed: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub series: Vec<BasinPrediction>,
}

/// Scores the lead-`τ` step of every window, basin by basin, in physical units.
/// Basins without windows are skipped with a warning.
pub fn evaluate(
    model: &dyn Forecaster,
    basins: &[BasinWindows],
    stats: &NormStats,
    n_dynamic: usize,
    batch_size: usize,
    seed: Option<u64>,
) -> Result<Evaluation, TrainError> {
    let mut scores = Vec::new();
    let mut series = Vec::new();
    for basin in basins {
        if basin.windows.is_empty() {
            log::warn!("basin {}: no valid windows, excluded from evaluation", basin.basin_id);
            continue;
        }
        let tau = basin.windows[0].horizon();
        let lead = tau - 1;
        let idx: Vec<usize> = (0..basin.windows.len()).collect();
        let mut predicted = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(batch_size.max(1)) {
            let batch = make_batch(&basin.windows, chunk, n_dynamic)?;
            let out = model.forecast(&batch)?;
            for r in 0..chunk.len() {
                predicted.push(stats.denormalize_flow(out.get2(r, lead)));
            }
        }
        let mut observed = Vec::with_capacity(idx.len());
        let mut mask = Vec::with_capacity(idx.len());
        let mut dates = Vec::with_capacity(idx.len());
        for w in &basin.windows {
            let seen = w.target_mask[lead];
            observed.push(seen.then(|| stats.denormalize_flow(w.targets[lead])));
            mask.push(seen);
            dates.push(w.target_start + chrono::Days::new(lead as u64));
        }
        let obs_values: Vec<f64> = observed.iter().map(|o| o.unwrap_or(0.0)).collect();
        scores.push(BasinScores {
            basin_id: basin.basin_id.clone(),
            scores: SkillScores::compute(&predicted, &obs_values, Some(&mask)),
        });
        series.push(BasinPrediction {
            basin_id: basin.basin_id.clone(),
            dates,
            predicted,
            observed,
        });
    }
    Ok(Evaluation {
        report: aggregate(scores, seed)?,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureStats, WindowSample};

    /// Returns each window's own target: a perfect forecaster.
    struct Oracle;

    impl Forecaster for Oracle {
        fn forecast(&self, batch: &WindowBatch) -> Result<Tensor, TrainError> {
            Ok(batch.targets.clone())
        }
    }

    /// Always predicts a fixed normalized value.
    struct Constant(f64);

    impl Forecaster for Constant {
        fn forecast(&self, batch: &WindowBatch) -> Result<Tensor, TrainError> {
            Ok(Tensor::full(&[batch.size, batch.horizon], self.0))
        }
    }

    fn stats() -> NormStats {
        let fs = |m: f64, s: f64| FeatureStats {
            mean: vec![m],
            std: vec![s],
            constant: vec![false],
        };
        NormStats {
            dynamic: fs(0.0, 1.0),
            statics: fs(0.0, 1.0),
            streamflow: fs(2.0, 3.0),
        }
    }

    fn basin(id: &str, targets: &[f64]) -> BasinWindows {
        let start = NaiveDate::from_ymd_opt(2001, 3, 1).unwrap();
        BasinWindows {
            basin_id: id.into(),
            windows: targets
                .iter()
                .enumerate()
                .map(|(i, &t)| WindowSample {
                    basin_id: id.into(),
                    target_start: start + chrono::Days::new(i as u64),
                    history: vec![0.0; 2],
                    static_attrs: vec![0.0],
                    last_observed_y: 0.0,
                    targets: vec![t],
                    target_mask: vec![i != 1],
                    obs_variance: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_forecaster_scores_one() {
        let basins = vec![basin("a", &[0.1, 9.0, -0.4, 1.3, 0.7]), basin("b", &[1.0, 0.0, 2.0, -1.0])];
        let e = evaluate(&Oracle, &basins, &stats(), 1, 2, Some(3)).unwrap();
        assert_eq!(e.report.median.nse, Some(1.0));
        assert_eq!(e.report.median.kge, Some(1.0));
        assert_eq!(e.report.seed, Some(3));
        assert_eq!(e.series[0].observed[1], None);
        assert_eq!(e.series[0].dates[2], NaiveDate::from_ymd_opt(2001, 3, 3).unwrap());
        assert_eq!(e.series[1].predicted[0], 2.0 + 3.0 * 1.0);
    }

    #[test]
    fn mean_forecaster_scores_zero() {
        // normalized targets with mean 0 → the flow mean 2.0 is the observed mean
        let basins = vec![basin("a", &[1.0, 5.0, -1.0, 0.5, -0.5])];
        let e = evaluate(&Constant(0.0), &basins, &stats(), 1, 8, None).unwrap();
        assert!(e.report.median.nse.unwrap().abs() < 1e-15);
    }

    #[test]
    fn empty_basins_are_skipped_and_evaluation_is_repeatable() {
        let basins = vec![basin("a", &[0.3, 0.0, 0.1, -0.2]), basin("empty", &[])];
        let a = evaluate(&Constant(0.2), &basins, &stats(), 1, 3, None).unwrap();
        let b = evaluate(&Constant(0.2), &basins, &stats(), 1, 3, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.basins.len(), 1);
        assert!(evaluate(&Oracle, &[basin("e", &[])], &stats(), 1, 3, None).is_err());
    }
}
