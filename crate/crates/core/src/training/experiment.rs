use serde::{Deserialize, Serialize};

use super::{evaluate, Mode, PreparedData, TrainConfig, TrainError, TrainLogEntry, Trainer};
use crate::metrics::MetricsReport;

/// Outcome of one seeded training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub best_validation_nse: Option<f64>,
    /// Target-domain test report of the selected model.
    pub test: MetricsReport,
    pub log: Vec<TrainLogEntry>,
}

/// Mean and population standard deviation over the runs that produced a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: None,
                std: None,
                count: 0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
            count: values.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub nse: MeanStd,
    pub kge: MeanStd,
    pub alpha_nse: MeanStd,
    pub beta_nse: MeanStd,
    pub nse_negative_count: MeanStd,
    pub runs: Vec<RunSummary>,
}

/// Trains one model with `cfg.seed` and scores the selected model on the target test split.
pub fn train_run(cfg: &TrainConfig, data: &PreparedData) -> Result<(Trainer, RunSummary), TrainError> {
    let mc = cfg.model_config(data.source.n_dynamic(), data.source.n_static());
    let mut trainer = Trainer::new(cfg.clone(), mc)?;
    trainer.run(data, |_, _| Ok(()))?;
    let model = trainer.final_model();
    let test = evaluate(
        model.target_forecaster(),
        &data.target.test,
        &data.target.stats,
        data.target.n_dynamic(),
        cfg.eval_batch_size,
        Some(cfg.seed),
    )?
    .report;
    let summary = RunSummary {
        seed: cfg.seed,
        best_epoch: trainer.best.as_ref().map(|b| b.epoch),
        best_validation_nse: trainer.best.as_ref().map(|b| b.validation_nse),
        test,
        log: trainer.log.clone(),
    };
    Ok((trainer, summary))
}

pub fn summarize_runs(mode: Mode, runs: Vec<RunSummary>) -> ExperimentReport {
    let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| MeanStd::of(&runs.iter().filter_map(f).collect::<Vec<_>>());
    ExperimentReport {
        mode,
        nse: col(&|r| r.test.median.nse),
        kge: col(&|r| r.test.median.kge),
        alpha_nse: col(&|r| r.test.median.alpha_nse),
        beta_nse: col(&|r| r.test.median.beta_nse),
        nse_negative_count: col(&|r| Some(r.test.nse_negative_count as f64)),
        runs,
    }
}

/// Trains `n_runs` models with seeds `cfg.seed .. cfg.seed + n_runs`.
pub fn run_experiment(cfg: &TrainConfig, data: &PreparedData, n_runs: usize) -> Result<ExperimentReport, TrainError> {
    if n_runs == 0 {
        return Err(TrainError::Config("n_runs must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for k in 0..n_runs {
        let run_cfg = TrainConfig {
            seed: cfg.seed + k as u64,
            ..cfg.clone()
        };
        runs.push(train_run(&run_cfg, data)?.1);
    }
    Ok(summarize_runs(cfg.mode, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, Some(2.0));
        assert_eq!(m.std, Some(1.0));
        let one = MeanStd::of(&[0.37]);
        assert_eq!(one.mean, Some(0.37));
        assert_eq!(one.std, Some(0.0));
        assert_eq!(MeanStd::of(&[]).mean, None);
    }
}
