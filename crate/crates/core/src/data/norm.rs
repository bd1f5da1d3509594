use serde::{Deserialize, Serialize};

use super::{BasinSeries, DataError, StaticAttributes};

/// Per-feature mean and standard deviation. Constant features get `std = 1`
/// and are flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl FeatureStats {
    fn from_rows<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Result<Self, DataError> {
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0usize;
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            for (k, &v) in r.iter().enumerate() {
                sum[k] += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(DataError::EmptySplit);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for (k, &v) in r.iter().enumerate() {
                sq[k] += (v - mean[k]).powi(2);
            }
        }
        let raw: Vec<f64> = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        let constant: Vec<bool> = raw
            .iter()
            .zip(&mean)
            .map(|(&s, m)| s <= 1e-12 * (1.0 + m.abs()))
            .collect();
        let std = raw.iter().zip(&constant).map(|(&s, &c)| if c { 1.0 } else { s }).collect();
        Ok(Self { mean, std, constant })
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - self.mean[k]) / self.std[k])
            .collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| v * self.std[k] + self.mean[k])
            .collect()
    }
}

/// Domain-wide normalization statistics, computed on the training split only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub dynamic: FeatureStats,
    pub statics: FeatureStats,
    pub streamflow: FeatureStats,
}

impl NormStats {
    pub fn normalize_flow(&self, q: f64) -> f64 {
        (q - self.streamflow.mean[0]) / self.streamflow.std[0]
    }

    pub fn denormalize_flow(&self, z: f64) -> f64 {
        z * self.streamflow.std[0] + self.streamflow.mean[0]
    }
}

/// Pools valid forcing rows and observed flows over all `training` basins.
/// Static statistics cover the attribute rows of those basins.
pub fn compute_norm_stats(training: &[BasinSeries], statics: &StaticAttributes) -> Result<NormStats, DataError> {
    let first = training.first().ok_or(DataError::EmptySplit)?;
    let dim = first.n_dynamic();
    let dyn_rows = training.iter().flat_map(|s| {
        s.dynamic
            .iter()
            .zip(&s.dynamic_valid)
            .filter(|(_, &v)| v)
            .map(|(r, _)| r.as_slice())
    });
    let dynamic = FeatureStats::from_rows(dim, dyn_rows)?;

    let static_rows = training
        .iter()
        .map(|s| statics.get(&s.basin_id))
        .collect::<Result<Vec<_>, _>>()?;
    let statics = if statics.dim() == 0 {
        FeatureStats {
            mean: vec![],
            std: vec![],
            constant: vec![],
        }
    } else {
        FeatureStats::from_rows(statics.dim(), static_rows.into_iter())?
    };

    let flows: Vec<[f64; 1]> = training
        .iter()
        .flat_map(|s| s.streamflow.iter().zip(&s.mask).filter(|(_, &m)| m).map(|(&q, _)| [q]))
        .collect();
    let streamflow = FeatureStats::from_rows(1, flows.iter().map(|r| r.as_slice()))?;
    Ok(NormStats {
        dynamic,
        statics,
        streamflow,
    })
}

/// Variance of one basin's observed flows in normalized units; `0` with fewer than two points.
pub fn basin_variance(series: &BasinSeries, stats: &NormStats) -> f64 {
    let z: Vec<f64> = series
        .streamflow
        .iter()
        .zip(&series.mask)
        .filter(|(_, &m)| m)
        .map(|(&q, _)| stats.normalize_flow(q))
        .collect();
    if z.len() < 2 {
        return 0.0;
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}
