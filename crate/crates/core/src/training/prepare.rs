use crate::data::{
    basin_variance, compute_norm_stats, make_windows, split_by_dates, DataError, DomainData, NormStats, SplitRanges,
    WindowSample, WindowSpec,
};

/// Windows of one basin, in date order.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinWindows {
    pub basin_id: String,
    pub windows: Vec<WindowSample>,
}

/// One domain after splitting, normalizing (training statistics only) and windowing.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDomain {
    pub stats: NormStats,
    pub dynamic_names: Vec<String>,
    pub static_names: Vec<String>,
    pub train: Vec<WindowSample>,
    pub validation: Vec<BasinWindows>,
    pub test: Vec<BasinWindows>,
}

impl PreparedDomain {
    pub fn n_dynamic(&self) -> usize {
        self.dynamic_names.len()
    }

    pub fn n_static(&self) -> usize {
        self.static_names.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub source: PreparedDomain,
    pub target: PreparedDomain,
}

pub fn prepare_domain(domain: &DomainData, ranges: &SplitRanges, spec: WindowSpec) -> Result<PreparedDomain, DataError> {
    let mut train_series = Vec::with_capacity(domain.series.len());
    for s in &domain.series {
        train_series.extend(split_by_dates(s, ranges)?.train);
    }
    let stats = compute_norm_stats(&train_series, &domain.statics)?;
    prepare_domain_with_stats(domain, ranges, spec, stats)
}

/// Like [`prepare_domain`] but normalizes with existing statistics, e.g. the
/// ones stored in a checkpoint.
pub fn prepare_domain_with_stats(
    domain: &DomainData,
    ranges: &SplitRanges,
    spec: WindowSpec,
    stats: NormStats,
) -> Result<PreparedDomain, DataError> {
    spec.validate()?;
    let first = domain.series.first().ok_or(DataError::EmptySplit)?;
    let mut splits = Vec::with_capacity(domain.series.len());
    for s in &domain.series {
        splits.push(split_by_dates(s, ranges)?);
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (series, sp) in domain.series.iter().zip(&splits) {
        let statics = domain.statics.get(&series.basin_id)?;
        let variance = sp.train.as_ref().map_or(0.0, |t| basin_variance(t, &stats));
        if let Some(t) = &sp.train {
            train.extend(make_windows(t, statics, &stats, spec, variance)?);
        }
        if let Some(v) = &sp.validation {
            validation.push(BasinWindows {
                basin_id: series.basin_id.clone(),
                windows: make_windows(v, statics, &stats, spec, variance)?,
            });
        }
        if let Some(t) = &sp.test {
            test.push(BasinWindows {
                basin_id: series.basin_id.clone(),
                windows: make_windows(t, statics, &stats, spec, variance)?,
            });
        }
    }
    Ok(PreparedDomain {
        stats,
        dynamic_names: first.dynamic_names.clone(),
        static_names: domain.statics.names.clone(),
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    fn spec() -> WindowSpec {
        WindowSpec {
            lookback: 10,
            horizon: 1,
            stride: 5,
        }
    }

    #[test]
    fn test_data_does_not_leak_into_training_windows() {
        let cfg = SynthConfig {
            n_source_basins: 2,
            n_target_basins: 2,
            ..SynthConfig::default()
        };
        let (_, target) = synth_generate(&cfg).unwrap();
        let ranges = SplitRanges::default();
        let base = prepare_domain(&target, &ranges, spec()).unwrap();

        let mut altered = target.clone();
        for s in &mut altered.series {
            for (i, d) in s.dates.iter().enumerate() {
                if ranges.test.contains(*d) {
                    s.streamflow[i] *= 10.0;
                    s.dynamic[i][0] += 100.0;
                }
            }
        }
        let other = prepare_domain(&altered, &ranges, spec()).unwrap();
        assert_eq!(base.stats, other.stats);
        assert_eq!(base.train, other.train);
        assert_eq!(base.validation, other.validation);
        assert_ne!(base.test, other.test);
        assert!(!base.train.is_empty());
    }
}
