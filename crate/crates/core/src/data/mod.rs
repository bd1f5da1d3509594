//! Basin time series: ingestion, normalization, windowing and splitting.

mod cache;
mod csv_io;
mod norm;
mod split;
mod synth;
mod window;

pub use cache::{read_window_cache, write_window_cache, CACHE_MAGIC, CACHE_VERSION};
pub use csv_io::{load_basin_csv, load_domain, load_static_csv, write_basin_csv, write_domain, write_static_csv};
pub use norm::{basin_variance, compute_norm_stats, FeatureStats, NormStats};
pub use split::{split_by_dates, DateRange, SplitRanges, Splits};
pub use synth::{synth_generate, SynthConfig, SynthDomain, SYNTH_DYNAMIC, SYNTH_STATIC};
pub use window::{make_windows, WindowSample, WindowSpec};

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}, line {line}: {reason}")]
    BadRow { path: PathBuf, line: usize, reason: String },
    #[error("{path}, line {line}: date {date} does not follow {previous}")]
    NonMonotoneDate {
        path: PathBuf,
        line: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("{path}, line {line}: gap between {previous} and {date}; daily series must be contiguous")]
    DateGap {
        path: PathBuf,
        line: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("no static attributes for basin {0}")]
    MissingStatic(String),
    #[error("cannot compute statistics from an empty training split")]
    EmptySplit,
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("window cache: {0}")]
    Cache(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Column layout of a per-basin CSV file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_column: String,
    pub dynamic_columns: Vec<String>,
    pub streamflow_column: String,
}

impl CsvSchema {
    pub fn new(dynamic_columns: Vec<String>) -> Self {
        Self {
            date_column: "date".into(),
            dynamic_columns,
            streamflow_column: "streamflow".into(),
        }
    }
}

/// Daily forcings and observed streamflow for one basin.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinSeries {
    pub basin_id: String,
    pub dynamic_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// One row of forcings per date.
    pub dynamic: Vec<Vec<f64>>,
    /// False where a forcing gap exceeded the forward-fill limit.
    pub dynamic_valid: Vec<bool>,
    /// Streamflow in mm/d; meaningless where `mask` is false.
    pub streamflow: Vec<f64>,
    /// True where streamflow was observed.
    pub mask: Vec<bool>,
}

impl BasinSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_dynamic(&self) -> usize {
        self.dynamic_names.len()
    }

    /// Checks the length and contiguity invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.dates.len();
        if self.dynamic.len() != n || self.streamflow.len() != n || self.mask.len() != n || self.dynamic_valid.len() != n {
            return Err(DataError::Invalid {
                what: "basin series",
                reason: format!("{}: column lengths disagree", self.basin_id),
            });
        }
        if self.dynamic.iter().any(|r| r.len() != self.dynamic_names.len()) {
            return Err(DataError::Invalid {
                what: "basin series",
                reason: format!("{}: dynamic row width", self.basin_id),
            });
        }
        if self.dates.windows(2).any(|w| w[1] != w[0] + chrono::Days::new(1)) {
            return Err(DataError::Invalid {
                what: "basin series",
                reason: format!("{}: dates are not contiguous", self.basin_id),
            });
        }
        Ok(())
    }

    /// Copy restricted to dates in `[start, end]`; `None` when nothing overlaps.
    pub fn slice_dates(&self, start: NaiveDate, end: NaiveDate) -> Option<BasinSeries> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        if lo >= hi {
            return None;
        }
        Some(BasinSeries {
            basin_id: self.basin_id.clone(),
            dynamic_names: self.dynamic_names.clone(),
            dates: self.dates[lo..hi].to_vec(),
            dynamic: self.dynamic[lo..hi].to_vec(),
            dynamic_valid: self.dynamic_valid[lo..hi].to_vec(),
            streamflow: self.streamflow[lo..hi].to_vec(),
            mask: self.mask[lo..hi].to_vec(),
        })
    }
}

/// Fixed catchment attributes for every basin of one domain.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StaticAttributes {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl StaticAttributes {
    pub fn get(&self, basin_id: &str) -> Result<&[f64], DataError> {
        self.rows
            .get(basin_id)
            .map(Vec::as_slice)
            .ok_or_else(|| DataError::MissingStatic(basin_id.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }
}

/// All basins of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainData {
    pub series: Vec<BasinSeries>,
    pub statics: StaticAttributes,
}

impl DomainData {
    pub fn n_dynamic(&self) -> usize {
        self.series.first().map_or(0, BasinSeries::n_dynamic)
    }
}
