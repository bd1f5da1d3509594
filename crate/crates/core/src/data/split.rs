use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BasinSeries, DataError};

/// Inclusive calendar range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DataError> {
        if end < start {
            return Err(DataError::Invalid {
                what: "date range",
                reason: format!("{start} is after {end}"),
            });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRanges {
    pub train: DateRange,
    pub validation: DateRange,
    pub test: DateRange,
}

impl Default for SplitRanges {
    /// Train on water year 1999/2000, validate on 1988/89, test on 1989–1999.
    fn default() -> Self {
        Self {
            train: DateRange {
                start: ymd(1999, 10, 1),
                end: ymd(2000, 9, 30),
            },
            validation: DateRange {
                start: ymd(1988, 10, 1),
                end: ymd(1989, 9, 30),
            },
            test: DateRange {
                start: ymd(1989, 10, 1),
                end: ymd(1999, 9, 30),
            },
        }
    }
}

impl SplitRanges {
    pub fn validate(&self) -> Result<(), DataError> {
        let all = [("train", self.train), ("validation", self.validation), ("test", self.test)];
        for (name, r) in all {
            if r.end < r.start {
                return Err(DataError::Invalid {
                    what: "split",
                    reason: format!("{name} range ends before it starts"),
                });
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if all[i].1.overlaps(&all[j].1) {
                    return Err(DataError::Invalid {
                        what: "split",
                        reason: format!("{} and {} ranges overlap", all[i].0, all[j].0),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Date-sliced copies of one basin; a split is `None` when no date falls inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Option<BasinSeries>,
    pub validation: Option<BasinSeries>,
    pub test: Option<BasinSeries>,
}

pub fn split_by_dates(series: &BasinSeries, ranges: &SplitRanges) -> Result<Splits, DataError> {
    ranges.validate()?;
    let cut = |name: &str, r: &DateRange| {
        let s = series.slice_dates(r.start, r.end);
        if s.is_none() {
            log::warn!("basin {}: empty {name} split, excluded", series.basin_id);
        }
        s
    };
    Ok(Splits {
        train: cut("train", &ranges.train),
        validation: cut("validation", &ranges.validation),
        test: cut("test", &ranges.test),
    })
}
