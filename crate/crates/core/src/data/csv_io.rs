use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{BasinSeries, CsvSchema, DataError, DomainData, StaticAttributes};

/// Days a missing forcing value may be carried forward.
pub const FORWARD_FILL_LIMIT: usize = 3;

const DATE_FMT: &str = "%Y-%m-%d";

fn open(path: &Path) -> Result<csv::Reader<fs::File>, DataError> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile { path: path.into() }
        } else {
            DataError::Io {
                path: path.into(),
                source: e,
            }
        }
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

fn header_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MalformedHeader {
            path: path.into(),
            reason: format!("missing column `{name}`"),
        })
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads one basin file. The basin id is the file stem.
///
/// Empty or unparseable streamflow cells are masked. Missing forcings are
/// carried forward for up to three days; longer gaps invalidate the row.
pub fn load_basin_csv(path: &Path, schema: &CsvSchema) -> Result<BasinSeries, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = header_index(&headers, &schema.date_column, path)?;
    let dyn_idx = schema
        .dynamic_columns
        .iter()
        .map(|c| header_index(&headers, c, path))
        .collect::<Result<Vec<_>, _>>()?;
    let flow_idx = header_index(&headers, &schema.streamflow_column, path)?;

    let basin_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let mut series = BasinSeries {
        basin_id,
        dynamic_names: schema.dynamic_columns.clone(),
        dates: Vec::new(),
        dynamic: Vec::new(),
        dynamic_valid: Vec::new(),
        streamflow: Vec::new(),
        mask: Vec::new(),
    };
    let mut last_seen: Vec<Option<f64>> = vec![None; dyn_idx.len()];
    let mut missing_run = vec![0usize; dyn_idx.len()];

    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(DataError::BadRow {
                path: path.into(),
                line,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(record[date_idx].trim(), DATE_FMT).map_err(|e| DataError::BadRow {
            path: path.into(),
            line,
            reason: format!("bad date `{}`: {e}", &record[date_idx]),
        })?;
        if let Some(&previous) = series.dates.last() {
            if date <= previous {
                return Err(DataError::NonMonotoneDate {
                    path: path.into(),
                    line,
                    date,
                    previous,
                });
            }
            if date != previous + chrono::Days::new(1) {
                return Err(DataError::DateGap {
                    path: path.into(),
                    line,
                    date,
                    previous,
                });
            }
        }

        let mut row = Vec::with_capacity(dyn_idx.len());
        let mut valid = true;
        for (k, &col) in dyn_idx.iter().enumerate() {
            match parse_cell(&record[col]) {
                Some(v) => {
                    last_seen[k] = Some(v);
                    missing_run[k] = 0;
                    row.push(v);
                }
                None => {
                    missing_run[k] += 1;
                    match last_seen[k] {
                        Some(v) if missing_run[k] <= FORWARD_FILL_LIMIT => row.push(v),
                        _ => {
                            valid = false;
                            row.push(0.0);
                        }
                    }
                }
            }
        }
        let flow = parse_cell(&record[flow_idx]);

        series.dates.push(date);
        series.dynamic.push(row);
        series.dynamic_valid.push(valid);
        series.streamflow.push(flow.unwrap_or(0.0));
        series.mask.push(flow.is_some());
    }
    if series.dates.is_empty() {
        return Err(DataError::Empty { path: path.into() });
    }
    Ok(series)
}

fn create(path: &Path) -> Result<fs::File, DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DataError::Io {
            path: parent.into(),
            source: e,
        })?;
    }
    fs::File::create(path).map_err(|e| DataError::Io {
        path: path.into(),
        source: e,
    })
}

/// Writes the canonical `date,<dynamic...>,streamflow` layout. Masked flows
/// and invalid forcing rows become empty cells.
pub fn write_basin_csv(path: &Path, series: &BasinSeries) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["date".to_string()];
    header.extend(series.dynamic_names.iter().cloned());
    header.push("streamflow".into());
    w.write_record(&header)?;
    for i in 0..series.len() {
        let mut rec = vec![series.dates[i].format(DATE_FMT).to_string()];
        for &v in &series.dynamic[i] {
            rec.push(if series.dynamic_valid[i] { v.to_string() } else { String::new() });
        }
        rec.push(if series.mask[i] {
            series.streamflow[i].to_string()
        } else {
            String::new()
        });
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path.into(),
        source: e,
    })
}

pub fn load_static_csv(path: &Path) -> Result<StaticAttributes, DataError> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("basin_id") {
        return Err(DataError::MalformedHeader {
            path: path.into(),
            reason: "first column must be `basin_id`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(DataError::BadRow {
                path: path.into(),
                line,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let id = record[0].trim().to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|c| {
                parse_cell(c).ok_or_else(|| DataError::BadRow {
                    path: path.into(),
                    line,
                    reason: format!("static attribute `{c}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.insert(id.clone(), values).is_some() {
            return Err(DataError::BadRow {
                path: path.into(),
                line,
                reason: format!("duplicate basin `{id}`"),
            });
        }
    }
    Ok(StaticAttributes { names, rows })
}

pub fn write_static_csv(path: &Path, statics: &StaticAttributes) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["basin_id".to_string()];
    header.extend(statics.names.iter().cloned());
    w.write_record(&header)?;
    for (id, values) in &statics.rows {
        let mut rec = vec![id.clone()];
        rec.extend(values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path.into(),
        source: e,
    })
}

/// Loads every `<basin_id>.csv` in `dir` plus its `static.csv`, sorted by basin id.
pub fn load_domain(dir: &Path, schema: &CsvSchema) -> Result<DomainData, DataError> {
    let entries = fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile { path: dir.into() }
        } else {
            DataError::Io {
                path: dir.into(),
                source: e,
            }
        }
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != "static.csv"))
        .collect();
    files.sort();
    let statics = load_static_csv(&dir.join("static.csv"))?;
    let series = files
        .iter()
        .map(|f| load_basin_csv(f, schema))
        .collect::<Result<Vec<_>, _>>()?;
    for s in &series {
        statics.get(&s.basin_id)?;
    }
    Ok(DomainData { series, statics })
}

pub fn write_domain(dir: &Path, domain: &DomainData) -> Result<(), DataError> {
    for s in &domain.series {
        write_basin_csv(&dir.join(format!("{}.csv", s.basin_id)), s)?;
    }
    write_static_csv(&dir.join("static.csv"), &domain.statics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> CsvSchema {
        CsvSchema::new(vec!["prcp".into(), "tmax".into()])
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "b1.csv",
            "date,prcp,tmax,streamflow\n2000-01-01,1.5,3,0.2\n2000-01-02,0,4,0.3\n2000-01-03,2,5,0.25\n",
        );
        let s = load_basin_csv(&p, &schema()).unwrap();
        assert_eq!(s.basin_id, "b1");
        assert_eq!(s.len(), 3);
        assert!(s.mask.iter().all(|&m| m));
        assert!(s.dynamic_valid.iter().all(|&m| m));
        assert_eq!(s.dynamic[0], vec![1.5, 3.0]);
        s.validate().unwrap();
    }

    #[test]
    fn empty_streamflow_is_masked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "b.csv",
            "date,prcp,tmax,streamflow\n2000-01-01,1,3,0.2\n2000-01-02,0,4,\n2000-01-03,2,5,abc\n2000-01-04,2,5,1\n",
        );
        let s = load_basin_csv(&p, &schema()).unwrap();
        assert_eq!(s.mask, vec![true, false, false, true]);
    }

    #[test]
    fn forcing_gaps_fill_then_invalidate() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = "date,prcp,tmax,streamflow\n2000-01-01,1,3,0.2\n".to_string();
        for d in 2..=6 {
            body.push_str(&format!("2000-01-0{d},,3,0.2\n"));
        }
        let p = write(dir.path(), "b.csv", &body);
        let s = load_basin_csv(&p, &schema()).unwrap();
        assert_eq!(s.dynamic_valid, vec![true, true, true, true, false, false]);
        assert_eq!(s.dynamic[3][0], 1.0);
    }

    #[test]
    fn structured_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_basin_csv(&dir.path().join("nope.csv"), &schema());
        assert!(matches!(missing, Err(DataError::MissingFile { .. })));

        let p = write(dir.path(), "h.csv", "date,prcp,streamflow\n2000-01-01,1,1\n");
        assert!(matches!(load_basin_csv(&p, &schema()), Err(DataError::MalformedHeader { .. })));

        let p = write(
            dir.path(),
            "m.csv",
            "date,prcp,tmax,streamflow\n2000-01-02,1,3,1\n2000-01-01,1,3,1\n",
        );
        assert!(matches!(
            load_basin_csv(&p, &schema()),
            Err(DataError::NonMonotoneDate { line: 3, .. })
        ));

        let p = write(
            dir.path(),
            "g.csv",
            "date,prcp,tmax,streamflow\n2000-01-01,1,3,1\n2000-01-05,1,3,1\n",
        );
        assert!(matches!(load_basin_csv(&p, &schema()), Err(DataError::DateGap { line: 3, .. })));

        let p = write(dir.path(), "d.csv", "date,prcp,tmax,streamflow\nyesterday,1,3,1\n");
        assert!(matches!(load_basin_csv(&p, &schema()), Err(DataError::BadRow { line: 2, .. })));

        let p = write(dir.path(), "f.csv", "date,prcp,tmax,streamflow\n2000-01-01,1,3\n");
        assert!(matches!(load_basin_csv(&p, &schema()), Err(DataError::BadRow { line: 2, .. })));

        let p = write(dir.path(), "e.csv", "date,prcp,tmax,streamflow\n");
        assert!(matches!(load_basin_csv(&p, &schema()), Err(DataError::Empty { .. })));
    }

    #[test]
    fn static_file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "static.csv", "basin_id,area,slope\na,1.5,0.1\nb,2,0.3\n");
        let s = load_static_csv(&p).unwrap();
        assert_eq!(s.get("b").unwrap(), &[2.0, 0.3]);
        assert!(s.get("z").is_err());
        let out = dir.path().join("copy.csv");
        write_static_csv(&out, &s).unwrap();
        assert_eq!(load_static_csv(&out).unwrap(), s);

        let p = write(dir.path(), "bad.csv", "id,area\na,1\n");
        assert!(matches!(load_static_csv(&p), Err(DataError::MalformedHeader { .. })));
        let p = write(dir.path(), "bad2.csv", "basin_id,area\na,\n");
        assert!(matches!(load_static_csv(&p), Err(DataError::BadRow { .. })));
    }
}
