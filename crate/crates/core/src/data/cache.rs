//! Little-endian binary cache of prepared windows.

use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{DataError, WindowSample};

pub const CACHE_MAGIC: &[u8; 8] = b"HDAWIN\0\0";
pub const CACHE_VERSION: u32 = 1;

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, v: &[f64]) {
    put_u64(w, v.len() as u64);
    for x in v {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn write_window_cache<W: Write>(mut out: W, samples: &[WindowSample]) -> Result<(), DataError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    put_u64(&mut buf, samples.len() as u64);
    for s in samples {
        put_u64(&mut buf, s.basin_id.len() as u64);
        buf.extend_from_slice(s.basin_id.as_bytes());
        buf.extend_from_slice(&s.target_start.to_epoch_days().to_le_bytes());
        put_f64s(&mut buf, &s.history);
        put_f64s(&mut buf, &s.static_attrs);
        buf.extend_from_slice(&s.last_observed_y.to_le_bytes());
        put_f64s(&mut buf, &s.targets);
        buf.extend(s.target_mask.iter().map(|&m| u8::from(m)));
        buf.extend_from_slice(&s.obs_variance.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| DataError::Cache(e.to_string()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| DataError::Cache("truncated cache".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, DataError> {
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(DataError::Cache(format!("length {n} exceeds remaining bytes")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, DataError> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_window_cache<R: Read>(mut input: R) -> Result<Vec<WindowSample>, DataError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| DataError::Cache(e.to_string()))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(DataError::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let count = r.len()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.len()?;
        let basin_id = String::from_utf8(r.take(id_len)?.to_vec()).map_err(|e| DataError::Cache(e.to_string()))?;
        let days = i32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        let target_start =
            NaiveDate::from_epoch_days(days).ok_or_else(|| DataError::Cache(format!("bad date {days}")))?;
        let history = r.f64s()?;
        let static_attrs = r.f64s()?;
        let last_observed_y = r.f64()?;
        let targets = r.f64s()?;
        let target_mask = r.take(targets.len())?.iter().map(|&b| b != 0).collect();
        let obs_variance = r.f64()?;
        out.push(WindowSample {
            basin_id,
            target_start,
            history,
            static_attrs,
            last_observed_y,
            targets,
            target_mask,
            obs_variance,
        });
    }
    if r.pos != buf.len() {
        return Err(DataError::Cache("trailing bytes".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize) -> WindowSample {
        WindowSample {
            basin_id: format!("b{i}"),
            target_start: NaiveDate::from_ymd_opt(1990, 1, 1 + i as u32).unwrap(),
            history: vec![0.1 * i as f64, -1.5, f64::MIN_POSITIVE],
            static_attrs: vec![2.0],
            last_observed_y: -0.3,
            targets: vec![1.0, 0.0],
            target_mask: vec![true, false],
            obs_variance: 0.7,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let s: Vec<_> = (0..4).map(sample).collect();
        let mut buf = Vec::new();
        write_window_cache(&mut buf, &s).unwrap();
        assert_eq!(read_window_cache(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn corruption_detected() {
        let mut buf = Vec::new();
        write_window_cache(&mut buf, &[sample(0)]).unwrap();
        assert!(read_window_cache(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_window_cache(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_window_cache(bad.as_slice()).is_err());
    }
}
