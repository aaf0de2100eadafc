//! CSV formats: samples (`x1,..,xd1,y1[,y2]`) and per-observation values
//! (`index,value`). Lines starting with `#` are comments.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Writes `sample` with header `x1,..,xd1,y1,..,yd2`.
pub fn write_sample<W: Write>(sample: &Sample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=sample.d1())
        .map(|j| format!("x{j}"))
        .chain((1..=sample.d2()).map(|j| format!("y{j}")))
        .collect();
    w.write_record(&header)?;
    for row in sample.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample CSV; the number of leading `x*` columns gives `d1`.
pub fn read_sample(path: &Path) -> Result<Sample> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    let d1 = headers.iter().take_while(|h| h.trim().starts_with('x')).count();
    if headers.iter().skip(d1).any(|h| !h.trim().starts_with('y')) {
        return Err(Error::InvalidInput(format!(
            "{}: expected header x1,..,xd1,y1,..; got {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let d = headers.len();
    let mut data = Vec::new();
    for record in r.records() {
        let record = record?;
        for field in record.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad number '{field}': {e}", path.display()))
            })?);
        }
    }
    if d == 0 {
        return Err(Error::InvalidInput(format!("{}: empty header", path.display())));
    }
    let n = data.len() / d;
    Sample::new(data, n, d1, d - d1)
}

/// Reads a headed CSV of numbers into row-major data and its width.
pub fn read_points(path: &Path) -> Result<(Vec<f64>, usize)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let width = r.headers()?.len();
    let mut data = Vec::new();
    for record in r.records() {
        for field in record?.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad number '{field}': {e}", path.display()))
            })?);
        }
    }
    Ok((data, width))
}

pub fn write_indexed_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_indexed_values(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut values = Vec::new();
    for (expected, record) in r.records().enumerate() {
        let record = record?;
        let index: usize = record
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("{}: bad index", path.display())))?;
        if index != expected {
            return Err(Error::InvalidInput(format!(
                "{}: index {index} out of order (expected {expected})",
                path.display()
            )));
        }
        let value: f64 = record
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("{}: bad value at {index}", path.display())))?;
        values.push(value);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sample_csv_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20)) {
            let s = Sample::from_rows(&rows, 2).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.csv");
            write_sample(&s, File::create(&path).unwrap()).unwrap();
            prop_assert_eq!(read_sample(&path).unwrap(), s);
        }

        #[test]
        fn indexed_values_round_trip(values in prop::collection::vec(0f64..1e3, 1..50)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("v.csv");
            write_indexed_values(&path, &values).unwrap();
            prop_assert_eq!(read_indexed_values(&path).unwrap(), values);
        }
    }
}
