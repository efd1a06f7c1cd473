//! Path CSV format: header `t,x=<x1>,...,x=<xN>`, one row per observation
//! time, values with 17 significant digits and LF line endings. Reading
//! validates the regular-grid assumption the estimators rely on; irregular
//! data is rejected, never repaired.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelError, ObservedPath, SamplingScheme};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header malformed: {0}")]
    HeaderMalformed(String),
    #[error("missing or unparseable value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },
    #[error(
        "irregular time grid at row {row}: gap {gap:.6e} deviates from the median {median:.6e}"
    )]
    IrregularGrid { row: usize, gap: f64, median: f64 },
    #[error("need at least 3 data rows, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub inferred_delta: f64,
    pub n_times: usize,
    pub n_sites: usize,
    pub warnings: Vec<String>,
}

/// Writes the path in the canonical CSV format; `read_path_csv` round-trips
/// the result bit-exactly.
pub fn write_path_csv<W: Write>(path: &ObservedPath, mut w: W) -> std::io::Result<()> {
    let mut header = String::from("t");
    for site in path.scheme().sites() {
        header.push_str(&format!(",x={site:.17e}"));
    }
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    let delta = path.scheme().delta();
    let levels = path.levels();
    for i in 0..levels.nrows() {
        let t = i as f64 * delta;
        let mut line = format!("{t:.17e}");
        for j in 0..levels.ncols() {
            line.push_str(&format!(",{:.17e}", levels[(i, j)]));
        }
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a path CSV, inferring Δ as the median successive time gap and
/// rejecting grids whose gaps deviate from it by more than `rtol`.
pub fn read_path_csv<R: BufRead>(
    reader: R,
    rtol: f64,
) -> Result<(ObservedPath, IngestReport), IngestError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| IngestError::HeaderMalformed("empty file".into()))??;
    let mut cols = header.split(',');
    match cols.next() {
        Some("t") => {}
        other => {
            return Err(IngestError::HeaderMalformed(format!(
                "first column must be 't', got {other:?}"
            )))
        }
    }
    let mut sites = Vec::new();
    for (k, col) in cols.enumerate() {
        let coord = col.strip_prefix("x=").ok_or_else(|| {
            IngestError::HeaderMalformed(format!("column {} must look like 'x=<coord>'", k + 2))
        })?;
        let value: f64 = coord.trim().parse().map_err(|_| {
            IngestError::HeaderMalformed(format!("cannot parse site coordinate '{coord}'"))
        })?;
        sites.push(value);
    }
    if sites.is_empty() {
        return Err(IngestError::HeaderMalformed(
            "no site columns after 't'".into(),
        ));
    }
    if sites.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IngestError::HeaderMalformed(
            "site columns must be strictly ascending".into(),
        ));
    }

    let mut times = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .and_then(|s| s.trim().parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or(IngestError::MissingValue {
                row: row_idx + 2,
                col: 1,
            })?;
        times.push(t);
        for col in 0..sites.len() {
            let v: f64 = fields
                .next()
                .and_then(|s| s.trim().parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or(IngestError::MissingValue {
                    row: row_idx + 2,
                    col: col + 2,
                })?;
            values.push(v);
        }
        if fields.next().is_some() {
            return Err(IngestError::MissingValue {
                row: row_idx + 2,
                col: sites.len() + 2,
            });
        }
    }
    if times.len() < 3 {
        return Err(IngestError::TooShort(times.len()));
    }

    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    if !(median > 0.0) {
        return Err(IngestError::IrregularGrid {
            row: 2,
            gap: median,
            median,
        });
    }
    for (i, gap) in gaps.drain(..).enumerate() {
        if (gap - median).abs() > rtol * median {
            return Err(IngestError::IrregularGrid {
                row: i + 3,
                gap,
                median,
            });
        }
    }

    let n_incr = times.len() - 1;
    let scheme = SamplingScheme::new(median, median * n_incr as f64, sites.clone())?;
    let levels = Array2::from_shape_vec((times.len(), sites.len()), values)
        .expect("row-major reshape cannot fail");
    let path = ObservedPath::new(scheme, levels)?;
    let report = IngestReport {
        inferred_delta: median,
        n_times: times.len(),
        n_sites: sites.len(),
        warnings: Vec::new(),
    };
    Ok((path, report))
}
