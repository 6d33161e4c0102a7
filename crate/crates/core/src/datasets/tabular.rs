//! CSV I/O for probability matrices and sweep records.
//!
//! Probability files carry a `p0,p1,…,p{C-1}` header and one sample per row.
//! Sweep files use the header `level,accuracy,log_vc,trial`; an empty
//! `log_vc` cell marks a degenerate record.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::json::{format_sig17, read_sweep_json};
use super::{DataError, SweepRecord};
use crate::vc::{ProbabilityMatrix, VcError};

pub const SWEEP_HEADER: [&str; 4] = ["level", "accuracy", "log_vc", "trial"];

fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::Csv { line, message: format!("{other:?}") },
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(path).map_err(csv_err)
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64, DataError> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::NonNumeric {
        row,
        column,
        value: cell.to_string(),
    })
}

/// Reads and validates a probability CSV. Row numbers in errors are 1-based
/// data rows (the header is not counted).
pub fn read_prob_csv(path: impl AsRef<Path>) -> Result<ProbabilityMatrix, DataError> {
    let mut rdr = reader(path.as_ref())?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let classes = header.len();
    for (j, name) in header.iter().enumerate() {
        if name != format!("p{j}") {
            return Err(DataError::Csv {
                line: 1,
                message: format!("header column {j} is {name:?}, expected \"p{j}\""),
            });
        }
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.len() != classes {
            return Err(DataError::RaggedRow { row, expected: classes, found: record.len() });
        }
        for (column, cell) in record.iter().enumerate() {
            flat.push(parse_cell(cell, row, column)?);
        }
        rows += 1;
    }
    let probs = Array2::from_shape_vec((rows, classes), flat).expect("row lengths checked");
    ProbabilityMatrix::new(probs).map_err(|e| match e {
        VcError::NotOnSimplex { row, sum } => DataError::RowSum { row: row + 1, sum },
        other => DataError::Matrix(other),
    })
}

/// Writes the shortest round-tripping decimal for each probability.
pub fn write_prob_csv(m: &ProbabilityMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::new();
    let header: Vec<String> = (0..m.n_classes()).map(|j| format!("p{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.n_samples() {
        let cells: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_sweep_csv(records: &[SweepRecord], mut w: impl Write) -> Result<(), DataError> {
    writeln!(w, "{}", SWEEP_HEADER.join(","))?;
    for r in records {
        let log_vc = r.log_vc.map(format_sig17).unwrap_or_default();
        writeln!(w, "{},{},{},{}", format_sig17(r.level), format_sig17(r.accuracy), log_vc, r.trial)?;
    }
    Ok(())
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>, DataError> {
    let mut rdr = reader(path.as_ref())?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(DataError::Csv { line: 1, message: format!("expected header {}", SWEEP_HEADER.join(",")) });
    }
    rdr.records()
        .enumerate()
        .map(|(i, record)| {
            let record = record.map_err(csv_err)?;
            let row = i + 1;
            if record.len() != 4 {
                return Err(DataError::RaggedRow { row, expected: 4, found: record.len() });
            }
            let log_vc = match &record[2] {
                "" => None,
                cell => Some(parse_cell(cell, row, 2)?),
            };
            let trial = record[3].parse().map_err(|_| DataError::NonNumeric {
                row,
                column: 3,
                value: record[3].to_string(),
            })?;
            Ok(SweepRecord {
                level: parse_cell(&record[0], row, 0)?,
                accuracy: parse_cell(&record[1], row, 1)?,
                log_vc,
                trial,
            })
        })
        .collect()
}

/// Sweep records from `.json` or CSV (anything else).
pub fn read_sweep_records(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>, DataError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        read_sweep_json(path)
    } else {
        read_sweep_csv(path)
    }
}
