//! Reading and writing the rectangular data files.
//!
//! Responses arrive as a comma-separated N x J matrix of 0/1 cells, one row
//! per person. Times, when collected, are a second matrix of the same shape
//! holding positive durations in seconds; an empty cell marks a missing
//! time. Either file may start with a single header row, detected as a
//! first row containing any cell that does not parse as data. All parse
//! errors name the offending 1-based file row and column.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DataSet;

fn ingest(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        row,
        column,
        message: message.into(),
    }
}

/// Trimmed cells of one file, with the 1-based file line each row came from.
struct Grid {
    rows: Vec<(usize, Vec<String>)>,
}

fn read_grid(path: &Path, data_cell: impl Fn(&str) -> bool) -> Result<Grid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let cells: Vec<String> = record.iter().map(|c| c.to_string()).collect();
        let is_first = index == 0;
        if is_first && cells.iter().any(|c| !data_cell(c)) {
            continue;
        }
        rows.push((index + 1, cells));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let width = rows[0].1.len();
    for (line, cells) in &rows {
        if cells.len() != width {
            return Err(ingest(
                *line,
                cells.len().min(width) + 1,
                format!("row has {} fields, expected {width}", cells.len()),
            ));
        }
    }
    Ok(Grid { rows })
}

fn is_response_cell(cell: &str) -> bool {
    cell == "0" || cell == "1"
}

fn is_time_cell(cell: &str) -> bool {
    cell.is_empty() || cell.parse::<f64>().is_ok()
}

/// Load a data set from a response file and an optional time file.
///
/// Times are converted to natural logs here; missing cells become the NaN
/// mask the likelihood understands. The response matrix must be complete.
pub fn load_dataset(responses: &Path, times: Option<&Path>) -> Result<DataSet> {
    let grid = read_grid(responses, is_response_cell)?;
    let n_items = grid.rows[0].1.len();
    let n_persons = grid.rows.len();
    let mut matrix = Vec::with_capacity(n_persons * n_items);
    for (line, cells) in &grid.rows {
        for (col, cell) in cells.iter().enumerate() {
            match cell.as_str() {
                "0" => matrix.push(0u8),
                "1" => matrix.push(1u8),
                other => {
                    return Err(ingest(
                        *line,
                        col + 1,
                        format!("expected 0 or 1, found '{other}'"),
                    ))
                }
            }
        }
    }

    let log_times = match times {
        None => None,
        Some(path) => {
            let grid = read_grid(path, is_time_cell)?;
            if grid.rows.len() != n_persons {
                return Err(ingest(
                    grid.rows.len().min(n_persons) + 1,
                    1,
                    format!(
                        "time file has {} data rows but the response file has {n_persons}",
                        grid.rows.len()
                    ),
                ));
            }
            let mut logs = Vec::with_capacity(n_persons * n_items);
            for (line, cells) in &grid.rows {
                if cells.len() != n_items {
                    return Err(ingest(
                        *line,
                        cells.len().min(n_items) + 1,
                        format!(
                            "time row has {} fields but the response file has {n_items} columns",
                            cells.len()
                        ),
                    ));
                }
                for (col, cell) in cells.iter().enumerate() {
                    if cell.is_empty() {
                        logs.push(f64::NAN);
                        continue;
                    }
                    let seconds: f64 = cell.parse().map_err(|_| {
                        ingest(
                            *line,
                            col + 1,
                            format!("expected a time in seconds or an empty cell, found '{cell}'"),
                        )
                    })?;
                    if !(seconds > 0.0 && seconds.is_finite()) {
                        return Err(ingest(
                            *line,
                            col + 1,
                            format!("response time must be positive, found '{cell}'"),
                        ));
                    }
                    logs.push(seconds.ln());
                }
            }
            Some(logs)
        }
    };

    DataSet::new(n_persons, n_items, matrix, log_times)
}

/// Write a data set back out in the headerless form `load_dataset` reads.
///
/// Times are stored internally on the log scale, so exporting
/// re-exponentiates them to seconds; missing cells become empty fields.
pub fn save_dataset(data: &DataSet, responses: &Path, times: Option<&Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.n_persons() {
        for j in 0..data.n_items() {
            if j > 0 {
                out.push(',');
            }
            out.push(if data.response(i, j) { '1' } else { '0' });
        }
        out.push('\n');
    }
    std::fs::write(responses, out)?;

    if let Some(path) = times {
        if !data.has_times() {
            return Err(Error::Config(
                "asked to write a time file but the data set has no times".into(),
            ));
        }
        let mut out = String::new();
        for i in 0..data.n_persons() {
            for j in 0..data.n_items() {
                if j > 0 {
                    out.push(',');
                }
                if let Some(log_time) = data.log_time(i, j) {
                    out.push_str(&format!("{}", log_time.exp()));
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}
