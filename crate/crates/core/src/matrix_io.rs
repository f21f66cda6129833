//! Matrix file formats.
//!
//! CSV: one row per line, comma-separated decimals, no header. JSON:
//! `{"n": <rows>, "rows": [[...], ...]}`. Values are written with Rust's
//! shortest round-trip float formatting, so read(write(x)) == x exactly.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::{MixingMatrix, DEFAULT_VALIDATE_TOL};

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    rows: Vec<Vec<f64>>,
}

/// Write a dense matrix (any shape) as CSV.
pub fn write_csv<W: Write>(matrix: &Array2<f64>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for row in matrix.rows() {
        let line = row
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dense rectangular matrix from CSV.
pub fn read_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| Error::MatrixParse {
                    line: idx + 1,
                    message: format!("{e}: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::MatrixParse {
                    line: idx + 1,
                    message: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MatrixParse {
            line: 0,
            message: "empty matrix file".into(),
        });
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::MatrixParse {
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_csv_path(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    write_csv(matrix, std::fs::File::create(path)?)
}

pub fn read_csv_path(path: &Path) -> Result<Array2<f64>> {
    read_csv(std::fs::File::open(path)?)
}

/// Write the JSON form `{"n": ..., "rows": [[...]]}`.
pub fn write_json<W: Write>(matrix: &Array2<f64>, writer: W) -> Result<()> {
    let doc = MatrixJson {
        n: matrix.nrows(),
        rows: matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
    };
    serde_json::to_writer(writer, &doc)?;
    Ok(())
}

/// Read the JSON form.
pub fn read_json<R: Read>(reader: R) -> Result<Array2<f64>> {
    let doc: MatrixJson = serde_json::from_reader(reader)?;
    if doc.rows.len() != doc.n {
        return Err(Error::MatrixParse {
            line: 0,
            message: format!("declared n = {} but found {} rows", doc.n, doc.rows.len()),
        });
    }
    let ncols = doc.rows.first().map_or(0, |r| r.len());
    if doc.rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::MatrixParse {
            line: 0,
            message: "ragged rows in JSON matrix".into(),
        });
    }
    let flat: Vec<f64> = doc.rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((doc.n, ncols), flat).map_err(|e| Error::MatrixParse {
        line: 0,
        message: e.to_string(),
    })
}

/// Load a mixing matrix from CSV and validate it at the default tolerance.
pub fn read_mixing_csv_path(path: &Path) -> Result<MixingMatrix> {
    MixingMatrix::validate(read_csv_path(path)?, DEFAULT_VALIDATE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::{make_topology, TopologyKind};

    #[test]
    fn csv_round_trip_is_exact() {
        let w = make_topology(TopologyKind::Ring, 7).unwrap();
        let mut buf = Vec::new();
        write_csv(w.entries(), &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(w.entries(), &back);
    }

    #[test]
    fn json_round_trip_is_exact() {
        // Entries with no short decimal representation.
        let w = make_topology(TopologyKind::Complete, 3).unwrap();
        let mut buf = Vec::new();
        write_json(w.entries(), &mut buf).unwrap();
        let back = read_json(&buf[..]).unwrap();
        assert_eq!(w.entries(), &back);
    }

    #[test]
    fn parse_error_names_the_line() {
        let text = "0.5,0.5\n0.5,oops\n";
        match read_csv(text.as_bytes()) {
            Err(Error::MatrixParse { line: 2, .. }) => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
    }
}
