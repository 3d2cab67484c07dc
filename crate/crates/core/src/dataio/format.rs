use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"MVDS";
const HEADER_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ViewFormat {
    #[default]
    Binary,
    Csv,
}

pub fn encode_binary(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows for a view file"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::invalid("too many columns for a view file"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8], origin: &Path) -> Result<Matrix> {
    let malformed = |detail: String| Error::Format {
        file: origin.to_path_buf(),
        detail,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(malformed("missing MVDS header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * cols * 8 {
        return Err(malformed(format!(
            "header declares {rows}x{cols} but payload holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// CSV with a header row `<prefix>0,<prefix>1,...`; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix_csv(m: &Matrix, path: &Path, header: &[String]) -> Result<()> {
    if header.len() != m.cols() {
        return Err(Error::shape(format!(
            "{} header names for {} columns",
            header.len(),
            m.cols()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let mut record = Vec::with_capacity(m.cols());
    for row in m.row_iter() {
        record.clear();
        record.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a headed numeric CSV; returns the matrix and the header names.
pub fn read_matrix_csv(path: &Path) -> Result<(Matrix, Vec<String>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Format {
                file: path.to_path_buf(),
                detail: format!("row {line} has {} fields, header has {}", rec.len(), header.len()),
            });
        }
        for field in rec.iter() {
            let x: f64 = field.trim().parse().map_err(|_| Error::Format {
                file: path.to_path_buf(),
                detail: format!("row {line}: '{field}' is not a number"),
            })?;
            data.push(x);
        }
        rows += 1;
    }
    Ok((Matrix::from_vec(rows, header.len(), data)?, header))
}

pub fn write_view(m: &Matrix, path: &Path, format: ViewFormat) -> Result<()> {
    match format {
        ViewFormat::Binary => fs::write(path, encode_binary(m)?).map_err(|e| Error::io(path, e)),
        ViewFormat::Csv => {
            let header: Vec<String> = (0..m.cols()).map(|j| format!("f{j}")).collect();
            write_matrix_csv(m, path, &header)
        }
    }
}

pub fn read_view(path: &Path, format: ViewFormat) -> Result<Matrix> {
    match format {
        ViewFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes, path)
        }
        ViewFormat::Csv => read_matrix_csv(path).map(|(m, _)| m),
    }
}

/// One column named `label`.
pub fn write_labels_csv(labels: &[usize], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::with_capacity(labels.len() * 3 + 6);
    s.push_str("label\n");
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads the `label` column of a headed CSV, or the first column when there
/// is no column of that name.
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let col = r.headers()?.iter().position(|h| h.trim() == "label").unwrap_or(0);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("").trim();
        let v: usize = field.parse().map_err(|_| Error::Format {
            file: path.to_path_buf(),
            detail: format!("row {line}: '{field}' is not a non-negative integer label"),
        })?;
        out.push(v);
    }
    Ok(out)
}
