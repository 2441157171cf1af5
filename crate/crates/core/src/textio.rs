//! Plain-text vectors and matrices: whitespace-separated decimals, one matrix
//! row per line. Blank lines and `#` comments are ignored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let row = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, format!("line {}: bad number {t:?}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Every number in the file, in reading order.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let v: Vec<f64> = read_rows(path)?.into_iter().flatten().collect();
    if v.is_empty() {
        return Err(parse_err(path, "no numbers found".into()));
    }
    Ok(v)
}

pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_rows(path)?;
    let Some(first) = rows.first() else {
        return Err(parse_err(path, "no rows found".into()));
    };
    let cols = first.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(parse_err(
            path,
            format!("row {} has {} entries, expected {cols}", i + 1, r.len()),
        ));
    }
    Ok(rows)
}

/// One entry per line, in shortest round-trip form.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(v.len() * 24);
    for x in v {
        out.push_str(&format!("{x:?}\n"));
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
