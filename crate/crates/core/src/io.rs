//! Plain-text CSV and JSON formats for fields, matrices and reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// `# {grid json}` header, then one value per line in flat row-major order.
pub fn field_to_csv(field: &Field) -> Result<String> {
    let mut out = format!("# {}\n", serde_json::to_string(field.grid())?);
    for v in field.values() {
        writeln!(out, "{v}").expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn field_from_csv(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| Error::Parse("missing grid header".into()))?;
    let grid: Grid = serde_json::from_str(header)?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value {l:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Field::new(grid, values)
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    fs::write(path, field_to_csv(field)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    field_from_csv(&fs::read_to_string(path)?)
}

/// Comma-separated rows.
pub fn matrix_to_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String cannot fail");
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad value {t:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

/// Header line followed by comma-separated columns of equal length.
pub fn columns_to_csv(header: &[&str], columns: &[&[f64]]) -> Result<String> {
    if header.len() != columns.len() {
        return Err(Error::DimensionMismatch {
            expected: header.len(),
            actual: columns.len(),
        });
    }
    let n = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    let mut out = header.join(",");
    out.push('\n');
    let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    out.push_str(&matrix_to_csv(&rows));
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_exact() {
        let g = Grid::square(-1.0, 1.0, 3).unwrap();
        let f = Field::new(g, vec![0.1, 1.0 / 3.0, -2e-17, 5.0, 1e300, 0.0, -7.25, 3.0e-5, 1.0]).unwrap();
        let back = field_from_csv(&field_to_csv(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn matrix_round_trip() {
        let m = vec![vec![1.0, 0.5], vec![-3.25, 1.0 / 7.0]];
        assert_eq!(matrix_from_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert!(matrix_from_csv("1,x\n").is_err());
    }

    #[test]
    fn columns_checked() {
        let a = [1.0, 2.0];
        let b = [3.0];
        assert!(columns_to_csv(&["a", "b"], &[&a, &b]).is_err());
        assert_eq!(columns_to_csv(&["a"], &[&a]).unwrap(), "a\n1\n2\n");
    }

    #[test]
    fn missing_header_rejected() {
        assert!(field_from_csv("1\n2\n").is_err());
    }
}
