//! Atomic file emission: CSV with 17 significant digits and pretty JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::CliError;

/// Shortest text that still carries 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Writer {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes to a sibling temporary file, then renames over the target.
    pub fn atomic(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.{}.tmp", std::process::id()));
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(contents).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, &target).map_err(io)?;
        self.written.push(target.clone());
        Ok(target)
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.atomic(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|x| fmt_num(*x)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.atomic(name, text.as_bytes())
    }
}

/// `prefix_i_j` column names, row-major, 1-based.
pub fn matrix_header(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (1..=rows)
        .flat_map(|i| (1..=cols).map(move |j| format!("{prefix}_{i}_{j}")))
        .collect()
}

pub fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// `t, m_11, m_12, …` per grid point.
pub fn matrix_series(series: &[(f64, DMatrix<f64>)]) -> Vec<Vec<f64>> {
    series
        .iter()
        .map(|(t, m)| std::iter::once(*t).chain(row_major(m)).collect())
        .collect()
}

pub fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(0.3), "2.9999999999999999e-1");
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Writer::new(dir.path()).unwrap();
        w.csv("a.csv", &["t".into(), "x".into()], &[vec![0.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.csv")]);
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 3);
    }
}
