//! Plain-text matrix container.
//!
//! A file holds any number of named matrices:
//!
//! ```text
//! # comment lines and blank lines are ignored
//! matrix A 2 2
//! -1.0000000000000000e0 2.5000000000000000e-1
//! 0.0000000000000000e0 -3.0000000000000000e0
//! matrix Ts 1 1
//! 7.5000000000000004e-4
//! ```
//!
//! The header is `matrix <name> <rows> <cols>`, followed by `rows*cols`
//! whitespace-separated values in row-major order. Values are written with 17
//! significant digits, so a write/read cycle reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixSet {
    entries: Vec<(String, Mat)>,
}

impl MatrixSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a matrix, keeping first-insertion order.
    pub fn insert(&mut self, name: &str, m: Mat) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = m,
            None => self.entries.push((name.to_string(), m)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Mat> {
        self.get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("matrix '{name}' missing from set")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let m = self.require(name)?;
        if m.nrows() != 1 || m.ncols() != 1 {
            return Err(Error::Dimension(format!("'{name}' must be 1x1")));
        }
        Ok(m[(0, 0)])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, m) in &self.entries {
            let _ = writeln!(out, "matrix {} {} {}", name, m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = MatrixSet::new();
        let mut current: Option<(String, usize, usize, Vec<f64>, usize)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("matrix") {
                if let Some((name, r, c, vals, hdr)) = current.take() {
                    finish(&mut set, name, r, c, vals, hdr)?;
                }
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "expected 'matrix <name> <rows> <cols>'".into(),
                    });
                }
                let dim = |s: &str| {
                    s.parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("invalid dimension '{s}'"),
                    })
                };
                let (r, c) = (dim(parts[1])?, dim(parts[2])?);
                current = Some((parts[0].to_string(), r, c, Vec::with_capacity(r * c), line_no));
                continue;
            }
            let Some((_, r, c, vals, _)) = current.as_mut() else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "values before any matrix header".into(),
                });
            };
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid number '{tok}'"),
                })?;
                if vals.len() == *r * *c {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("too many values for a {r}x{c} matrix"),
                    });
                }
                vals.push(v);
            }
        }
        if let Some((name, r, c, vals, hdr)) = current.take() {
            finish(&mut set, name, r, c, vals, hdr)?;
        }
        Ok(set)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn finish(set: &mut MatrixSet, name: String, r: usize, c: usize, vals: Vec<f64>, header_line: usize) -> Result<()> {
    if vals.len() != r * c {
        return Err(Error::Parse {
            line: header_line,
            msg: format!("matrix '{name}' expects {} values, found {}", r * c, vals.len()),
        });
    }
    set.insert(&name, Mat::from_row_slice(r, c, &vals));
    Ok(())
}
