use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Error, Result};

/// Dense row-major matrix of samples: one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of width {n_cols}",
                data.len()
            )));
        }
        Ok(Self { n_cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_cols * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::Shape(format!("row {i} has {} entries, expected {n_cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(n_cols.max(1), data)
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_cols: self.n_cols,
            data,
        }
    }

    /// Applies `f` to every row, producing a matrix of width `n_out`.
    pub fn map_rows<F>(&self, n_out: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let mut data = vec![0.0; self.n_rows() * n_out];
        for (r, out) in self.rows().zip(data.chunks_exact_mut(n_out)) {
            f(r, out)?;
        }
        Self::new(n_out, data)
    }

    /// Writes the matrix as CSV with the given column names.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        if header.len() != self.n_cols {
            return Err(Error::Shape(format!(
                "header has {} names for {} columns",
                header.len(),
                self.n_cols
            )));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for r in self.rows() {
            line.clear();
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                // `{}` prints the shortest representation that parses back exactly.
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, header: &[String]) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), header)
    }

    /// Reads a CSV written by [`SampleMatrix::write_csv`]; returns the header too.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, Vec<String>)> {
        let mut lines = r.lines();
        let header: Vec<String> = match lines.next() {
            Some(l) => l?.split(',').map(|s| s.trim().to_string()).collect(),
            None => return Err(Error::Format("empty CSV".into())),
        };
        let n_cols = header.len();
        let mut data = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad number {tok:?}", i + 2)))?;
                data.push(v);
            }
            if data.len() - before != n_cols {
                return Err(Error::Format(format!(
                    "line {}: expected {n_cols} fields, found {}",
                    i + 2,
                    data.len() - before
                )));
            }
        }
        Ok((Self::new(n_cols, data)?, header))
    }

    pub fn load_csv(path: &Path) -> Result<(Self, Vec<String>)> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
