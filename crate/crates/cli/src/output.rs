//! CSV emission, atomic file writes and reading CSVs back for verdicts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ef_lab_core::{RunSummary, TraceRow};

pub const TRACE_HEADER: [&str; 8] = [
    "t",
    "f_val",
    "grad_norm_sq",
    "err_norm_sq",
    "phi_p",
    "span_dist",
    "bits_cum",
    "test_loss",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "seed",
    "min_grad_norm_sq",
    "avg_iterate_loss",
    "final_err_norm_sq",
    "empirical_delta",
    "f_init",
    "f_final",
    "f_min",
];

/// Shortest decimal that round-trips, with exponent notation for very
/// large or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

pub fn trace_csv(rows: &[TraceRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.f_val),
            fmt_f64(r.grad_norm_sq),
            fmt_f64(r.err_norm_sq),
            fmt_opt(r.phi_p),
            fmt_opt(r.span_dist),
            r.bits_cum.to_string(),
            fmt_opt(r.test_loss),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn summary_csv(rows: &[RunSummary]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for s in rows {
        w.write_record([
            s.seed.to_string(),
            fmt_f64(s.min_grad_norm_sq),
            fmt_opt(s.avg_iterate_loss),
            fmt_f64(s.final_err_norm_sq),
            fmt_f64(s.empirical_delta),
            fmt_f64(s.f_init),
            fmt_f64(s.f_final),
            fmt_f64(s.f_min),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// A CSV built column by column; every column must have the same length.
#[derive(Debug, Default)]
pub struct ColumnTable {
    names: Vec<String>,
    columns: Vec<Vec<String>>,
}

impl ColumnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_f64(&mut self, name: impl Into<String>, values: &[f64]) -> &mut Self {
        self.names.push(name.into());
        self.columns.push(values.iter().map(|v| fmt_f64(*v)).collect());
        self
    }

    pub fn push_display<T: ToString>(&mut self, name: impl Into<String>, values: &[T]) -> &mut Self {
        self.names.push(name.into());
        self.columns.push(values.iter().map(ToString::to_string).collect());
        self
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let len = self.columns.first().map_or(0, Vec::len);
        assert!(self.columns.iter().all(|c| c.len() == len), "ragged columns");
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names).expect("in-memory write");
        for i in 0..len {
            w.write_record(self.columns.iter().map(|c| c[i].as_str()))
                .expect("in-memory write");
        }
        finish(w)
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// A CSV read back from disk.
#[derive(Debug, Clone)]
pub struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> anyhow::Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: no column `{name}`", self.path.display()))
    }

    /// Column with empty cells as `None`.
    pub fn optional(&self, name: &str) -> anyhow::Result<Vec<Option<f64>>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .map(|row| {
                let cell = row[i].trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| anyhow!("{}: bad number `{cell}` in `{name}`", self.path.display()))
                }
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        self.optional(name)?
            .into_iter()
            .map(|v| v.ok_or_else(|| anyhow!("{}: empty cell in `{name}`", self.path.display())))
            .collect()
    }

    pub fn strings(&self, name: &str) -> anyhow::Result<Vec<String>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }
}
