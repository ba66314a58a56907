//! Result files: `#` metadata lines followed by a CSV table.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use hypcoop::simharness::EstimateSummary;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header plus rows of string cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// `mean,stderr,ci_lo,ci_hi,replicates,seed` cells of a simulated estimate.
pub fn sim_cells(s: &EstimateSummary, seed: u64) -> Vec<String> {
    vec![
        num(s.mean),
        num(s.stderr),
        num(s.ci95.0),
        num(s.ci95.1),
        s.replicates.to_string(),
        seed.to_string(),
    ]
}

/// The same cells for a quadrature value: no spread, no replicates, no seed.
pub fn exact_cells(v: f64) -> Vec<String> {
    vec![num(v), num(0.0), num(v), num(v), "0".into(), String::new()]
}

/// Within three standard errors.
pub fn agrees(analytic: f64, s: &EstimateSummary) -> bool {
    (analytic - s.mean).abs() <= 3.0 * s.stderr
}

pub struct Meta<'a> {
    pub command: &'a str,
    pub config: String,
    pub notes: Vec<String>,
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn render(meta: &Meta, table: &Table) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# hypcoop {VERSION}")?;
    writeln!(buf, "# command: {}", meta.command)?;
    writeln!(buf, "# config: {}", meta.config)?;
    for n in &meta.notes {
        writeln!(buf, "# note: {n}")?;
    }
    writeln!(buf, "# timestamp: {}", timestamp())?;
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    drop(w);
    Ok(buf)
}

/// Writes to `out`, or stdout when unset.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}
