//! Verdicts, CSV tables and the summary file.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => "FAIL",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One checked statement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// The statement being checked, in words.
    pub statement: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, statement: &str, verdict: Verdict, detail: String) -> Self {
        Self {
            name: name.to_string(),
            statement: statement.to_string(),
            verdict,
            detail,
        }
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Format a float for CSV output.
pub fn num(v: f64) -> String {
    format!("{v:.10e}")
}

/// Run metadata that every report carries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub coefficients: String,
    pub truncation_bound: f64,
    pub h: f64,
    pub replicas: usize,
    pub particles: usize,
    pub seed: u64,
    /// Fitted constants and other named numbers.
    pub constants: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub meta: RunMeta,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Report {
    /// Worst verdict over all checks (`Pass` when there are none).
    pub fn verdict(&self) -> Verdict {
        self.checks.iter().map(|c| c.verdict).max().unwrap_or(Verdict::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.meta
            .constants
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        let _ = writeln!(s, "# {} [{}]", self.experiment, m.coefficients);
        let _ = writeln!(
            s,
            "# truncation_bound={:.6e} h={} replicas={} particles={} seed={}",
            m.truncation_bound, m.h, m.replicas, m.particles, m.seed
        );
        for (k, v) in &m.constants {
            let _ = writeln!(s, "# {k}={v:.6e}");
        }
        for n in &m.notes {
            let _ = writeln!(s, "# note: {n}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<12} {:<28} [{}] {}",
                c.verdict.label(),
                c.name,
                c.statement,
                c.detail
            );
        }
        s
    }

    /// Write the tables and `<experiment>_summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            std::fs::write(dir.join(&t.file), t.to_csv())?;
        }
        std::fs::write(dir.join(format!("{}_summary.txt", self.experiment)), self.summary())?;
        Ok(())
    }
}

/// Gnuplot script plotting the first two numeric columns of each table.
pub fn plot_script(report: &Report) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
    for t in &report.tables {
        if t.header.len() < 2 {
            continue;
        }
        let png = t.file.replace(".csv", ".png");
        let _ = writeln!(s, "set terminal pngcairo size 800,500\nset output '{png}'");
        let _ = writeln!(s, "plot '{}' using 1:2 with linespoints", t.file);
    }
    s
}
