//! Report rows, pass/fail evaluation, and CSV / JSON serialisation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,step,node,residual,value,threshold,pass";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub step: usize,
    pub node: Option<usize>,
    pub residual: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Row {
    pub fn new(
        experiment: &str,
        step: usize,
        node: Option<usize>,
        residual: String,
        value: f64,
        threshold: f64,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            step,
            node,
            residual,
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    /// Residual name without the bracketed qualifier.
    pub fn base_name(&self) -> &str {
        self.residual.split('[').next().unwrap_or(&self.residual)
    }

    fn csv_record(&self) -> [String; 7] {
        [
            self.experiment.clone(),
            self.step.to_string(),
            self.node.map(|n| n.to_string()).unwrap_or_default(),
            self.residual.clone(),
            fmt_num(self.value),
            fmt_num(self.threshold),
            self.pass.to_string(),
        ]
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Outcome categories and their process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    AssertionFailure,
    SolverFailure,
    ConfigError,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::AssertionFailure => 2,
            Self::SolverFailure => 3,
            Self::ConfigError => 4,
        }
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::NonConvergence { .. } | Error::Singular => Self::SolverFailure,
            _ => Self::ConfigError,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub max_value: f64,
    pub rows: usize,
    pub failing_rows: usize,
    pub expected_fail: bool,
    /// Share of `(residual, step)` groups containing a failing row.
    pub failing_group_fraction: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub id: String,
    pub kind: String,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub residuals: BTreeMap<String, ResidualSummary>,
    pub measured_orders: BTreeMap<String, f64>,
    pub lines: Vec<String>,
    pub error: Option<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

/// Accumulates rows and summary information while an experiment runs.
#[derive(Clone, Debug, Default)]
pub struct ReportBuilder {
    pub id: String,
    pub rows: Vec<Row>,
    pub lines: Vec<String>,
    pub measured_orders: BTreeMap<String, f64>,
}

impl ReportBuilder {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            ..Self::default()
        }
    }

    pub fn row(&mut self, step: usize, node: Option<usize>, residual: impl Into<String>, value: f64, threshold: f64) {
        let r = Row::new(&self.id, step, node, residual.into(), value, threshold);
        self.rows.push(r);
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    /// Sorts rows by step, keeping insertion order within a step.
    pub fn finish(
        mut self,
        kind: &str,
        expected_fail: &[String],
        expected_fraction: f64,
        error: Option<&Error>,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Report {
        self.rows.sort_by_key(|r| r.step);
        let residuals = summarize(&self.rows, expected_fail, expected_fraction);
        let mut outcome = Outcome::Pass;
        if residuals.values().any(|s| !s.ok)
            || expected_fail
                .iter()
                .any(|name| !residuals.keys().any(|k| base(k) == name || k == name))
        {
            outcome = Outcome::AssertionFailure;
        }
        if let Some(e) = error {
            outcome = outcome.max(Outcome::from_error(e));
        }
        Report {
            rows: self.rows,
            summary: Summary {
                id: self.id,
                kind: kind.to_string(),
                outcome,
                exit_code: outcome.exit_code(),
                residuals,
                measured_orders: self.measured_orders,
                lines: self.lines,
                error: error.map(ToString::to_string),
                metadata,
            },
        }
    }
}

fn base(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

fn is_expected(name: &str, expected: &[String]) -> bool {
    expected.iter().any(|e| e == name || e == base(name))
}

fn summarize(rows: &[Row], expected: &[String], fraction: f64) -> BTreeMap<String, ResidualSummary> {
    let mut by_name: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_name.entry(r.residual.as_str()).or_default().push(r);
    }
    by_name
        .into_iter()
        .map(|(name, rs)| {
            let mut groups: BTreeMap<usize, bool> = BTreeMap::new();
            for r in &rs {
                *groups.entry(r.step).or_insert(false) |= !r.pass;
            }
            let failing_groups = groups.values().filter(|&&f| f).count();
            let share = failing_groups as f64 / groups.len().max(1) as f64;
            let failing_rows = rs.iter().filter(|r| !r.pass).count();
            let expected_fail = is_expected(name, expected);
            let ok = if expected_fail {
                share >= fraction && failing_groups > 0
            } else {
                failing_rows == 0
            };
            let max_value = rs.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
            (
                name.to_string(),
                ResidualSummary {
                    max_value,
                    rows: rs.len(),
                    failing_rows,
                    expected_fail,
                    failing_group_fraction: share,
                    ok,
                },
            )
        })
        .collect()
}

impl Report {
    pub fn csv(&self) -> String {
        rows_csv(&self.rows)
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialises") + "\n"
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))?;
        let id = &self.summary.id;
        write_file(&dir.join(format!("{id}.csv")), &self.csv())?;
        write_file(&dir.join(format!("{id}.json")), &self.json())
    }

    /// Human-readable one-line verdict plus the summary lines.
    pub fn describe(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let verdict = match s.outcome {
            Outcome::Pass => "PASS",
            Outcome::AssertionFailure => "FAIL",
            Outcome::SolverFailure => "SOLVER-FAILURE",
            Outcome::ConfigError => "CONFIG-ERROR",
        };
        let _ = writeln!(out, "{verdict} {} ({})", s.id, s.kind);
        for line in &s.lines {
            let _ = writeln!(out, "  {line}");
        }
        for (name, r) in &s.residuals {
            let tag = if r.expected_fail { " expected-fail" } else { "" };
            let state = if r.ok { "ok" } else { "NOT OK" };
            let _ = writeln!(
                out,
                "  {name}: max {:e} over {} rows, {} failing{tag} -> {state}",
                r.max_value, r.rows, r.failing_rows
            );
        }
        if let Some(e) = &s.error {
            let _ = writeln!(out, "  error: {e}");
        }
        out
    }
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(64 * (rows.len() + 1)));
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record(r.csv_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}
