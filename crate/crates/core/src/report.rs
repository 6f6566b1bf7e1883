//! Report bundle shared by the command-line tool: machine-readable results,
//! pass/fail checks, human tables and CSV series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tol`.
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            reference: None,
            tolerance: Some(tol),
            pass: value <= tol,
        }
    }

    /// Passes when `|value - reference| <= tol`.
    pub fn near(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            reference: Some(reference),
            tolerance: Some(tol),
            pass: (value - reference).abs() <= tol,
        }
    }

    pub fn flag(name: impl Into<String>, value: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            reference: None,
            tolerance: None,
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Provenance {
    pub tool_version: String,
    pub input_sha256: String,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub defaults_applied: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSeries {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvSeries {
    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportBundle {
    pub command: String,
    pub provenance: Provenance,
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub csv: Vec<CsvSeries>,
    /// Extra files written next to the report, `(name, contents)`.
    #[serde(skip)]
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn new(command: &str, provenance: Provenance) -> Self {
        ReportBundle {
            command: command.to_string(),
            provenance,
            results: BTreeMap::new(),
            checks: vec![],
            tables: vec![],
            csv: vec![],
            files: vec![],
        }
    }

    pub fn insert(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.command);
        for t in &self.tables {
            let _ = writeln!(s, "\n{}", t.title);
            let mut widths: Vec<usize> = t.header.iter().map(|h| h.chars().count()).collect();
            for r in &t.rows {
                for (i, c) in r.iter().enumerate() {
                    if i < widths.len() {
                        widths[i] = widths[i].max(c.chars().count());
                    } else {
                        widths.push(c.chars().count());
                    }
                }
            }
            let fmt_row = |r: &[String]| -> String {
                r.iter()
                    .enumerate()
                    .map(|(i, c)| format!("{:<w$}", c, w = widths[i]))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(s, "{}", fmt_row(&t.header).trim_end());
            for r in &t.rows {
                let _ = writeln!(s, "{}", fmt_row(r).trim_end());
            }
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s, "\nchecks");
            for c in &self.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                let mut line = format!("  [{verdict}] {}: {:.4e}", c.name, c.value);
                if let Some(r) = c.reference {
                    let _ = write!(line, " (reference {r:.4})");
                }
                if let Some(t) = c.tolerance {
                    let _ = write!(line, " tol {t:.3e}");
                }
                let _ = writeln!(s, "{line}");
            }
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::new();
        for c in &self.csv {
            let _ = writeln!(s, "# {}", c.file_name);
            s.push_str(&c.render());
        }
        if self.csv.is_empty() {
            s.push_str("name,value,reference,tolerance,pass\n");
            for c in &self.checks {
                let _ = writeln!(
                    s,
                    "{},{:e},{},{},{}",
                    c.name.replace(',', ";"),
                    c.value,
                    c.reference.map(|x| format!("{x:e}")).unwrap_or_default(),
                    c.tolerance.map(|x| format!("{x:e}")).unwrap_or_default(),
                    c.pass
                );
            }
        }
        s
    }

    /// Writes `report.json`, the CSV series and extra files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for c in &self.csv {
            std::fs::write(dir.join(&c.file_name), c.render())?;
        }
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Row-major nested arrays, full precision.
pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    serde_json::to_value(crate::spec_file::matrix_rows(m)).unwrap_or(Value::Null)
}

/// `[[a, b], [c, d]]` with four decimals.
pub fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = m.row(i).iter().map(|x| format!("{x:.4}")).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}
