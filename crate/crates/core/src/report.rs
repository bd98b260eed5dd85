//! Structured experiment output: JSON for machines, aligned text for people,
//! and one CSV per plotted series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::Estimate;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a tolerance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceOrigin {
    /// A limit or inequality that the underlying theory states; the slack
    /// covers slowly varying corrections.
    StatedResult,
    /// A numerical or statistical choice made for this software.
    EngineeringChoice,
    /// An exact identity; the tolerance only absorbs rounding.
    ExactIdentity,
}

/// One named quantity in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub estimate: Estimate,
    /// True when the value carries no sampling error.
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// One pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    /// Human-readable acceptance rule, e.g. `|x − 1| <= 0.2`.
    pub rule: String,
    pub origin: ToleranceOrigin,
    pub passed: bool,
}

/// Plot-ready data `(x, y, ci_lo, ci_hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<[f64; 4]>,
}

impl Series {
    pub fn new(name: &str, x_label: &str, y_label: &str) -> Self {
        Series {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, e: &Estimate) {
        self.points.push([x, e.value, e.ci_lo, e.ci_hi]);
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},ci_lo,ci_hi\n", self.x_label, self.y_label);
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p[0], p[1], p[2], p[3]);
        }
        s
    }
}

/// Result of one verification experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub artifact_version: String,
    /// SHA-256 of the canonical run configuration, filled in by the caller.
    #[serde(default)]
    pub config_hash: String,
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub estimates: Vec<Quantity>,
    /// Empirical stand-ins for constants whose existence alone is known.
    pub fitted_constants: Vec<Quantity>,
    pub checks: Vec<Check>,
    pub series: Vec<Series>,
    /// Conditions that qualify the result (extrapolated values, truncated
    /// fits, degenerate payoffs, ...).
    pub flags: Vec<String>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: Option<u64>) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            artifact_version: ARTIFACT_VERSION.into(),
            config_hash: String::new(),
            seed,
            parameters: BTreeMap::new(),
            estimates: Vec::new(),
            fitted_constants: Vec::new(),
            checks: Vec::new(),
            series: Vec::new(),
            flags: Vec::new(),
            passed: true,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(key.into(), v);
        self
    }

    pub fn estimate(&mut self, name: &str, e: Estimate) -> &mut Self {
        self.estimates.push(Quantity {
            name: name.into(),
            estimate: e,
            deterministic: e.std_error == 0.0,
            note: String::new(),
        });
        self
    }

    pub fn estimate_with_note(&mut self, name: &str, e: Estimate, note: &str) -> &mut Self {
        self.estimate(name, e);
        if let Some(q) = self.estimates.last_mut() {
            q.note = note.into();
        }
        self
    }

    pub fn exact(&mut self, name: &str, value: f64) -> &mut Self {
        self.estimate(name, Estimate::exact(value))
    }

    pub fn fitted(&mut self, name: &str, e: Estimate) -> &mut Self {
        self.fitted_constants.push(Quantity {
            name: name.into(),
            estimate: e,
            deterministic: e.std_error == 0.0,
            note: String::new(),
        });
        self
    }

    /// Records a check and folds it into the overall pass flag.
    pub fn check(
        &mut self,
        name: &str,
        observed: f64,
        rule: impl Into<String>,
        origin: ToleranceOrigin,
        passed: bool,
    ) -> bool {
        self.checks.push(Check {
            name: name.into(),
            observed,
            rule: rule.into(),
            origin,
            passed,
        });
        self.passed &= passed;
        passed
    }

    pub fn flag(&mut self, flag: impl Into<String>) -> &mut Self {
        let f = flag.into();
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
        self
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn find_estimate(&self, name: &str) -> Option<&Quantity> {
        self.estimates
            .iter()
            .chain(&self.fitted_constants)
            .find(|q| q.name == name)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Aligned-column text summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment      {}", self.experiment);
        let _ = writeln!(s, "version         {}", self.artifact_version);
        let _ = writeln!(s, "config hash     {}", self.config_hash);
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "seed            {seed}");
            }
            None => {
                let _ = writeln!(s, "seed            (deterministic)");
            }
        }
        let _ = writeln!(s, "result          {}", if self.passed { "PASS" } else { "FAIL" });
        if !self.parameters.is_empty() {
            let _ = writeln!(s, "\nparameters");
            for (k, v) in &self.parameters {
                let _ = writeln!(s, "  {k:<28} {v}");
            }
        }
        let quantity_block = |s: &mut String, title: &str, qs: &[Quantity]| {
            if qs.is_empty() {
                return;
            }
            let _ = writeln!(s, "\n{title}");
            let _ = writeln!(
                s,
                "  {:<40} {:>14} {:>12} {:>14} {:>14}",
                "name", "value", "std.err", "ci_lo", "ci_hi"
            );
            for q in qs {
                let e = &q.estimate;
                let _ = write!(
                    s,
                    "  {:<40} {:>14.6e} {:>12.3e} {:>14.6e} {:>14.6e}",
                    q.name, e.value, e.std_error, e.ci_lo, e.ci_hi
                );
                if !q.note.is_empty() {
                    let _ = write!(s, "  ({})", q.note);
                }
                s.push('\n');
            }
        };
        quantity_block(&mut s, "estimates", &self.estimates);
        quantity_block(&mut s, "fitted constants", &self.fitted_constants);
        if !self.checks.is_empty() {
            let _ = writeln!(s, "\nchecks");
            for c in &self.checks {
                let _ = writeln!(
                    s,
                    "  [{}] {:<44} observed {:>12.5e}  rule {}  ({})",
                    if c.passed { "pass" } else { "FAIL" },
                    c.name,
                    c.observed,
                    c.rule,
                    origin_label(c.origin)
                );
            }
        }
        if !self.flags.is_empty() {
            let _ = writeln!(s, "\nflags");
            for f in &self.flags {
                let _ = writeln!(s, "  {f}");
            }
        }
        s
    }

    /// Writes `<stem>.json`, `<stem>.txt` and `<stem>.<series>.csv` into
    /// `dir`, returning the paths written.
    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json())?;
        paths.push(json);
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.to_text())?;
        paths.push(txt);
        for series in &self.series {
            let p = dir.join(format!("{stem}.{}.csv", series.name));
            let header = format!(
                "# experiment={} version={} config_hash={} seed={}\n",
                self.experiment,
                self.artifact_version,
                self.config_hash,
                self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into())
            );
            std::fs::write(&p, header + &series.to_csv())?;
            paths.push(p);
        }
        Ok(paths)
    }
}

fn origin_label(o: ToleranceOrigin) -> &'static str {
    match o {
        ToleranceOrigin::StatedResult => "stated result",
        ToleranceOrigin::EngineeringChoice => "engineering choice",
        ToleranceOrigin::ExactIdentity => "exact identity",
    }
}
