//! Structured experiment reports: named scalars, tables, and pass/fail
//! assertions with recorded tolerances. Wall-clock timings are carried
//! separately so report bodies are byte-reproducible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One recorded check: expected value, actual value, tolerance, outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub tolerance: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub experiment_id: String,
    /// Normalized `section.key = value` echo of the configuration; enough to
    /// re-run the experiment.
    pub config_echo: BTreeMap<String, String>,
    pub scalars: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    pub notes: Vec<String>,
    pub assertions: Vec<Assertion>,
    /// Wall-clock seconds per stage; excluded from the canonical body.
    pub timings: BTreeMap<String, f64>,
}

impl DiagnosticsReport {
    pub fn new(experiment_id: &str, config_echo: BTreeMap<String, String>) -> Self {
        DiagnosticsReport {
            experiment_id: experiment_id.to_string(),
            config_echo,
            scalars: BTreeMap::new(),
            tables: BTreeMap::new(),
            notes: Vec::new(),
            assertions: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// |actual - expected| <= tol * max(|expected|, floor).
    pub fn assert_close(
        &mut self,
        name: &str,
        actual: f64,
        expected: f64,
        rel_tol: f64,
    ) -> bool {
        let passed = (actual - expected).abs() <= rel_tol * expected.abs().max(1e-300);
        self.assertions.push(Assertion {
            name: name.to_string(),
            expected: format!("{expected}"),
            actual: format!("{actual}"),
            tolerance: format!("rel {rel_tol}"),
            passed,
        });
        passed
    }

    /// actual <= bound.
    pub fn assert_le(&mut self, name: &str, actual: f64, bound: f64) -> bool {
        let passed = actual <= bound;
        self.assertions.push(Assertion {
            name: name.to_string(),
            expected: format!("<= {bound}"),
            actual: format!("{actual}"),
            tolerance: format!("{bound}"),
            passed,
        });
        passed
    }

    /// actual >= bound.
    pub fn assert_ge(&mut self, name: &str, actual: f64, bound: f64) -> bool {
        let passed = actual >= bound;
        self.assertions.push(Assertion {
            name: name.to_string(),
            expected: format!(">= {bound}"),
            actual: format!("{actual}"),
            tolerance: format!("{bound}"),
            passed,
        });
        passed
    }

    pub fn assert_flag(&mut self, name: &str, passed: bool, detail: &str) -> bool {
        self.assertions.push(Assertion {
            name: name.to_string(),
            expected: "true".into(),
            actual: detail.to_string(),
            tolerance: "exact".into(),
            passed,
        });
        passed
    }

    /// Full JSON including timings.
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Canonical body: identical across reruns of the same config and seed
    /// (timings stripped).
    pub fn body_json(&self) -> crate::Result<String> {
        let mut clone = self.clone();
        clone.timings.clear();
        Ok(serde_json::to_string_pretty(&clone)?)
    }

    pub fn write(&self, path: &std::path::Path) -> crate::Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assertions_record_expected_actual_tolerance() {
        let mut r = DiagnosticsReport::new("t", BTreeMap::new());
        r.assert_close("x", 1.0005, 1.0, 1e-3);
        r.assert_le("y", 2.0, 1.0);
        assert!(r.assertions[0].passed);
        assert!(!r.assertions[1].passed);
        assert!(!r.passed());
        for a in &r.assertions {
            assert!(!a.expected.is_empty());
            assert!(!a.actual.is_empty());
            assert!(!a.tolerance.is_empty());
        }
    }

    #[test]
    fn body_json_is_timing_free_and_stable() {
        let mut a = DiagnosticsReport::new("t", BTreeMap::new());
        a.scalar("v", 0.1 + 0.2);
        a.timings.insert("stage".into(), 1.23);
        let mut b = a.clone();
        b.timings.insert("stage".into(), 9.87);
        assert_eq!(a.body_json().unwrap(), b.body_json().unwrap());
        assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
        // full round-trip float precision
        assert!(a.body_json().unwrap().contains("0.30000000000000004"));
    }
}
