use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One JSON document per run. `pass` is true iff every metric is at or below its threshold.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs_digest: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    /// Informational numbers that are not pass/fail criteria.
    pub values: BTreeMap<String, f64>,
    /// Raw series for external plotting.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, digest: String) -> Self {
        Report {
            command: command.to_string(),
            inputs_digest: digest,
            pass: false,
            metrics: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            values: BTreeMap::new(),
            series: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        let name = name.into();
        self.metrics.insert(name.clone(), value);
        self.thresholds.insert(name, threshold);
    }

    pub fn value(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    /// NaN metrics fail.
    pub fn finish(&mut self) {
        self.pass = !self.metrics.is_empty()
            && self.metrics.iter().all(|(k, v)| *v <= self.thresholds[k]);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// SHA-256 over the command, its effective parameters (sorted) and the input file contents.
pub fn digest(command: &str, params: &BTreeMap<String, String>, files: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for (k, v) in params {
        h.update(b"\0");
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
    }
    for f in files {
        h.update(b"\0file\0");
        h.update((f.len() as u64).to_le_bytes());
        h.update(f);
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_requires_every_metric() {
        let mut r = Report::new("x", String::new());
        r.finish();
        assert!(!r.pass);
        r.metric("a", 1e-9, 1e-8);
        r.finish();
        assert!(r.pass);
        r.metric("b", f64::NAN, 1.0);
        r.finish();
        assert!(!r.pass);
    }

    #[test]
    fn digest_is_order_free_and_content_based() {
        let mut p = BTreeMap::new();
        p.insert("b".to_string(), "2".to_string());
        p.insert("a".to_string(), "1".to_string());
        let d1 = digest("c", &p, &[b"xyz"]);
        let mut q = BTreeMap::new();
        q.insert("a".to_string(), "1".to_string());
        q.insert("b".to_string(), "2".to_string());
        assert_eq!(d1, digest("c", &q, &[b"xyz"]));
        assert_ne!(d1, digest("c", &q, &[b"xy"]));
        assert_eq!(d1.len(), 64);
    }
}
