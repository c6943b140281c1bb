//! Machine-readable check reports.
//!
//! Every verification routine returns a [`Report`] that serializes to
//! `{check, dim, verdicts, witnesses, seed, tolerances, details}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A located counterexample or notable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<(usize, usize)>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub dim: usize,
    pub verdicts: BTreeMap<String, bool>,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(check: impl Into<String>, dim: usize) -> Self {
        Report {
            check: check.into(),
            dim,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn tolerance(&mut self, name: &str, value: f64) -> &mut Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn verdict(&mut self, name: impl Into<String>, ok: bool) -> &mut Self {
        self.verdicts.insert(name.into(), ok);
        self
    }

    pub fn detail(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.details.insert(name.into(), value);
        self
    }

    pub fn witness(&mut self, label: impl Into<String>, index: Option<(usize, usize)>, value: f64) {
        self.witnesses.push(Witness {
            label: label.into(),
            index,
            value,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// True when every verdict holds.
    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }

    /// True when all verdicts coincide (all pass or all fail).
    pub fn verdicts_agree(&self) -> bool {
        let mut it = self.verdicts.values();
        match it.next() {
            None => true,
            Some(&first) => it.all(|&v| v == first),
        }
    }

    /// Fold another report in as a sub-check, prefixing its verdict names.
    pub fn absorb(&mut self, prefix: &str, other: &Report) {
        for (k, v) in &other.verdicts {
            self.verdicts.insert(format!("{prefix}.{k}"), *v);
        }
        for w in &other.witnesses {
            self.witnesses.push(Witness {
                label: format!("{prefix}.{}", w.label),
                ..w.clone()
            });
        }
        for (k, v) in &other.details {
            self.details.insert(format!("{prefix}.{k}"), *v);
        }
        for n in &other.notes {
            self.notes.push(format!("{prefix}: {n}"));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
