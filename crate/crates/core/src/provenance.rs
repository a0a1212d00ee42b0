//! Machine-readable table of published recipe values and an audit of the
//! library defaults against it.

use crate::data::window::WindowSpec;
use crate::error::{Error, Result};
use crate::network::ModelConfig;
use crate::train::TrainConfig;

/// The shipped table (`provenance.tsv`).
pub const TABLE: &str = include_str!("../provenance.tsv");

/// Keys whose values are compared without regard to order.
const MULTISET_KEYS: [&str; 1] = ["lambda"];

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceEntry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLine {
    pub key: String,
    pub expected: String,
    /// `None` when the key has no corresponding default
    pub actual: Option<String>,
    pub ok: bool,
}

pub fn parse_table(text: &str) -> Result<Vec<ProvenanceEntry>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("key\tvalue\torigin") {
        return Err(Error::Format("provenance table: bad header".into()));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            match f.as_slice() {
                [k, v, o] if !o.trim().is_empty() => Ok(ProvenanceEntry {
                    key: k.to_string(),
                    value: v.to_string(),
                    origin: o.to_string(),
                }),
                _ => Err(Error::Format(format!("provenance table: bad row {l:?}"))),
            }
        })
        .collect()
}

pub fn table() -> Result<Vec<ProvenanceEntry>> {
    parse_table(TABLE)
}

fn join<N: ToString>(xs: &[N]) -> String {
    xs.iter().map(N::to_string).collect::<Vec<_>>().join(",")
}

/// Library default for a table key.
pub fn default_value(key: &str) -> Option<String> {
    let m = ModelConfig::default();
    let t = TrainConfig::default();
    let w = WindowSpec::default();
    Some(match key {
        "optimizer" => "adamw".into(),
        "lr" => t.lr.to_string(),
        "batch_size" => t.batch_size.to_string(),
        "epochs" => t.epochs.to_string(),
        "plateau_patience" => t.plateau_patience.to_string(),
        "plateau_factor" => t.plateau_factor.to_string(),
        "early_stop_patience" => t.early_stop_patience.to_string(),
        "channel_ladder" => join(&m.channel_ladder()),
        "lambda" => join(&m.lambda),
        "window_width" => w.width_hu.to_string(),
        "window_level" => w.level_hu.to_string(),
        _ => return None,
    })
}

fn numbers(v: &str) -> Option<Vec<f64>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

fn same(key: &str, expected: &str, actual: &str) -> bool {
    match (numbers(expected), numbers(actual)) {
        (Some(mut a), Some(mut b)) => {
            if MULTISET_KEYS.contains(&key) {
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
            }
            a == b
        }
        _ => expected == actual,
    }
}

/// One line per table row.
pub fn audit() -> Result<Vec<AuditLine>> {
    Ok(table()?
        .into_iter()
        .map(|e| {
            let actual = default_value(&e.key);
            let ok = actual.as_deref().is_some_and(|a| same(&e.key, &e.value, a));
            AuditLine {
                key: e.key,
                expected: e.value,
                actual,
                ok,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table() {
        let lines = audit().unwrap();
        assert_eq!(lines.len(), 11);
        for l in &lines {
            assert!(l.ok, "{l:?}");
        }
    }

    #[test]
    fn multiset_comparison() {
        assert!(same("lambda", "1,0.5", "0.5,1"));
        assert!(!same("channel_ladder", "1,2", "2,1"));
        assert!(!same("lr", "0.001", "0.01"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_table("k\tv\n").is_err());
        assert!(parse_table("key\tvalue\torigin\nlr\t1\n").is_err());
    }
}
