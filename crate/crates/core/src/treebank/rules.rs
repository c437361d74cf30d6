use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::TripleKey;

#[derive(Debug, Error, PartialEq)]
pub enum RulesError {
    #[error("line {line}: expected `DEPUPOS HEADUPOS DEPREL LEFTPROB`")]
    Fields { line: usize },
    #[error("line {line}: probability {value:?} is not a number in [0, 1]")]
    Probability { line: usize, value: String },
}

/// Left-placement probability per dependency triple.
///
/// Triples without a rule fall back to `default_left` when set, and keep
/// their original side otherwise. The text form is one
/// `DEPUPOS HEADUPOS DEPREL LEFTPROB` rule per line; `* * * p` sets the
/// default, `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    pub rules: BTreeMap<TripleKey, f64>,
    pub default_left: Option<f64>,
}

impl RuleSet {
    pub fn new() -> Self {
        RuleSet::default()
    }

    pub fn insert(&mut self, key: TripleKey, left_prob: f64) {
        assert!((0.0..=1.0).contains(&left_prob), "probability out of range");
        self.rules.insert(key, left_prob);
    }

    pub fn get(&self, key: &TripleKey) -> Option<f64> {
        self.rules.get(key).copied().or(self.default_left)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, RulesError> {
        let mut rs = RuleSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [dep, head, rel, p] = fields[..] else {
                return Err(RulesError::Fields { line: i + 1 });
            };
            let prob: f64 = p
                .parse()
                .ok()
                .filter(|v: &f64| (0.0..=1.0).contains(v))
                .ok_or_else(|| RulesError::Probability {
                    line: i + 1,
                    value: p.to_owned(),
                })?;
            if (dep, head, rel) == ("*", "*", "*") {
                rs.default_left = Some(prob);
            } else {
                rs.rules.insert(TripleKey::new(dep, head, rel), prob);
            }
        }
        Ok(rs)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = self.default_left {
            writeln!(out, "* * * {p}").unwrap();
        }
        for (k, p) in &self.rules {
            writeln!(out, "{} {} {} {p}", k.dep_upos, k.head_upos, k.deprel).unwrap();
        }
        out
    }
}
