use serde::{Deserialize, Serialize};

use super::ParserModel;
use crate::error::Result;
use crate::treebank::{Sentence, Treebank};

/// Attachment scores. Punctuation counts like any other token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub uas: f64,
    pub las: f64,
    pub n_tokens: usize,
}

/// Scores `predicted` against `gold`, sentence by sentence.
pub fn attachment_scores<'a>(pairs: impl IntoIterator<Item = (&'a Sentence, &'a Sentence)>) -> Metrics {
    let (mut n, mut heads, mut labeled) = (0usize, 0usize, 0usize);
    for (pred, gold) in pairs {
        for (p, g) in pred.tokens.iter().zip(&gold.tokens) {
            n += 1;
            if p.head == g.head {
                heads += 1;
                if p.deprel == g.deprel {
                    labeled += 1;
                }
            }
        }
    }
    if n == 0 {
        return Metrics::default();
    }
    Metrics {
        uas: heads as f64 / n as f64,
        las: labeled as f64 / n as f64,
        n_tokens: n,
    }
}

pub fn evaluate(model: &ParserModel, tb: &Treebank) -> Result<Metrics> {
    let parsed = tb
        .sentences
        .iter()
        .map(|s| model.parse(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(attachment_scores(parsed.iter().zip(&tb.sentences)))
}
