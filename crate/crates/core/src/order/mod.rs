//! Word-order supervision: order instances, head finding with a source
//! parser, the POS-only order teacher and its baseline variants.

mod model;
mod variants;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::ParserModel;
use crate::treebank::{Sentence, Treebank};

pub use model::{train_teacher, TeacherConfig, TeacherModel, TeacherNet, TeacherReport, TeacherTrainConfig};
pub use variants::{HeurTeacher, RandTeacher, TeacherVariant};

/// Anything that assigns each `(dep, head)` edge (1-based positions) the
/// probability that the dependent sits to the right of its head.
pub trait OrderPredictor {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>>;
}

/// One dependency with its direction: `y == 0` when the dependent precedes
/// the head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderInstance {
    pub sentence: usize,
    pub dep: usize,
    pub head: usize,
    pub dep_upos: String,
    pub head_upos: String,
    pub y: u8,
}

pub fn order_label(dep: usize, head: usize) -> u8 {
    u8::from(dep > head)
}

/// One instance per non-root token.
pub fn extract_instances(tb: &Treebank) -> Vec<OrderInstance> {
    let mut out = Vec::new();
    for (i, s) in tb.sentences.iter().enumerate() {
        for (dep, head) in s.edges() {
            out.push(OrderInstance {
                sentence: i,
                dep,
                head,
                dep_upos: s.tokens[dep - 1].upos.clone(),
                head_upos: s.tokens[head - 1].upos.clone(),
                y: order_label(dep, head),
            });
        }
    }
    out
}

/// Target sentences re-headed by a parser, with the original heads kept.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadedTreebank {
    pub treebank: Treebank,
    pub gold_heads: Vec<Vec<usize>>,
}

impl HeadedTreebank {
    /// Fraction of tokens whose predicted head matches the original.
    pub fn head_accuracy(&self) -> f64 {
        let (mut n, mut ok) = (0usize, 0usize);
        for (s, gold) in self.treebank.sentences.iter().zip(&self.gold_heads) {
            for (t, &g) in s.tokens.iter().zip(gold) {
                n += 1;
                ok += usize::from(t.head == g);
            }
        }
        if n == 0 {
            0.0
        } else {
            ok as f64 / n as f64
        }
    }
}

/// Replace heads and labels with `parser`'s predictions.
pub fn find_heads(parser: &ParserModel, tb: &Treebank) -> Result<HeadedTreebank> {
    let sentences = tb
        .sentences
        .iter()
        .map(|s| parser.parse(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(HeadedTreebank {
        treebank: Treebank::new(&tb.language, sentences),
        gold_heads: tb.sentences.iter().map(Sentence::heads).collect(),
    })
}

/// Rejects edges outside `1..=len`, self loops and root attachments.
pub(crate) fn check_edges(len: usize, edges: &[(usize, usize)]) -> Result<()> {
    for &(dep, head) in edges {
        if dep == 0 || head == 0 || dep > len || head > len || dep == head {
            return Err(Error::EdgeOutOfRange { dep, head, len });
        }
    }
    Ok(())
}
