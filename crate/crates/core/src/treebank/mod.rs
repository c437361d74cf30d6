//! Sentences, CoNLL-U I/O, tree validation, vocabularies and synthetic
//! re-linearization.

mod conllu;
mod rules;
mod synth;
pub mod toy;
mod tree;
mod vocab;

use serde::{Deserialize, Serialize};

pub use conllu::{parse_conllu, write_conllu, ParseError};
pub use rules::{RuleSet, RulesError};
pub use synth::{reorder_synthetic, reorder_treebank};
pub use tree::{children, validate_tree, Violation};
pub use vocab::{Index, Vocab, PAD, ROOT, UNK};

/// One syntactic word.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position.
    pub id: usize,
    pub form: String,
    pub upos: String,
    /// Head position, 0 for the virtual root.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    pub fn new(id: usize, form: &str, upos: &str, head: usize, deprel: &str) -> Self {
        Token {
            id,
            form: form.to_owned(),
            upos: upos.to_owned(),
            head,
            deprel: deprel.to_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub language: String,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            language: UNDETERMINED.to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Head of each token in order.
    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    pub fn upos(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.upos.as_str()).collect()
    }

    /// The dependency triple of token at 1-based position `id`, or `None`
    /// when it attaches to the virtual root.
    pub fn triple(&self, id: usize) -> Option<TripleKey> {
        let tok = &self.tokens[id - 1];
        if tok.head == 0 {
            return None;
        }
        Some(TripleKey::new(&tok.upos, &self.tokens[tok.head - 1].upos, &tok.deprel))
    }

    /// `(dependent, head)` pairs of all non-root edges, 1-based. Self
    /// loops, which only predicted trees can contain, are skipped.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.tokens
            .iter()
            .filter(|t| t.head != 0 && t.head != t.id)
            .map(|t| (t.id, t.head))
            .collect()
    }
}

/// Language code used when none is known.
pub const UNDETERMINED: &str = "und";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treebank {
    pub sentences: Vec<Sentence>,
    pub language: String,
}

impl Treebank {
    pub fn new(language: &str, mut sentences: Vec<Sentence>) -> Self {
        for s in &mut sentences {
            s.language = language.to_owned();
        }
        Treebank {
            sentences,
            language: language.to_owned(),
        }
    }

    pub fn with_language(self, language: &str) -> Self {
        Treebank::new(language, self.sentences)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Violations per sentence index, for sentences that are not trees.
    pub fn validate(&self) -> Vec<(usize, Vec<Violation>)> {
        self.sentences
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let v = validate_tree(s);
                (!v.is_empty()).then_some((i, v))
            })
            .collect()
    }
}

/// A `(dependent UPOS, head UPOS, relation)` key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleKey {
    pub dep_upos: String,
    pub head_upos: String,
    pub deprel: String,
}

impl TripleKey {
    pub fn new(dep_upos: &str, head_upos: &str, deprel: &str) -> Self {
        TripleKey {
            dep_upos: dep_upos.to_owned(),
            head_upos: head_upos.to_owned(),
            deprel: deprel.to_owned(),
        }
    }
}

impl std::fmt::Display for TripleKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({} <- {}, {})", self.dep_upos, self.head_upos, self.deprel)
    }
}
