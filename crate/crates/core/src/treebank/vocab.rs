use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Treebank;

/// Reserved indices shared by the word and UPOS tables.
pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<root>"];

/// Dense string-to-index table.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Index {
    items: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for Index {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl From<Vec<String>> for Index {
    fn from(items: Vec<String>) -> Self {
        let lookup = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Index { items, lookup }
    }
}

impl From<Index> for Vec<String> {
    fn from(index: Index) -> Self {
        index.items
    }
}

impl Index {
    fn with_reserved() -> Self {
        Index::from(RESERVED.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    fn insert(&mut self, item: &str) -> usize {
        if let Some(&i) = self.lookup.get(item) {
            return i;
        }
        self.items.push(item.to_owned());
        self.lookup.insert(item.to_owned(), self.items.len() - 1);
        self.items.len() - 1
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.lookup.get(item).copied()
    }

    pub fn item(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Word, UPOS and relation tables. Words and UPOS reserve `PAD`, `UNK` and
/// `ROOT`; relations are dense from 0 and index label classes directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Index,
    pub upos: Index,
    pub deprels: Index,
}

impl Vocab {
    /// Words seen fewer than `min_freq` times are left out and map to `UNK`.
    /// Items are indexed in order of first occurrence.
    pub fn build(tb: &Treebank, min_freq: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        let mut upos = Index::with_reserved();
        let mut deprels = Index::default();
        for s in &tb.sentences {
            for t in &s.tokens {
                let c = counts.entry(t.form.as_str()).or_insert_with(|| {
                    order.push(t.form.as_str());
                    0
                });
                *c += 1;
                upos.insert(&t.upos);
                deprels.insert(&t.deprel);
            }
        }
        let mut words = Index::with_reserved();
        for w in order {
            if counts[w] >= min_freq {
                words.insert(w);
            }
        }
        Vocab { words, upos, deprels }
    }

    /// UPOS table alone, with the reserved entries.
    pub fn build_pos(tb: &Treebank) -> Index {
        let mut upos = Index::with_reserved();
        for t in tb.sentences.iter().flat_map(|s| &s.tokens) {
            upos.insert(&t.upos);
        }
        upos
    }

    pub fn word(&self, form: &str) -> usize {
        self.words.get(form).unwrap_or(UNK)
    }

    pub fn pos(&self, upos: &str) -> usize {
        self.upos.get(upos).unwrap_or(UNK)
    }

    pub fn deprel(&self, label: &str) -> Option<usize> {
        self.deprels.get(label)
    }

    pub fn n_labels(&self) -> usize {
        self.deprels.len()
    }
}
