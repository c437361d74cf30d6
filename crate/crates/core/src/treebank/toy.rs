//! A small probabilistic grammar for building toy treebanks.
//!
//! Trees are generated without word order, then linearized with a
//! [`RuleSet`]. [`english_rules`] gives an English-like source language;
//! other languages are obtained by flipping rules with [`flip`].

use rand::seq::SliceRandom;
use rand::Rng;
use tensorgrad::{rng_from_seed, sub_seed};

use super::{reorder_treebank, RuleSet, Sentence, Token, Treebank, TripleKey};

const NOUNS: &[&str] = &[
    "cat", "dog", "house", "river", "teacher", "student", "book", "city", "car", "tree", "garden", "letter", "table",
    "window", "child", "market", "song", "bridge", "doctor", "friend",
];
const PROPNS: &[&str] = &["Mary", "John", "Paris", "Tokyo", "Anna", "Oslo"];
const VERBS: &[&str] = &[
    "saw", "found", "made", "took", "gave", "wrote", "read", "opened", "liked", "built", "sold", "painted", "prepared",
    "visited",
];
const PRONS: &[&str] = &["she", "he", "it", "they", "we", "him", "her", "them"];
const DETS: &[&str] = &["the", "a", "this", "every"];
const ADJS: &[&str] = &["big", "small", "old", "red", "quiet", "happy", "new", "dark"];
const ADVS: &[&str] = &["quickly", "often", "very", "never", "soon", "there"];
const ADPS: &[&str] = &["in", "on", "with", "near", "from", "of"];
const AUXS: &[&str] = &["will", "can", "has"];
const NUMS: &[&str] = &["two", "three", "ten"];
const SCONJS: &[&str] = &["because", "when", "if"];

struct Builder<'r, R> {
    rng: &'r mut R,
    tokens: Vec<Token>,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, lexicon: &[&str], upos: &str, head: usize, deprel: &str) -> usize {
        let id = self.tokens.len() + 1;
        let form = *lexicon.choose(self.rng).expect("non-empty lexicon");
        self.tokens.push(Token::new(id, form, upos, head, deprel));
        id
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen::<f64>() < p
    }

    fn noun_phrase(&mut self, head: usize, deprel: &str, depth: usize, with_case: bool) {
        if self.chance(0.15) {
            let n = self.add(PROPNS, "PROPN", head, deprel);
            if with_case {
                self.add(ADPS, "ADP", n, "case");
            }
            return;
        }
        let n = self.add(NOUNS, "NOUN", head, deprel);
        if with_case {
            self.add(ADPS, "ADP", n, "case");
        }
        if self.chance(0.7) {
            self.add(DETS, "DET", n, "det");
        }
        if self.chance(0.1) {
            self.add(NUMS, "NUM", n, "nummod");
        }
        if self.chance(0.35) {
            let a = self.add(ADJS, "ADJ", n, "amod");
            if self.chance(0.15) {
                self.add(ADVS, "ADV", a, "advmod");
            }
        }
        if depth < 2 && self.chance(0.15) {
            self.noun_phrase(n, "nmod", depth + 1, true);
        }
    }

    fn argument(&mut self, head: usize, deprel: &str, pron_p: f64) {
        if self.chance(pron_p) {
            self.add(PRONS, "PRON", head, deprel);
        } else {
            self.noun_phrase(head, deprel, 0, false);
        }
    }

    fn clause(&mut self, head: usize, deprel: &str, depth: usize) -> usize {
        let v = self.add(VERBS, "VERB", head, deprel);
        if depth > 0 {
            self.add(SCONJS, "SCONJ", v, "mark");
        }
        if self.chance(0.9) {
            self.argument(v, "nsubj", 0.3);
        }
        if self.chance(0.25) {
            self.add(AUXS, "AUX", v, "aux");
        }
        if self.chance(0.65) {
            self.argument(v, "obj", 0.25);
        }
        if self.chance(0.35) {
            self.noun_phrase(v, "obl", 1, true);
        }
        if self.chance(0.3) {
            self.add(ADVS, "ADV", v, "advmod");
        }
        if depth == 0 && self.chance(0.12) {
            self.clause(v, "advcl", depth + 1);
        }
        v
    }
}

/// One unordered tree; token order is generation order, not a language.
fn raw_tree<R: Rng>(rng: &mut R) -> Sentence {
    let mut b = Builder {
        rng,
        tokens: Vec::new(),
    };
    let root = b.clause(0, "root", 0);
    b.add(&["."], "PUNCT", root, "punct");
    Sentence::new(b.tokens)
}

/// English-like word-order rules covering every triple the grammar emits.
pub fn english_rules() -> RuleSet {
    let mut rs = RuleSet::new();
    let mut put = |dep: &str, head: &str, rel: &str, p: f64| {
        rs.insert(TripleKey::new(dep, head, rel), p);
    };
    for dep in ["NOUN", "PRON", "PROPN"] {
        put(dep, "VERB", "nsubj", 1.0);
        put(dep, "VERB", "obj", 0.0);
    }
    for dep in ["NOUN", "PROPN"] {
        put(dep, "VERB", "obl", 0.1);
        put(dep, "NOUN", "nmod", 0.0);
        put("ADP", dep, "case", 1.0);
    }
    put("AUX", "VERB", "aux", 1.0);
    put("ADV", "VERB", "advmod", 0.3);
    put("VERB", "VERB", "advcl", 0.2);
    put("SCONJ", "VERB", "mark", 1.0);
    put("PUNCT", "VERB", "punct", 0.0);
    put("DET", "NOUN", "det", 1.0);
    put("ADJ", "NOUN", "amod", 1.0);
    put("NUM", "NOUN", "nummod", 1.0);
    put("ADV", "ADJ", "advmod", 1.0);
    rs
}

/// A verb-final language with postpositions and no optional choices:
/// nominal arguments and modifiers precede their heads, function words
/// and punctuation follow. Every `(dep UPOS, head UPOS)` pair has a single
/// direction.
pub fn verb_final_rules() -> RuleSet {
    let mut rs = RuleSet::new();
    let mut put = |dep: &str, head: &str, rel: &str, p: f64| {
        rs.insert(TripleKey::new(dep, head, rel), p);
    };
    for dep in ["NOUN", "PRON", "PROPN"] {
        put(dep, "VERB", "nsubj", 1.0);
        put(dep, "VERB", "obj", 1.0);
    }
    for dep in ["NOUN", "PROPN"] {
        put(dep, "VERB", "obl", 1.0);
        put(dep, "NOUN", "nmod", 1.0);
        put("ADP", dep, "case", 0.0);
    }
    put("AUX", "VERB", "aux", 0.0);
    put("ADV", "VERB", "advmod", 1.0);
    put("VERB", "VERB", "advcl", 1.0);
    put("SCONJ", "VERB", "mark", 0.0);
    put("PUNCT", "VERB", "punct", 0.0);
    put("DET", "NOUN", "det", 1.0);
    put("ADJ", "NOUN", "amod", 1.0);
    put("NUM", "NOUN", "nummod", 1.0);
    put("ADV", "ADJ", "advmod", 1.0);
    rs
}

/// Mirror the left-probability of each listed triple (`p -> 1 - p`).
pub fn flip(rules: &RuleSet, keys: &[TripleKey]) -> RuleSet {
    let mut out = rules.clone();
    for k in keys {
        if let Some(p) = rules.rules.get(k) {
            out.rules.insert(k.clone(), 1.0 - p);
        }
    }
    out
}

/// `n` random trees linearized under `rules`, labelled `language`.
pub fn generate(n: usize, rules: &RuleSet, seed: u64, language: &str) -> Treebank {
    let mut rng = rng_from_seed(sub_seed(seed, "toy-trees"));
    let raw = Treebank::new(language, (0..n).map(|_| raw_tree(&mut rng)).collect());
    reorder_treebank(&raw, rules, sub_seed(seed, "toy-order"), language)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::validate_tree;

    #[test]
    fn generated_trees_are_valid_and_covered() {
        let rules = english_rules();
        let tb = generate(200, &rules, 1, "en");
        assert_eq!(tb.len(), 200);
        for s in &tb.sentences {
            assert!(validate_tree(s).is_empty());
            for (dep, _) in s.edges() {
                let key = s.triple(dep).unwrap();
                assert!(rules.rules.contains_key(&key), "no rule for {key}");
            }
        }
        let avg = tb.n_tokens() as f64 / tb.len() as f64;
        assert!((4.0..16.0).contains(&avg), "average length {avg}");
    }

    #[test]
    fn deterministic_by_seed() {
        let rules = english_rules();
        assert_eq!(generate(20, &rules, 5, "en"), generate(20, &rules, 5, "en"));
        assert_ne!(generate(20, &rules, 5, "en"), generate(20, &rules, 6, "en"));
    }

    #[test]
    fn english_order_sample() {
        let rules = english_rules();
        let tb = generate(50, &rules, 2, "en");
        // determiners always precede their noun, punctuation ends the clause
        for s in &tb.sentences {
            for t in &s.tokens {
                if t.deprel == "det" {
                    assert!(t.id < t.head);
                }
            }
            assert_eq!(s.tokens.last().unwrap().upos, "PUNCT");
        }
    }
}
