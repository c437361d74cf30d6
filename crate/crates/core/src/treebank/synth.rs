//! Rule-driven re-linearization of dependency trees.

use rand::Rng;
use tensorgrad::{mix64, rng_from_seed};

use super::tree::children;
use super::{RuleSet, Sentence, Token, Treebank};

/// Re-linearize `s` by placing every dependent left or right of its head
/// according to `rules`.
///
/// Children that land on the same side keep their original relative order,
/// and each subtree is emitted contiguously, so the output is projective.
/// The tree itself (heads, labels, tags) is unchanged up to re-indexing.
/// `s` must be a valid tree.
pub fn reorder_synthetic(s: &Sentence, rules: &RuleSet, seed: u64) -> Sentence {
    let mut rng = rng_from_seed(seed);
    let heads = s.heads();
    let kids = children(&heads);

    // Decide sides in a fixed pre-order walk so the draw sequence depends
    // only on the tree and the seed.
    let mut goes_left = vec![false; s.len() + 1];
    let mut stack: Vec<usize> = kids[0].iter().rev().copied().collect();
    while let Some(node) = stack.pop() {
        for &c in &kids[node] {
            let originally_left = c < node;
            let p = s.triple(c).and_then(|k| rules.get(&k));
            goes_left[c] = match p {
                Some(p) => rng.gen::<f64>() < p,
                None => originally_left,
            };
        }
        stack.extend(kids[node].iter().rev());
    }

    let mut order = Vec::with_capacity(s.len());
    for &root in &kids[0] {
        linearize(root, &kids, &goes_left, &mut order);
    }

    let mut new_pos = vec![0usize; s.len() + 1];
    for (i, &old) in order.iter().enumerate() {
        new_pos[old] = i + 1;
    }
    let tokens = order
        .iter()
        .enumerate()
        .map(|(i, &old)| {
            let t = &s.tokens[old - 1];
            Token {
                id: i + 1,
                form: t.form.clone(),
                upos: t.upos.clone(),
                head: new_pos[t.head],
                deprel: t.deprel.clone(),
            }
        })
        .collect();
    Sentence {
        tokens,
        language: s.language.clone(),
    }
}

fn linearize(node: usize, kids: &[Vec<usize>], goes_left: &[bool], out: &mut Vec<usize>) {
    for &c in kids[node].iter().filter(|&&c| goes_left[c]) {
        linearize(c, kids, goes_left, out);
    }
    out.push(node);
    for &c in kids[node].iter().filter(|&&c| !goes_left[c]) {
        linearize(c, kids, goes_left, out);
    }
}

/// Apply [`reorder_synthetic`] to every sentence, with per-sentence seeds
/// derived from `seed` and the sentence index.
pub fn reorder_treebank(tb: &Treebank, rules: &RuleSet, seed: u64, language: &str) -> Treebank {
    let sentences = tb
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| reorder_synthetic(s, rules, mix64(seed ^ mix64(i as u64))))
        .collect();
    Treebank::new(language, sentences)
}
