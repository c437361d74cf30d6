//! Random valid dependency trees for property tests.

use rand::seq::SliceRandom;
use rand::Rng;
use reorder::treebank::{Sentence, Token};
use tensorgrad::rng_from_seed;

pub const UPOS: [&str; 6] = ["NOUN", "VERB", "PRON", "ADJ", "ADP", "DET"];
pub const DEPRELS: [&str; 5] = ["nsubj", "obj", "amod", "case", "det"];

/// Attach tokens one at a time, in a shuffled order, to a token already in
/// the tree. Every tree shape, projective or not, can come out.
pub fn random_tree(len: usize, seed: u64) -> Sentence {
    let mut rng = rng_from_seed(seed);
    let mut ids: Vec<usize> = (1..=len).collect();
    ids.shuffle(&mut rng);
    let mut heads = vec![0; len + 1];
    for i in 1..len {
        heads[ids[i]] = ids[rng.gen_range(0..i)];
    }
    let tokens = (1..=len)
        .map(|id| {
            let root = heads[id] == 0;
            Token::new(
                id,
                &format!("w{}", rng.gen_range(0..20)),
                UPOS[rng.gen_range(0..UPOS.len())],
                heads[id],
                if root {
                    "root"
                } else {
                    DEPRELS[rng.gen_range(0..DEPRELS.len())]
                },
            )
        })
        .collect();
    Sentence::new(tokens)
}
