use tensorgrad::{mix64, sub_seed};

use super::{check_edges, OrderPredictor, TeacherModel};
use crate::error::Result;
use crate::treebank::{RuleSet, Sentence, Treebank, TripleKey};
use crate::typology::triple_counts;

/// Uniform draws, a pure function of the seed, the tag sequence and the
/// edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandTeacher {
    pub seed: u64,
}

impl OrderPredictor for RandTeacher {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        check_edges(s.len(), edges)?;
        let tags = s.upos().join(" ");
        let base = sub_seed(sub_seed(self.seed, "rand-teacher"), &tags);
        Ok(edges
            .iter()
            .map(|&(d, h)| {
                let bits = mix64(base ^ mix64(((d as u64) << 32) | h as u64));
                (bits >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect())
    }
}

/// Looks up the target language's left frequency for each edge's triple.
/// Triples missing from the table get 0.5.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeurTeacher {
    pub table: RuleSet,
}

impl HeurTeacher {
    /// Left frequencies in `tb` of those `triples` that occur there.
    pub fn from_treebank(tb: &Treebank, triples: &[TripleKey]) -> Self {
        let counts = triple_counts([tb]);
        let mut table = RuleSet::new();
        for t in triples {
            if let Some(&(left, n)) = counts.get(t) {
                if n > 0 {
                    table.insert(t.clone(), left as f64 / n as f64);
                }
            }
        }
        HeurTeacher { table }
    }

    pub fn left_prob(&self, key: &TripleKey) -> f64 {
        self.table.get(key).unwrap_or(0.5)
    }
}

impl OrderPredictor for HeurTeacher {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        check_edges(s.len(), edges)?;
        Ok(edges
            .iter()
            .map(|&(d, h)| {
                let dep = &s.tokens[d - 1];
                let key = TripleKey::new(&dep.upos, &s.tokens[h - 1].upos, &dep.deprel);
                1.0 - self.left_prob(&key)
            })
            .collect())
    }
}

/// The three teachers behind one interface.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum TeacherVariant {
    Ours(TeacherModel),
    Rand(RandTeacher),
    Heur(HeurTeacher),
}

impl TeacherVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            TeacherVariant::Ours(_) => "ours",
            TeacherVariant::Rand(_) => "rand",
            TeacherVariant::Heur(_) => "heur",
        }
    }
}

impl OrderPredictor for TeacherVariant {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        match self {
            TeacherVariant::Ours(m) => m.predict(s, edges),
            TeacherVariant::Rand(r) => r.predict(s, edges),
            TeacherVariant::Heur(h) => h.predict(s, edges),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Token;

    fn sent() -> Sentence {
        Sentence::new(vec![
            Token::new(1, "les", "PRON", 2, "obj"),
            Token::new(2, "traiter", "VERB", 0, "root"),
            Token::new(3, "vite", "ADV", 2, "advmod"),
        ])
    }

    #[test]
    fn heur_returns_complement_of_left_frequency() {
        let mut table = RuleSet::new();
        table.insert(TripleKey::new("PRON", "VERB", "obj"), 0.9109);
        let h = HeurTeacher { table };
        let p = h.predict(&sent(), &[(1, 2), (3, 2)]).unwrap();
        assert!((p[0] - 0.0891).abs() < 1e-12);
        assert_eq!(p[1], 0.5);
    }

    #[test]
    fn heur_table_from_counts() {
        let tb = Treebank::new("fr", vec![sent(), sent()]);
        let keys = [
            TripleKey::new("PRON", "VERB", "obj"),
            TripleKey::new("ADV", "VERB", "advmod"),
            TripleKey::new("NOUN", "VERB", "nsubj"),
        ];
        let h = HeurTeacher::from_treebank(&tb, &keys);
        assert_eq!(h.table.len(), 2);
        assert_eq!(h.left_prob(&keys[0]), 1.0);
        assert_eq!(h.left_prob(&keys[1]), 0.0);
        assert_eq!(h.left_prob(&keys[2]), 0.5);
    }

    #[test]
    fn rand_is_reproducible_and_in_range() {
        let r = RandTeacher { seed: 17 };
        let edges = [(1, 2), (3, 2)];
        let a = r.predict(&sent(), &edges).unwrap();
        assert_eq!(a, r.predict(&sent(), &edges).unwrap());
        assert!(a.iter().all(|p| (0.0..1.0).contains(p)));
        assert_ne!(a, RandTeacher { seed: 18 }.predict(&sent(), &edges).unwrap());
    }
}
