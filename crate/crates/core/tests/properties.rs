#[path = "common/trees.rs"]
mod trees;

use proptest::prelude::*;
use reorder::order::{extract_instances, HeurTeacher};
use reorder::treebank::{
    parse_conllu, reorder_synthetic, toy, validate_tree, write_conllu, RuleSet, Sentence, Treebank, TripleKey,
};
use reorder::typology::{
    order_feature, pearson, predicted_order_frequency, select_triples, triple_counts, word_order_distance,
    TypologyVector,
};
use trees::{random_tree, DEPRELS, UPOS};

fn triples_of(s: &Sentence) -> Vec<TripleKey> {
    let mut v: Vec<TripleKey> = s.edges().iter().filter_map(|&(d, _)| s.triple(d)).collect();
    v.sort();
    v
}

fn forms_of(s: &Sentence) -> Vec<String> {
    let mut v: Vec<String> = s.tokens.iter().map(|t| t.form.clone()).collect();
    v.sort();
    v
}

fn random_rules(probs: &[f64]) -> RuleSet {
    let mut rs = RuleSet::new();
    let mut i = 0;
    for d in UPOS {
        for h in UPOS {
            for r in DEPRELS {
                rs.insert(TripleKey::new(d, h, r), probs[i % probs.len()]);
                i += 1;
            }
        }
    }
    rs
}

fn vector(values: Vec<f64>) -> TypologyVector {
    let n = values.len();
    TypologyVector {
        language: "x".into(),
        triples: (0..n)
            .map(|i| TripleKey::new("NOUN", "VERB", &format!("r{i}")))
            .collect(),
        values,
        support: vec![1; n],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conllu_round_trip(lens in prop::collection::vec(1usize..12, 1..5), seed in any::<u64>()) {
        let sentences = lens.iter().enumerate().map(|(i, &n)| random_tree(n, seed ^ i as u64)).collect();
        let tb = Treebank::new("und", sentences);
        prop_assert_eq!(parse_conllu(&write_conllu(&tb)).unwrap(), tb);
    }

    #[test]
    fn order_labels_follow_positions(len in 1usize..15, seed in any::<u64>()) {
        let s = random_tree(len, seed);
        let tb = Treebank::new("und", vec![s]);
        let inst = extract_instances(&tb);
        prop_assert_eq!(inst.len(), len - 1);
        for i in inst {
            prop_assert!(i.dep != i.head);
            prop_assert_eq!(i.y == 0, i.dep < i.head);
        }
    }

    #[test]
    fn reordering_keeps_the_tree(
        len in 1usize..15,
        seed in any::<u64>(),
        probs in prop::collection::vec(0.0f64..=1.0, 1..8),
    ) {
        let s = random_tree(len, seed);
        let rules = random_rules(&probs);
        let out = reorder_synthetic(&s, &rules, seed.wrapping_add(1));
        prop_assert!(validate_tree(&out).is_empty());
        prop_assert_eq!(triples_of(&out), triples_of(&s));
        prop_assert_eq!(forms_of(&out), forms_of(&s));
        prop_assert_eq!(&out, &reorder_synthetic(&s, &rules, seed.wrapping_add(1)));
        // subtrees come out contiguous: no two edges cross
        let edges = out.edges();
        for &(a, b) in &edges {
            let (l1, r1) = (a.min(b), a.max(b));
            for &(c, d) in &edges {
                let (l2, r2) = (c.min(d), c.max(d));
                prop_assert!(!(l1 < l2 && l2 < r1 && r1 < r2));
            }
        }
    }

    #[test]
    fn distance_is_a_metric(
        raw in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..60),
        normalize in any::<bool>(),
    ) {
        let a = vector(raw.iter().map(|t| t.0).collect());
        let b = vector(raw.iter().map(|t| t.1).collect());
        let c = vector(raw.iter().map(|t| t.2).collect());
        let d = |x: &TypologyVector, y: &TypologyVector| word_order_distance(x, y, normalize).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        if d(&a, &b) == 0.0 {
            prop_assert_eq!(&a.values, &b.values);
        }
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        if let Ok((r, p)) = pearson(&x, &y) {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&p));
            let y2: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
            let (r2, _) = pearson(&x, &y2).unwrap();
            prop_assert!((r - r2).abs() < 1e-9);
            let (r3, _) = pearson(&y, &x).unwrap();
            prop_assert!((r - r3).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_matches_a_full_sort(lens in prop::collection::vec(2usize..10, 1..8), seed in any::<u64>(), k in 1usize..20) {
        let sentences = lens.iter().enumerate().map(|(i, &n)| random_tree(n, seed ^ i as u64)).collect();
        let tb = Treebank::new("und", sentences);
        let mut all: Vec<(usize, TripleKey)> = triple_counts([&tb]).into_iter().map(|(t, (_, n))| (n, t)).collect();
        all.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let expected: Vec<TripleKey> = all.into_iter().take(k).map(|(_, t)| t).collect();
        prop_assert_eq!(select_triples(&[&tb], k), expected);
    }
}

#[test]
fn synthetic_frequencies_match_their_rules() {
    let rules = toy::english_rules();
    let tb = toy::generate(400, &rules, 11, "en");
    let triples = select_triples(&[&tb], 52);
    let f = order_feature(&tb, &triples);
    let edges: usize = f.support.iter().sum();
    assert!(edges >= 1000, "only {edges} edges");
    for ((t, &v), &n) in f.triples.iter().zip(&f.values).zip(&f.support) {
        // sparse triples carry too much sampling noise to compare
        if n >= 100 {
            let p = rules.get(t).unwrap();
            assert!((v - p).abs() <= 0.05, "{t:?}: {v} vs rule {p} over {n} edges");
        }
    }
}

#[test]
fn heur_teacher_predicts_its_own_table() {
    let tb = toy::generate(200, &toy::english_rules(), 12, "en");
    let triples = select_triples(&[&tb], 52);
    let heur = HeurTeacher::from_treebank(&tb, &triples);
    let predicted = predicted_order_frequency(&heur, &tb, &triples).unwrap();
    let observed = order_feature(&tb, &triples);
    for (p, o) in predicted.values.iter().zip(&observed.values) {
        assert!((p - o).abs() < 1e-12);
    }
}
