use rand_chacha::ChaCha8Rng;
use reorder::distill::{order_loss, train_student, train_student_with, DistillConfig, DistillVariant, StudentModel};
use reorder::order::{order_label, HeurTeacher, OrderPredictor};
use reorder::parser::{train_parser, EncodedSentence, GoldTree, ParserConfig};
use reorder::training::OptimConfig;
use reorder::treebank::{toy, Treebank, Vocab};
use reorder::typology::select_triples;
use tensorgrad::{Binding, Tape, Tensor};

fn config(variant: DistillVariant, epochs: usize) -> DistillConfig {
    let mut cfg = DistillConfig {
        variant,
        order_mlp: 32,
        ..DistillConfig::default()
    };
    cfg.parser.model = ParserConfig {
        word_dim: 16,
        pos_dim: 16,
        lstm_hidden: 24,
        lstm_layers: 1,
        edge_mlp: 24,
        label_mlp: 16,
        dropout: 0.0,
    };
    cfg.parser.optim = OptimConfig {
        epochs,
        batch_size: 8,
        lr: 2e-3,
        ..OptimConfig::default()
    };
    cfg
}

/// Mean absolute gap between two predictors over every edge of `tb`.
fn mean_gap(a: &dyn OrderPredictor, b: &dyn OrderPredictor, tb: &Treebank) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in &tb.sentences {
        let edges = s.edges();
        if edges.is_empty() {
            continue;
        }
        for (p, q) in a.predict(s, &edges).unwrap().iter().zip(b.predict(s, &edges).unwrap()) {
            sum += (p - q).abs();
            n += 1;
        }
    }
    sum / n as f64
}

#[test]
fn kd_student_approaches_the_teacher() {
    let source = toy::generate(80, &toy::english_rules(), 1, "en");
    let heldout = toy::generate(40, &toy::english_rules(), 2, "en");
    let target = toy::generate(200, &toy::verb_final_rules(), 3, "vf");
    let teacher = HeurTeacher::from_treebank(&target, &select_triples(&[&source, &target], 52));
    let mut cfg = config(DistillVariant::Kd, 4);
    cfg.parser.optim.lr = 1e-3;
    let untrained = StudentModel::new(cfg.clone(), Vocab::build(&source, 1), 7);
    let mut gaps = vec![mean_gap(&untrained, &teacher, &heldout)];
    train_student_with(&source, Some(&teacher), &cfg, 7, |m, _| {
        gaps.push(mean_gap(m, &teacher, &heldout));
    })
    .unwrap();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "gaps {gaps:?}");
    assert!(gaps[4] < gaps[0] - 0.1, "gaps {gaps:?}");
}

#[test]
fn wol_student_learns_source_directions() {
    let source = toy::generate(50, &toy::english_rules(), 4, "en");
    let (student, _) = train_student(&source, None, &config(DistillVariant::Wol, 30), 3).unwrap();
    let (mut ok, mut n) = (0usize, 0usize);
    for s in &source.sentences {
        let edges = s.edges();
        if edges.is_empty() {
            continue;
        }
        for (&(d, h), p) in edges.iter().zip(student.predict(s, &edges).unwrap()) {
            ok += usize::from(u8::from(p >= 0.5) == order_label(d, h));
            n += 1;
        }
    }
    let acc = ok as f64 / n as f64;
    assert!(acc > 0.9, "order accuracy {acc}");
}

#[test]
fn order_head_gradient_is_linear_in_lambda2() {
    let source = toy::generate(3, &toy::english_rules(), 5, "en");
    let s = &source.sentences[0];
    let cfg = config(DistillVariant::Wol, 1);
    let student = StudentModel::new(cfg, Vocab::build(&source, 1), 9);
    let enc = EncodedSentence::new(&student.vocab, s);
    let gold = GoldTree::new(&student.vocab, s);
    let edges = s.edges();
    let y = Tensor::new(
        &[edges.len(), 1],
        edges.iter().map(|&(d, h)| f64::from(order_label(d, h))).collect(),
    )
    .unwrap();
    let order_grads = |lambda2: f64| -> Vec<f64> {
        let tape = Tape::new();
        let bind = Binding::new(&tape, &student.params);
        let states = student.parser.encode::<ChaCha8Rng>(&bind, &enc, None).unwrap();
        let p = student
            .parser
            .loss(&bind, &student.parser.scores(&bind, states).unwrap(), &gold, 1.0)
            .unwrap();
        let o = order_loss(
            student.order.logits(&bind, states, &edges).unwrap(),
            &y,
            DistillVariant::Wol,
        )
        .unwrap();
        let grads = bind.gradients(&tape.backward(p.total.add(&o.scale(lambda2)).unwrap()).unwrap());
        student
            .params
            .ids()
            .filter(|&id| student.params.name(id).starts_with("order."))
            .flat_map(|id| grads[id.index()].data().to_vec())
            .collect()
    };
    let (g1, g3) = (order_grads(0.25), order_grads(0.75));
    assert!(g1.iter().any(|g| g.abs() > 1e-8));
    for (a, b) in g1.iter().zip(&g3) {
        assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert!(order_grads(0.0).iter().all(|&g| g == 0.0));
}

#[test]
fn zero_lambda2_reproduces_the_parser_run() {
    let source = toy::generate(20, &toy::english_rules(), 6, "en");
    let mut cfg = config(DistillVariant::Wol, 3);
    cfg.lambda2 = 0.0;
    let (_, parser_log) = train_parser(&source, &cfg.parser, 4).unwrap();
    let (student, student_log) = train_student(&source, None, &cfg, 4).unwrap();
    let bits = |log: &[reorder::training::EpochStats]| -> Vec<u64> { log.iter().map(|e| e.loss.to_bits()).collect() };
    assert_eq!(bits(&parser_log), bits(&student_log));
    let (parser, _) = train_parser(&source, &cfg.parser, 4).unwrap();
    assert_eq!(parser.params, student.to_parser().params);
}
