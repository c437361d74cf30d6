//! Finite-difference checks for every layer and loss, shared by the core
//! tests and the acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reorder::distill::{order_loss, DistillConfig, DistillVariant, StudentModel};
use reorder::layers::{BiLstm, Biaffine, Embedding, MlpHead, SelfAttention};
use reorder::order::{order_label, TeacherConfig, TeacherModel};
use reorder::parser::{EncodedSentence, GoldTree, ParserConfig, ParserModel, ParserObjective};
use reorder::training::Objective;
use reorder::treebank::{toy, Sentence, Treebank, Vocab};
use tensorgrad::gradcheck::{check, GradCheckReport};
use tensorgrad::{init_tensor, rng_from_seed, Binding, Init, ParamStore, Tape, Tensor, Var};

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const SAMPLES: usize = 60;

/// Move every parameter off its initial value so zero biases and unit
/// gains do not hide mistakes.
fn jitter(params: &mut ParamStore, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
}

fn run(params: &ParamStore, seed: u64, f: impl for<'t> Fn(&Binding<'t, '_>) -> Var<'t>) -> GradCheckReport {
    let tape = Tape::new();
    let bind = Binding::new(&tape, params);
    let loss = f(&bind);
    let grads = tape.backward(loss).unwrap();
    let analytic = bind.gradients(&grads);
    check(params, &analytic, SAMPLES, H, &mut rng_from_seed(seed), |p| {
        let tape = Tape::new();
        f(&Binding::new(&tape, p)).item()
    })
}

/// Random linear read-out so every output entry reaches the loss.
fn readout<'t>(x: Var<'t>, seed: u64) -> Var<'t> {
    let w = init_tensor(&x.shape(), Init::Uniform(1.0), &mut rng_from_seed(seed));
    x.mul(&x.tape().leaf(w)).unwrap().sum()
}

fn input<'t>(tape: &'t Tape, rows: usize, cols: usize, seed: u64) -> Var<'t> {
    tape.leaf(init_tensor(&[rows, cols], Init::Uniform(1.0), &mut rng_from_seed(seed)))
}

fn corpus() -> Treebank {
    toy::generate(4, &toy::english_rules(), 5, "en")
}

fn tiny_parser() -> ParserConfig {
    ParserConfig {
        word_dim: 4,
        pos_dim: 3,
        lstm_hidden: 3,
        lstm_layers: 2,
        edge_mlp: 4,
        label_mlp: 3,
        dropout: 0.0,
    }
}

fn longest(tb: &Treebank) -> &Sentence {
    tb.sentences.iter().max_by_key(|s| s.len()).unwrap()
}

pub fn layer_cases() -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = rng_from_seed(1);
    let mut out = Vec::new();

    let mut ps = ParamStore::new();
    let emb = Embedding::new(&mut ps, "e", Some(7), 4, 5, 6, &mut rng);
    jitter(&mut ps, 2);
    out.push((
        "embedding",
        run(&ps, 3, |b| {
            readout(emb.forward(b, &[1, 6, 1, 3], &[0, 4, 4, 2]).unwrap(), 4)
        }),
    ));

    let mut ps = ParamStore::new();
    let mlp = MlpHead::new(&mut ps, "m", 8, 7, &mut rng);
    jitter(&mut ps, 5);
    out.push((
        "mlp",
        run(&ps, 6, |b| {
            readout(mlp.forward(b, input(b.tape(), 3, 8, 7)).unwrap(), 8)
        }),
    ));

    let mut ps = ParamStore::new();
    let pairs = Biaffine::new(&mut ps, "p", 4, 3, 1, &mut rng);
    let rows = Biaffine::new(&mut ps, "r", 4, 3, 3, &mut rng);
    jitter(&mut ps, 9);
    out.push((
        "biaffine",
        run(&ps, 10, |b| {
            let (d, h) = (input(b.tape(), 5, 4, 11), input(b.tape(), 5, 3, 12));
            let a = readout(pairs.score_pairs(b, d, h).unwrap(), 13);
            a.add(&readout(rows.score_rows(b, d, h).unwrap(), 14)).unwrap()
        }),
    ));

    let mut ps = ParamStore::new();
    let lstm = BiLstm::new(&mut ps, "l", 3, 2, 2, &mut rng);
    jitter(&mut ps, 15);
    out.push((
        "bilstm",
        run(&ps, 16, |b| {
            readout(lstm.forward(b, input(b.tape(), 4, 3, 17)).unwrap(), 18)
        }),
    ));

    let mut ps = ParamStore::new();
    let attn = SelfAttention::new(&mut ps, "a", 4, 2, 2, 3, 5, &mut rng);
    jitter(&mut ps, 19);
    out.push((
        "self-attention",
        run(&ps, 20, |b| {
            readout(attn.forward(b, input(b.tape(), 5, 4, 21)).unwrap(), 22)
        }),
    ));
    out
}

pub fn loss_cases() -> Vec<(&'static str, GradCheckReport)> {
    let tb = corpus();
    let s = longest(&tb);
    let mut out = Vec::new();

    let vocab = Vocab::build(&tb, 1);
    let mut parser = ParserModel::new(tiny_parser(), vocab.clone(), 3);
    jitter(&mut parser.params, 23);
    let enc = EncodedSentence::new(&vocab, s);
    let gold = GoldTree::new(&vocab, s);
    let net = parser.net.clone();
    out.push((
        "edge loss",
        run(&parser.params, 24, |b| {
            let states = net.encode::<ChaCha8Rng>(b, &enc, None).unwrap();
            net.loss(b, &net.scores(b, states).unwrap(), &gold, 1.0).unwrap().edge
        }),
    ));
    out.push((
        "label loss",
        run(&parser.params, 25, |b| {
            let states = net.encode::<ChaCha8Rng>(b, &enc, None).unwrap();
            net.loss(b, &net.scores(b, states).unwrap(), &gold, 1.0).unwrap().label
        }),
    ));
    let one = Treebank::new("en", vec![s.clone()]);
    out.push((
        "parser objective",
        run(&parser.params, 26, |b| {
            let mut obj = ParserObjective::new(&net, &vocab, &one, 0.7);
            obj.loss(b, 0, &mut rng_from_seed(0)).unwrap().total
        }),
    ));

    let edges = s.edges();
    let y: Vec<f64> = edges.iter().map(|&(d, h)| f64::from(order_label(d, h))).collect();
    let y = Tensor::new(&[edges.len(), 1], y).unwrap();

    let mut teacher = TeacherModel::new(
        TeacherConfig {
            pos_dim: 4,
            layers: 1,
            heads: 2,
            head_dim: 2,
            ff_dim: 5,
            mlp: 3,
        },
        Vocab::build_pos(&tb),
        4,
    );
    jitter(&mut teacher.params, 27);
    let pos = teacher.encode(s);
    let tnet = teacher.net.clone();
    out.push((
        "teacher order loss",
        run(&teacher.params, 28, |b| tnet.loss(b, &pos, &edges, &y).unwrap()),
    ));

    let soft = init_tensor(&[edges.len(), 1], Init::Uniform(0.5), &mut rng_from_seed(29)).map(|v| v + 0.5);
    for (name, variant, targets) in [
        ("distillation loss", DistillVariant::Kd, &soft),
        ("direction loss", DistillVariant::Wol, &y),
    ] {
        let mut cfg = DistillConfig {
            order_mlp: 3,
            lambda2: 0.5,
            variant,
            ..DistillConfig::default()
        };
        cfg.parser.model = tiny_parser();
        let mut student = StudentModel::new(cfg, vocab.clone(), 5);
        jitter(&mut student.params, 30);
        let (pnet, heads) = (student.parser.clone(), student.order.clone());
        out.push((
            name,
            run(&student.params, 31, |b| {
                let states = pnet.encode::<ChaCha8Rng>(b, &enc, None).unwrap();
                let p = pnet.loss(b, &pnet.scores(b, states).unwrap(), &gold, 1.0).unwrap();
                let o = order_loss(heads.logits(b, states, &edges).unwrap(), targets, variant).unwrap();
                p.total.add(&o.scale(0.5)).unwrap()
            }),
        ));
    }
    out
}
