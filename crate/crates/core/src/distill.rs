//! The student: a parser with an order head on its BiLSTM states, trained
//! with an extra order loss against a teacher (or against source order).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{rng_from_seed, sub_seed, Binding, Container, ParamStore, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::{Biaffine, MlpHead};
use crate::order::{check_edges, order_label, OrderPredictor};
use crate::parser::{EncodedSentence, GoldTree, ParseOutput, ParserModel, ParserNet, ParserTrainConfig};
use crate::training::{fit, EpochStats, ItemLoss, Objective};
use crate::treebank::{Sentence, Treebank, Vocab};

const STUDENT_FORMAT: &str = "student";
const FORMAT_VERSION: u32 = 1;

/// What the order head is trained against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillVariant {
    /// Squared error to the teacher's probabilities.
    #[default]
    Kd,
    /// Cross-entropy to the source sentence's own directions.
    Wol,
    /// Cross-entropy to the teacher's thresholded decisions.
    Pseudo,
}

impl DistillVariant {
    pub fn needs_teacher(self) -> bool {
        self != DistillVariant::Wol
    }
}

impl fmt::Display for DistillVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistillVariant::Kd => "kd",
            DistillVariant::Wol => "wol",
            DistillVariant::Pseudo => "pseudo",
        })
    }
}

impl FromStr for DistillVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kd" => Ok(DistillVariant::Kd),
            "wol" => Ok(DistillVariant::Wol),
            "pseudo" => Ok(DistillVariant::Pseudo),
            other => Err(format!("unknown variant {other:?} (expected kd, wol or pseudo)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub parser: ParserTrainConfig,
    pub lambda2: f64,
    pub variant: DistillVariant,
    pub order_mlp: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            parser: ParserTrainConfig::default(),
            lambda2: 0.001,
            variant: DistillVariant::Kd,
            order_mlp: 100,
        }
    }
}

/// `edge + lambda1 * label + lambda2 * order`.
pub fn total_loss(edge: f64, label: f64, order: f64, lambda1: f64, lambda2: f64) -> f64 {
    edge + lambda1 * label + lambda2 * order
}

/// Mean squared difference between teacher and student probabilities.
pub fn kd_loss(teacher: &[f64], student: &[f64]) -> Result<f64> {
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch(teacher.len(), student.len()));
    }
    if teacher.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = teacher.iter().zip(student).map(|(t, s)| (t - s) * (t - s)).sum();
    Ok(sq / teacher.len() as f64)
}

/// Order MLPs and scorer reading the parser's encoder states.
#[derive(Clone, Debug)]
pub struct OrderHeads {
    pub order_head: MlpHead,
    pub order_dep: MlpHead,
    pub order: Biaffine,
}

impl OrderHeads {
    pub fn new<R: Rng>(params: &mut ParamStore, input: usize, width: usize, rng: &mut R) -> Self {
        OrderHeads {
            order_head: MlpHead::new(params, "order.head", input, width, rng),
            order_dep: MlpHead::new(params, "order.dep", input, width, rng),
            order: Biaffine::new(params, "order.scorer", width, width, 1, rng),
        }
    }

    /// Logits `[n x 1]` for `(dep, head)` edges; `states` has the root in
    /// row 0 so positions index rows directly.
    pub fn logits<'t>(&self, bind: &Binding<'t, '_>, states: Var<'t>, edges: &[(usize, usize)]) -> Result<Var<'t>> {
        let deps: Vec<usize> = edges.iter().map(|&(d, _)| d).collect();
        let heads: Vec<usize> = edges.iter().map(|&(_, h)| h).collect();
        let hd = self.order_dep.forward(bind, states)?.gather_rows(&deps)?;
        let hh = self.order_head.forward(bind, states)?.gather_rows(&heads)?;
        Ok(self.order.score_rows(bind, hd, hh)?)
    }
}

/// Order loss on `[n x 1]` logits: squared error between probabilities
/// and soft targets for `kd`, binary cross-entropy otherwise.
pub fn order_loss<'t>(logits: Var<'t>, targets: &Tensor, variant: DistillVariant) -> Result<Var<'t>> {
    Ok(match variant {
        DistillVariant::Kd => logits.sigmoid().mse(&logits.tape().leaf(targets.clone()))?,
        DistillVariant::Wol | DistillVariant::Pseudo => logits.bce_with_logits(targets)?,
    })
}

/// Parser scores plus order probabilities at the requested edges.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentOutput {
    pub parse: ParseOutput,
    pub edges: Vec<(usize, usize)>,
    pub order_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StudentMeta {
    format: String,
    version: u32,
    config: DistillConfig,
    vocab: Vocab,
    parser_params: usize,
}

#[derive(Clone, Debug)]
pub struct StudentModel {
    pub config: DistillConfig,
    pub vocab: Vocab,
    /// Parser parameters first, then the order head's.
    pub params: ParamStore,
    pub parser: ParserNet,
    pub order: OrderHeads,
    parser_params: usize,
}

impl StudentModel {
    /// Parser weights come from the same stream as
    /// [`ParserModel::new`]; the order head draws from its own.
    pub fn new(config: DistillConfig, vocab: Vocab, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut rng = rng_from_seed(sub_seed(seed, "init"));
        let parser = ParserNet::new(&mut params, &config.parser.model, &vocab, &mut rng);
        let parser_params = params.len();
        let mut order_rng = rng_from_seed(sub_seed(seed, "order-init"));
        let order = OrderHeads::new(&mut params, parser.lstm.output_dim(), config.order_mlp, &mut order_rng);
        StudentModel {
            config,
            vocab,
            params,
            parser,
            order,
            parser_params,
        }
    }

    /// The parser alone, without the order head.
    pub fn to_parser(&self) -> ParserModel {
        let mut params = ParamStore::new();
        for (name, t) in self.params.iter().take(self.parser_params) {
            params.add(name, t.clone());
        }
        ParserModel {
            config: self.config.parser.model.clone(),
            vocab: self.vocab.clone(),
            params,
            net: self.parser.clone(),
        }
    }

    /// Parser output and order probabilities at `s`'s own non-root edges.
    pub fn forward(&self, s: &Sentence) -> Result<StudentOutput> {
        let edges = s.edges();
        let order_probs = self.predict(s, &edges)?;
        let parse = self
            .parser
            .predict(&self.params, &EncodedSentence::new(&self.vocab, s))?;
        Ok(StudentOutput {
            parse,
            edges,
            order_probs,
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let meta = StudentMeta {
            format: STUDENT_FORMAT.into(),
            version: FORMAT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            parser_params: self.parser_params,
        };
        Ok(Container::from_params(serde_json::to_string(&meta)?, &self.params))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta: StudentMeta = serde_json::from_str(&c.metadata)?;
        if meta.format != STUDENT_FORMAT {
            return Err(Error::Format(format!(
                "expected a student model, found {:?}",
                meta.format
            )));
        }
        if meta.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported student version {}", meta.version)));
        }
        let mut model = StudentModel::new(meta.config, meta.vocab, 0);
        if model.parser_params != meta.parser_params {
            return Err(Error::Format("parser parameter count mismatch".into()));
        }
        c.load_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_container()?.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        StudentModel::from_container(&Container::read(&bytes[..])?)
    }
}

impl OrderPredictor for StudentModel {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        check_edges(s.len(), edges)?;
        if edges.is_empty() {
            return Ok(Vec::new());
        }
        let tape = Tape::new();
        let bind = Binding::new(&tape, &self.params);
        let input = EncodedSentence::new(&self.vocab, s);
        let states = self.parser.encode::<ChaCha8Rng>(&bind, &input, None)?;
        Ok(self.order.logits(&bind, states, edges)?.sigmoid().value().into_data())
    }
}

struct StudentItem {
    input: EncodedSentence,
    gold: GoldTree,
    edges: Vec<(usize, usize)>,
    targets: Option<Tensor>,
}

struct StudentObjective<'a, F> {
    parser: &'a ParserNet,
    order: &'a OrderHeads,
    items: Vec<StudentItem>,
    lambda1: f64,
    lambda2: f64,
    variant: DistillVariant,
    skeleton: &'a mut StudentModel,
    on_epoch: F,
}

impl<F: FnMut(&StudentModel, &EpochStats)> Objective for StudentObjective<'_, F> {
    fn n_items(&self) -> usize {
        self.items.len()
    }

    fn loss<'t>(&mut self, bind: &Binding<'t, '_>, item: usize, rng: &mut ChaCha8Rng) -> Result<ItemLoss<'t>> {
        let it = &self.items[item];
        let states = self.parser.encode(bind, &it.input, Some(rng))?;
        let scores = self.parser.scores(bind, states)?;
        let p = self.parser.loss(bind, &scores, &it.gold, self.lambda1)?;
        let order = match &it.targets {
            Some(y) => {
                let logits = self.order.logits(bind, states, &it.edges)?;
                order_loss(logits, y, self.variant)?
            }
            None => bind.tape().scalar(0.0),
        };
        let total = p.total.add(&order.scale(self.lambda2))?;
        Ok(ItemLoss {
            total,
            edge: p.edge.item(),
            label: p.label.item(),
            order: order.item(),
        })
    }

    fn end_epoch(&mut self, stats: &EpochStats, params: &ParamStore) {
        log::info!(
            "student epoch {} loss {:.6} order {:.6}",
            stats.epoch,
            stats.loss,
            stats.order
        );
        self.skeleton.params = params.clone();
        (self.on_epoch)(self.skeleton, stats);
    }
}

/// Order targets for one source sentence under `variant`.
fn order_targets(
    variant: DistillVariant,
    teacher: Option<&dyn OrderPredictor>,
    s: &Sentence,
    edges: &[(usize, usize)],
) -> Result<Vec<f64>> {
    match (variant, teacher) {
        (DistillVariant::Wol, _) => Ok(edges.iter().map(|&(d, h)| f64::from(order_label(d, h))).collect()),
        (DistillVariant::Kd, Some(t)) => t.predict(s, edges),
        (DistillVariant::Pseudo, Some(t)) => Ok(t
            .predict(s, edges)?
            .into_iter()
            .map(|p| if p >= 0.5 { 1.0 } else { 0.0 })
            .collect()),
        (v, None) => Err(Error::MissingTeacher(match v {
            DistillVariant::Kd => "kd",
            _ => "pseudo",
        })),
    }
}

pub fn train_student(
    source: &Treebank,
    teacher: Option<&dyn OrderPredictor>,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(StudentModel, Vec<EpochStats>)> {
    train_student_with(source, teacher, cfg, seed, |_, _| {})
}

/// As [`train_student`], calling `on_epoch` with the model after every epoch.
pub fn train_student_with<F: FnMut(&StudentModel, &EpochStats)>(
    source: &Treebank,
    teacher: Option<&dyn OrderPredictor>,
    cfg: &DistillConfig,
    seed: u64,
    on_epoch: F,
) -> Result<(StudentModel, Vec<EpochStats>)> {
    if source.sentences.is_empty() {
        return Err(Error::EmptyTreebank);
    }
    let vocab = Vocab::build(source, cfg.parser.min_freq);
    let mut model = StudentModel::new(cfg.clone(), vocab, seed);
    let items = source
        .sentences
        .iter()
        .map(|s| {
            let edges = s.edges();
            let targets = if edges.is_empty() {
                None
            } else {
                let y = order_targets(cfg.variant, teacher, s, &edges)?;
                Some(Tensor::new(&[edges.len(), 1], y)?)
            };
            Ok(StudentItem {
                input: EncodedSentence::new(&model.vocab, s),
                gold: GoldTree::new(&model.vocab, s),
                edges,
                targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (parser, order) = (model.parser.clone(), model.order.clone());
    let mut skeleton = model.clone();
    let mut objective = StudentObjective {
        parser: &parser,
        order: &order,
        items,
        lambda1: cfg.parser.lambda1,
        lambda2: cfg.lambda2,
        variant: cfg.variant,
        skeleton: &mut skeleton,
        on_epoch,
    };
    let log = fit(&mut model.params, &mut objective, &cfg.parser.optim, seed)?;
    Ok((model, log))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::parser::ParserConfig;
    use crate::treebank::Token;
    use rand::Rng;

    fn sent() -> Sentence {
        Sentence::new(vec![
            Token::new(1, "she", "PRON", 2, "nsubj"),
            Token::new(2, "saw", "VERB", 0, "root"),
            Token::new(3, "him", "PRON", 2, "obj"),
        ])
    }

    fn tiny() -> DistillConfig {
        let mut cfg = DistillConfig {
            order_mlp: 3,
            ..DistillConfig::default()
        };
        cfg.parser.model = ParserConfig {
            word_dim: 3,
            pos_dim: 2,
            lstm_hidden: 2,
            lstm_layers: 1,
            edge_mlp: 3,
            label_mlp: 2,
            dropout: 0.0,
        };
        cfg
    }

    fn model(seed: u64) -> StudentModel {
        let tb = Treebank::new("en", vec![sent()]);
        StudentModel::new(tiny(), Vocab::build(&tb, 1), seed)
    }

    #[test]
    fn kd_loss_cases() {
        assert_eq!(kd_loss(&[0.3, 0.9], &[0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(kd_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(kd_loss(&[1.0], &[0.0, 1.0]).is_err());
        let mut rng = rng_from_seed(3);
        let t: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
        let s: Vec<f64> = (0..20).map(|_| rng.gen()).collect();
        let mut want = 0.0;
        for i in 0..20 {
            want += (t[i] - s[i]).powi(2) / 20.0;
        }
        assert!((kd_loss(&t, &s).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn total_loss_arithmetic() {
        assert!((total_loss(1.0, 2.0, 3.0, 1.0, 0.001) - 3.003).abs() < 1e-15);
        assert_eq!(total_loss(1.0, 2.0, 3.0, 1.0, 0.0), 3.0);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [DistillVariant::Kd, DistillVariant::Wol, DistillVariant::Pseudo] {
            assert_eq!(v.to_string().parse::<DistillVariant>().unwrap(), v);
        }
        assert!("soft".parse::<DistillVariant>().is_err());
    }

    #[test]
    fn zeroed_order_head_gives_sigmoid_bias() {
        let mut m = model(1);
        for id in [
            m.order.order_head.weight,
            m.order.order_dep.weight,
            m.order.order.weight,
        ] {
            m.params.get_mut(id).data_mut().fill(0.0);
        }
        m.params.get_mut(m.order.order.bias).data_mut()[0] = -1.2;
        let out = m.forward(&sent()).unwrap();
        let want = 1.0 / (1.0 + 1.2f64.exp());
        assert_eq!(out.edges, vec![(1, 2), (3, 2)]);
        assert!(out.order_probs.iter().all(|p| (p - want).abs() < 1e-15));
    }

    #[test]
    fn parser_path_matches_parser_model() {
        let m = model(2);
        let p = m.to_parser();
        assert_eq!(m.forward(&sent()).unwrap().parse, p.score_sentence(&sent()).unwrap());
        let standalone = ParserModel::new(m.config.parser.model.clone(), m.vocab.clone(), 2);
        for ((n1, a), (n2, b)) in standalone.params.iter().zip(p.params.iter()) {
            assert_eq!((n1, a), (n2, b));
        }
        assert_eq!(standalone.params.len(), p.params.len());
    }

    /// Manual evaluation of the order scorer on the encoder states.
    #[test]
    fn order_head_hand_evaluation() {
        let mut m = model(3);
        let mut rng = rng_from_seed(4);
        for id in [m.order.order.bias, m.order.order_head.bias, m.order.order_dep.bias] {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let s = sent();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &m.params);
        let input = EncodedSentence::new(&m.vocab, &s);
        let r = m.parser.encode::<ChaCha8Rng>(&bind, &input, None).unwrap().value();
        let p = |id| m.params.get(id).clone();
        let mlp = |x: &[f64], head: &MlpHead| -> Vec<f64> {
            let (w, b) = (p(head.weight), p(head.bias));
            (0..w.cols())
                .map(|c| (b.data()[c] + x.iter().enumerate().map(|(i, v)| v * w.get2(i, c)).sum::<f64>()).tanh())
                .collect()
        };
        let got = m.predict(&s, &[(1, 2), (3, 2), (2, 3)]).unwrap();
        for (k, (d, h)) in [(1, 2), (3, 2), (2, 3)].into_iter().enumerate() {
            let hd = mlp(r.row(d), &m.order.order_dep);
            let hh = mlp(r.row(h), &m.order.order_head);
            let u = p(m.order.order.weight);
            let mut s = p(m.order.order.bias).data()[0];
            for a in 0..3 {
                for c in 0..3 {
                    s += hd[a] * u.data()[a * 3 + c] * hh[c];
                }
            }
            assert!((got[k] - 1.0 / (1.0 + (-s).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_teacher_is_an_error() {
        let tb = Treebank::new("en", vec![sent()]);
        let cfg = tiny();
        assert!(matches!(
            train_student(&tb, None, &cfg, 1),
            Err(Error::MissingTeacher("kd"))
        ));
    }

    #[test]
    fn round_trip() {
        let m = model(5);
        let bytes = m.to_container().unwrap().to_bytes();
        let back = StudentModel::from_container(&Container::read(&bytes[..]).unwrap()).unwrap();
        assert_eq!(back.forward(&sent()).unwrap(), m.forward(&sent()).unwrap());
        assert_eq!(back.config, m.config);
    }
}
