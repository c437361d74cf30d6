use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{rng_from_seed, sub_seed, Binding, Container, ParamStore, Tape, Tensor, Var};

use super::{check_edges, order_label, OrderPredictor};
use crate::error::{Error, Result};
use crate::layers::{Biaffine, Embedding, MlpHead, SelfAttention};
use crate::training::{fit, EpochStats, ItemLoss, Objective, OptimConfig};
use crate::treebank::{Index, Sentence, Treebank, Vocab, UNK};

const TEACHER_FORMAT: &str = "order-teacher";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub pos_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ff_dim: usize,
    pub mlp: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            pos_dim: 50,
            layers: 1,
            heads: 4,
            head_dim: 16,
            ff_dim: 100,
            mlp: 100,
        }
    }
}

/// POS embedding, order-free attention, two MLP heads and a scalar
/// biaffine order scorer.
#[derive(Clone, Debug)]
pub struct TeacherNet {
    pub embed: Embedding,
    pub encoder: SelfAttention,
    pub order_head: MlpHead,
    pub order_dep: MlpHead,
    pub order: Biaffine,
}

impl TeacherNet {
    pub fn new<R: Rng>(params: &mut ParamStore, cfg: &TeacherConfig, n_pos: usize, rng: &mut R) -> Self {
        let embed = Embedding::new(params, "teacher.embed", None, 0, n_pos, cfg.pos_dim, rng);
        let encoder = SelfAttention::new(
            params,
            "teacher.attn",
            cfg.pos_dim,
            cfg.layers,
            cfg.heads,
            cfg.head_dim,
            cfg.ff_dim,
            rng,
        );
        TeacherNet {
            embed,
            encoder,
            order_head: MlpHead::new(params, "teacher.order_head", cfg.pos_dim, cfg.mlp, rng),
            order_dep: MlpHead::new(params, "teacher.order_dep", cfg.pos_dim, cfg.mlp, rng),
            order: Biaffine::new(params, "teacher.order", cfg.mlp, cfg.mlp, 1, rng),
        }
    }

    /// Order logits `[n x 1]` for `(dep, head)` edges over the tag sequence
    /// `pos` (no root; positions 1-based).
    pub fn logits<'t>(&self, bind: &Binding<'t, '_>, pos: &[usize], edges: &[(usize, usize)]) -> Result<Var<'t>> {
        check_edges(pos.len(), edges)?;
        let z = self.encoder.forward(bind, self.embed.forward(bind, &[], pos)?)?;
        let deps: Vec<usize> = edges.iter().map(|&(d, _)| d - 1).collect();
        let heads: Vec<usize> = edges.iter().map(|&(_, h)| h - 1).collect();
        let hd = self.order_dep.forward(bind, z)?.gather_rows(&deps)?;
        let hh = self.order_head.forward(bind, z)?.gather_rows(&heads)?;
        Ok(self.order.score_rows(bind, hd, hh)?)
    }

    /// Mean binary cross-entropy of the logits against direction labels `y`.
    pub fn loss<'t>(
        &self,
        bind: &Binding<'t, '_>,
        pos: &[usize],
        edges: &[(usize, usize)],
        y: &Tensor,
    ) -> Result<Var<'t>> {
        Ok(self.logits(bind, pos, edges)?.bce_with_logits(y)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TeacherMeta {
    format: String,
    version: u32,
    config: TeacherConfig,
    upos: Index,
}

#[derive(Clone, Debug)]
pub struct TeacherModel {
    pub config: TeacherConfig,
    pub upos: Index,
    pub params: ParamStore,
    pub net: TeacherNet,
}

impl TeacherModel {
    pub fn new(config: TeacherConfig, upos: Index, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut rng = rng_from_seed(sub_seed(seed, "init"));
        let net = TeacherNet::new(&mut params, &config, upos.len(), &mut rng);
        TeacherModel {
            config,
            upos,
            params,
            net,
        }
    }

    pub fn encode(&self, s: &Sentence) -> Vec<usize> {
        s.tokens.iter().map(|t| self.upos.get(&t.upos).unwrap_or(UNK)).collect()
    }

    /// Probability that each dependent follows its head.
    pub fn forward(&self, pos: &[usize], edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        if edges.is_empty() {
            return Ok(Vec::new());
        }
        let tape = Tape::new();
        let bind = Binding::new(&tape, &self.params);
        let logits = self.net.logits(&bind, pos, edges)?;
        Ok(logits.sigmoid().value().into_data())
    }

    pub fn to_container(&self) -> Result<Container> {
        let meta = TeacherMeta {
            format: TEACHER_FORMAT.into(),
            version: FORMAT_VERSION,
            config: self.config.clone(),
            upos: self.upos.clone(),
        };
        Ok(Container::from_params(serde_json::to_string(&meta)?, &self.params))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta: TeacherMeta = serde_json::from_str(&c.metadata)?;
        if meta.format != TEACHER_FORMAT {
            return Err(Error::Format(format!(
                "expected an order teacher, found {:?}",
                meta.format
            )));
        }
        if meta.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported teacher version {}", meta.version)));
        }
        let mut model = TeacherModel::new(meta.config, meta.upos, 0);
        c.load_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_container()?.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        TeacherModel::from_container(&Container::read(&bytes[..])?)
    }

    /// Share of edges whose thresholded prediction matches the observed
    /// direction.
    pub fn accuracy(&self, sentences: &[&Sentence]) -> Result<f64> {
        let (mut n, mut ok) = (0usize, 0usize);
        for s in sentences {
            let edges = s.edges();
            for (&(d, h), p) in edges.iter().zip(self.predict(s, &edges)?) {
                n += 1;
                ok += usize::from(u8::from(p >= 0.5) == order_label(d, h));
            }
        }
        Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
    }
}

impl OrderPredictor for TeacherModel {
    fn predict(&self, s: &Sentence, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.forward(&self.encode(s), edges)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherTrainConfig {
    pub model: TeacherConfig,
    pub optim: OptimConfig,
    /// Fraction of sentences held out for accuracy reporting.
    pub heldout: f64,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        TeacherTrainConfig {
            model: TeacherConfig::default(),
            optim: OptimConfig::default(),
            heldout: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub log: Vec<EpochStats>,
    pub n_train: usize,
    pub n_heldout: usize,
    pub train_accuracy: f64,
    /// `None` when nothing was held out.
    pub heldout_accuracy: Option<f64>,
}

/// Tag ids, edges and direction labels of one sentence.
type TeacherItem = (Vec<usize>, Vec<(usize, usize)>, Tensor);

struct TeacherObjective<'a> {
    net: &'a TeacherNet,
    items: Vec<TeacherItem>,
}

impl Objective for TeacherObjective<'_> {
    fn n_items(&self) -> usize {
        self.items.len()
    }

    fn loss<'t>(&mut self, bind: &Binding<'t, '_>, item: usize, _rng: &mut ChaCha8Rng) -> Result<ItemLoss<'t>> {
        let (pos, edges, y) = &self.items[item];
        let l = self.net.loss(bind, pos, edges, y)?;
        Ok(ItemLoss {
            total: l,
            edge: 0.0,
            label: 0.0,
            order: l.item(),
        })
    }
}

/// Train on the directions of every non-root edge of `tb`, whose heads may
/// be gold or predicted. A seeded share of sentences is held out.
pub fn train_teacher(tb: &Treebank, cfg: &TeacherTrainConfig, seed: u64) -> Result<(TeacherModel, TeacherReport)> {
    let mut usable: Vec<&Sentence> = tb.sentences.iter().filter(|s| !s.edges().is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::NoInstances);
    }
    usable.shuffle(&mut rng_from_seed(sub_seed(seed, "split")));
    let n_held = ((usable.len() as f64) * cfg.heldout.clamp(0.0, 1.0)).floor() as usize;
    let n_held = n_held.min(usable.len() - 1);
    let (held, train) = usable.split_at(n_held);

    let mut model = TeacherModel::new(cfg.model.clone(), Vocab::build_pos(tb), seed);
    let net = model.net.clone();
    let items = train
        .iter()
        .map(|s| {
            let edges = s.edges();
            let y: Vec<f64> = edges.iter().map(|&(d, h)| f64::from(order_label(d, h))).collect();
            let y = Tensor::new(&[edges.len(), 1], y)?;
            Ok((model.encode(s), edges, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut objective = TeacherObjective { net: &net, items };
    let log = fit(&mut model.params, &mut objective, &cfg.optim, seed)?;
    let report = TeacherReport {
        log,
        n_train: train.len(),
        n_heldout: held.len(),
        train_accuracy: model.accuracy(train)?,
        heldout_accuracy: if held.is_empty() {
            None
        } else {
            Some(model.accuracy(held)?)
        },
    };
    Ok((model, report))
}
