//! Biaffine dependency parser: embeddings, BiLSTM, four MLP heads and two
//! biaffine scorers, with a virtual root prepended as head candidate 0.

mod decode;
mod eval;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{rng_from_seed, sub_seed, Binding, Container, ParamStore, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::{dropout, BiLstm, Biaffine, Embedding, MlpHead};
use crate::treebank::{Sentence, Vocab, ROOT};

pub use decode::{decode_graph, decode_tree};
pub use eval::{attachment_scores, evaluate, Metrics};
pub use train::{train_parser, ParserObjective, ParserTrainConfig};

pub(crate) const PARSER_FORMAT: &str = "parser";
pub(crate) const FORMAT_VERSION: u32 = 1;

/// Architecture sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub edge_mlp: usize,
    pub label_mlp: usize,
    pub dropout: f64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            word_dim: 100,
            pos_dim: 50,
            lstm_hidden: 100,
            lstm_layers: 2,
            edge_mlp: 100,
            label_mlp: 100,
            dropout: 0.0,
        }
    }
}

/// Word and tag indices with the virtual root at position 0.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
}

impl EncodedSentence {
    pub fn new(vocab: &Vocab, s: &Sentence) -> Self {
        let mut words = Vec::with_capacity(s.len() + 1);
        let mut pos = Vec::with_capacity(s.len() + 1);
        words.push(ROOT);
        pos.push(ROOT);
        for t in &s.tokens {
            words.push(vocab.word(&t.form));
            pos.push(vocab.pos(&t.upos));
        }
        EncodedSentence { words, pos }
    }

    /// Sentence length without the root.
    pub fn len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gold heads and label classes; labels missing from the vocabulary are
/// `None` and excluded from the label loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldTree {
    pub heads: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl GoldTree {
    pub fn new(vocab: &Vocab, s: &Sentence) -> Self {
        GoldTree {
            heads: s.heads(),
            labels: s.tokens.iter().map(|t| vocab.deprel(&t.deprel)).collect(),
        }
    }
}

/// Recorded scores for one sentence.
pub struct ParserScores<'t> {
    /// Encoder states `[(L+1) x 2h]`, root first.
    pub states: Var<'t>,
    /// `[L x (L+1)]`: row `j-1` holds head scores for dependent `j`.
    pub edge: Var<'t>,
    pub label_dep: Var<'t>,
    pub label_head: Var<'t>,
}

/// Loss and its two parts.
pub struct ParserLoss<'t> {
    pub total: Var<'t>,
    pub edge: Var<'t>,
    pub label: Var<'t>,
}

/// The network structure; parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParserNet {
    pub embed: Embedding,
    pub lstm: BiLstm,
    pub edge_head: MlpHead,
    pub edge_dep: MlpHead,
    pub label_head: MlpHead,
    pub label_dep: MlpHead,
    pub edge: Biaffine,
    pub label: Biaffine,
    pub dropout: f64,
}

impl ParserNet {
    pub fn new<R: Rng>(params: &mut ParamStore, cfg: &ParserConfig, vocab: &Vocab, rng: &mut R) -> Self {
        let embed = Embedding::new(
            params,
            "parser.embed",
            Some(vocab.words.len()),
            cfg.word_dim,
            vocab.upos.len(),
            cfg.pos_dim,
            rng,
        );
        let lstm = BiLstm::new(
            params,
            "parser.lstm",
            embed.output_dim(),
            cfg.lstm_hidden,
            cfg.lstm_layers,
            rng,
        );
        let r = lstm.output_dim();
        let edge_head = MlpHead::new(params, "parser.edge_head", r, cfg.edge_mlp, rng);
        let edge_dep = MlpHead::new(params, "parser.edge_dep", r, cfg.edge_mlp, rng);
        let label_head = MlpHead::new(params, "parser.label_head", r, cfg.label_mlp, rng);
        let label_dep = MlpHead::new(params, "parser.label_dep", r, cfg.label_mlp, rng);
        let edge = Biaffine::new(params, "parser.edge", cfg.edge_mlp, cfg.edge_mlp, 1, rng);
        let label = Biaffine::new(
            params,
            "parser.label",
            cfg.label_mlp,
            cfg.label_mlp,
            vocab.n_labels().max(1),
            rng,
        );
        ParserNet {
            embed,
            lstm,
            edge_head,
            edge_dep,
            label_head,
            label_dep,
            edge,
            label,
            dropout: cfg.dropout,
        }
    }

    /// Contextual states for root + tokens. `noise` enables dropout.
    pub fn encode<'t, R: Rng>(
        &self,
        bind: &Binding<'t, '_>,
        input: &EncodedSentence,
        noise: Option<&mut R>,
    ) -> Result<Var<'t>> {
        if input.is_empty() {
            return Err(Error::EmptySentence);
        }
        let mut e = self.embed.forward(bind, &input.words, &input.pos)?;
        match noise {
            Some(rng) if self.dropout > 0.0 => {
                e = dropout(e, self.dropout, rng)?;
                let r = self.lstm.forward(bind, e)?;
                Ok(dropout(r, self.dropout, rng)?)
            }
            _ => Ok(self.lstm.forward(bind, e)?),
        }
    }

    pub fn scores<'t>(&self, bind: &Binding<'t, '_>, states: Var<'t>) -> Result<ParserScores<'t>> {
        let n = states.shape()[0] - 1;
        let edge_dep = self.edge_dep.forward(bind, states.slice_rows(1, n)?)?;
        let edge_head = self.edge_head.forward(bind, states)?;
        let edge = self.edge.score_pairs(bind, edge_dep, edge_head)?;
        Ok(ParserScores {
            states,
            edge,
            label_dep: self.label_dep.forward(bind, states)?,
            label_head: self.label_head.forward(bind, states)?,
        })
    }

    /// Label scores `[n x k]` for dependents `deps` attached to `heads`
    /// (positions in `0..=L`).
    pub fn label_scores_at<'t>(
        &self,
        bind: &Binding<'t, '_>,
        scores: &ParserScores<'t>,
        deps: &[usize],
        heads: &[usize],
    ) -> Result<Var<'t>> {
        let d = scores.label_dep.gather_rows(deps)?;
        let h = scores.label_head.gather_rows(heads)?;
        Ok(self.label.score_rows(bind, d, h)?)
    }

    /// Edge BCE over all `(head, dependent)` pairs with the gold adjacency
    /// as targets, plus `lambda1` times label cross-entropy over gold edges.
    pub fn loss<'t>(
        &self,
        bind: &Binding<'t, '_>,
        scores: &ParserScores<'t>,
        gold: &GoldTree,
        lambda1: f64,
    ) -> Result<ParserLoss<'t>> {
        let n = gold.heads.len();
        let mut targets = Tensor::zeros(&[n, n + 1]);
        for (j, &h) in gold.heads.iter().enumerate() {
            targets.data_mut()[j * (n + 1) + h] = 1.0;
        }
        let edge = scores.edge.bce_with_logits(&targets)?;

        let (mut deps, mut heads, mut classes) = (Vec::new(), Vec::new(), Vec::new());
        for (j, (&h, l)) in gold.heads.iter().zip(&gold.labels).enumerate() {
            if let Some(c) = l {
                deps.push(j + 1);
                heads.push(h);
                classes.push(*c);
            }
        }
        let label = if classes.is_empty() {
            bind.tape().scalar(0.0)
        } else {
            self.label_scores_at(bind, scores, &deps, &heads)?
                .cross_entropy(&classes)?
        };
        let total = edge.add(&label.scale(lambda1))?;
        Ok(ParserLoss { total, edge, label })
    }

    /// Scores and decoded tree without recording gradients.
    pub fn predict(&self, params: &ParamStore, input: &EncodedSentence) -> Result<ParseOutput> {
        let tape = Tape::new();
        let bind = Binding::new(&tape, params);
        let states = self.encode::<rand_chacha::ChaCha8Rng>(&bind, input, None)?;
        let scores = self.scores(&bind, states)?;
        let edge = scores.edge.value();
        let label_dep = scores.label_dep.value();
        let label_dep = Tensor::new(
            &[input.len(), label_dep.cols()],
            label_dep.data()[label_dep.cols()..].to_vec(),
        )?;
        let labels = self.label.score_all(params, &label_dep, &scores.label_head.value())?;
        let (heads, label_ids) = decode_tree(&edge, &labels);
        Ok(ParseOutput {
            edge,
            labels,
            heads,
            label_ids,
        })
    }
}

/// Scores and decoded output for one sentence of length `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseOutput {
    /// `[L x (L+1)]`; see [`ParseOutput::edge_score`].
    pub edge: Tensor,
    /// `[L x (L+1) x k]`.
    pub labels: Tensor,
    /// Predicted head per token, in `0..=L`.
    pub heads: Vec<usize>,
    /// Predicted label class per token.
    pub label_ids: Vec<usize>,
}

impl ParseOutput {
    /// Score of `head -> dep` (`head` in `0..=L`, `dep` in `1..=L`).
    pub fn edge_score(&self, head: usize, dep: usize) -> f64 {
        self.edge.get2(dep - 1, head)
    }

    pub fn label_scores(&self, head: usize, dep: usize) -> &[f64] {
        let (n1, k) = (self.labels.shape()[1], self.labels.shape()[2]);
        let base = ((dep - 1) * n1 + head) * k;
        &self.labels.data()[base..base + k]
    }
}

#[derive(Serialize, Deserialize)]
struct ParserMeta {
    format: String,
    version: u32,
    config: ParserConfig,
    vocab: Vocab,
}

/// A parser with its vocabulary and parameters.
#[derive(Clone, Debug)]
pub struct ParserModel {
    pub config: ParserConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub net: ParserNet,
}

impl ParserModel {
    pub fn new(config: ParserConfig, vocab: Vocab, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut rng = rng_from_seed(sub_seed(seed, "init"));
        let net = ParserNet::new(&mut params, &config, &vocab, &mut rng);
        ParserModel {
            config,
            vocab,
            params,
            net,
        }
    }

    pub fn encode(&self, s: &Sentence) -> EncodedSentence {
        EncodedSentence::new(&self.vocab, s)
    }

    pub fn score_sentence(&self, s: &Sentence) -> Result<ParseOutput> {
        self.net.predict(&self.params, &self.encode(s))
    }

    /// Copy of `s` with predicted heads and labels.
    pub fn parse(&self, s: &Sentence) -> Result<Sentence> {
        let out = self.score_sentence(s)?;
        let mut parsed = s.clone();
        for (t, (&h, &l)) in parsed.tokens.iter_mut().zip(out.heads.iter().zip(&out.label_ids)) {
            t.head = h;
            t.deprel = self
                .vocab
                .deprels
                .items()
                .get(l)
                .cloned()
                .unwrap_or_else(|| "dep".into());
        }
        Ok(parsed)
    }

    pub fn to_container(&self) -> Result<Container> {
        let meta = ParserMeta {
            format: PARSER_FORMAT.into(),
            version: FORMAT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        Ok(Container::from_params(serde_json::to_string(&meta)?, &self.params))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta: ParserMeta = serde_json::from_str(&c.metadata)?;
        if meta.format != PARSER_FORMAT {
            return Err(Error::Format(format!(
                "expected a parser model, found {:?}",
                meta.format
            )));
        }
        if meta.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported parser version {}", meta.version)));
        }
        let mut model = ParserModel::new(meta.config, meta.vocab, 0);
        c.load_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_container()?.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        ParserModel::from_container(&Container::read(&bytes[..])?)
    }
}
