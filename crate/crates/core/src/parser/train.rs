use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{Binding, ParamStore};

use super::{EncodedSentence, GoldTree, ParserConfig, ParserModel, ParserNet};
use crate::error::{Error, Result};
use crate::training::{fit, EpochStats, ItemLoss, Objective, OptimConfig};
use crate::treebank::{Treebank, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserTrainConfig {
    pub model: ParserConfig,
    pub optim: OptimConfig,
    pub lambda1: f64,
    pub min_freq: usize,
}

impl Default for ParserTrainConfig {
    fn default() -> Self {
        ParserTrainConfig {
            model: ParserConfig::default(),
            optim: OptimConfig::default(),
            lambda1: 1.0,
            min_freq: 1,
        }
    }
}

/// Edge + label loss over a fixed set of sentences.
pub struct ParserObjective<'a> {
    pub net: &'a ParserNet,
    pub inputs: Vec<EncodedSentence>,
    pub gold: Vec<GoldTree>,
    pub lambda1: f64,
}

impl<'a> ParserObjective<'a> {
    pub fn new(net: &'a ParserNet, vocab: &Vocab, tb: &Treebank, lambda1: f64) -> Self {
        ParserObjective {
            net,
            inputs: tb.sentences.iter().map(|s| EncodedSentence::new(vocab, s)).collect(),
            gold: tb.sentences.iter().map(|s| GoldTree::new(vocab, s)).collect(),
            lambda1,
        }
    }
}

impl Objective for ParserObjective<'_> {
    fn n_items(&self) -> usize {
        self.inputs.len()
    }

    fn loss<'t>(&mut self, bind: &Binding<'t, '_>, item: usize, rng: &mut ChaCha8Rng) -> Result<ItemLoss<'t>> {
        let states = self.net.encode(bind, &self.inputs[item], Some(rng))?;
        let scores = self.net.scores(bind, states)?;
        let l = self.net.loss(bind, &scores, &self.gold[item], self.lambda1)?;
        Ok(ItemLoss {
            total: l.total,
            edge: l.edge.item(),
            label: l.label.item(),
            order: 0.0,
        })
    }

    fn end_epoch(&mut self, stats: &EpochStats, _params: &ParamStore) {
        log::info!("parser epoch {} loss {:.6}", stats.epoch, stats.loss);
    }
}

/// Build a vocabulary from `tb` and train a parser on it.
pub fn train_parser(tb: &Treebank, cfg: &ParserTrainConfig, seed: u64) -> Result<(ParserModel, Vec<EpochStats>)> {
    if tb.sentences.is_empty() {
        return Err(Error::EmptyTreebank);
    }
    let vocab = Vocab::build(tb, cfg.min_freq);
    let mut model = ParserModel::new(cfg.model.clone(), vocab, seed);
    let net = model.net.clone();
    let mut objective = ParserObjective::new(&net, &model.vocab, tb, cfg.lambda1);
    let log = fit(&mut model.params, &mut objective, &cfg.optim, seed)?;
    Ok((model, log))
}
