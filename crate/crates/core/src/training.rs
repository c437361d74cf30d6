//! Mini-batch Adam loop shared by every trainable model.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{accumulate_grads, rng_from_seed, sub_seed, Adam, AdamConfig, Binding, ParamStore, Tape, Var};

use crate::error::{Error, Result};

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            epochs: 50,
            batch_size: 32,
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Mean loss components over one epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub edge: f64,
    pub label: f64,
    pub order: f64,
}

/// Per-item loss with its parts for logging. Parts that do not apply are 0.
pub struct ItemLoss<'t> {
    pub total: Var<'t>,
    pub edge: f64,
    pub label: f64,
    pub order: f64,
}

impl<'t> ItemLoss<'t> {
    pub fn only(total: Var<'t>) -> Self {
        ItemLoss {
            total,
            edge: 0.0,
            label: 0.0,
            order: 0.0,
        }
    }
}

/// Something that can score one training item on a tape.
pub trait Objective {
    fn n_items(&self) -> usize;

    fn loss<'t>(&mut self, bind: &Binding<'t, '_>, item: usize, rng: &mut ChaCha8Rng) -> Result<ItemLoss<'t>>;

    /// Called after every epoch with the updated parameters.
    fn end_epoch(&mut self, _stats: &EpochStats, _params: &ParamStore) {}
}

/// Train `params` on `objective`. Item order is reshuffled each epoch from
/// the `data-order` sub-seed; dropout and similar draws use the `noise`
/// sub-seed. Gradients are averaged over each batch.
pub fn fit<O: Objective>(
    params: &mut ParamStore,
    objective: &mut O,
    cfg: &OptimConfig,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    let n = objective.n_items();
    if n == 0 {
        return Err(Error::EmptyTreebank);
    }
    let mut order_rng = rng_from_seed(sub_seed(seed, "data-order"));
    let mut noise_rng = rng_from_seed(sub_seed(seed, "noise"));
    let mut adam = Adam::new(cfg.adam(), params);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut stats = EpochStats {
            epoch,
            ..EpochStats::default()
        };
        for (batch_no, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut grads = params.zeros_like();
            for &item in batch {
                let tape = Tape::new();
                let bind = Binding::new(&tape, params);
                let loss = objective.loss(&bind, item, &mut noise_rng)?;
                let value = loss.total.item();
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_no,
                        loss: value,
                    });
                }
                stats.loss += value;
                stats.edge += loss.edge;
                stats.label += loss.label;
                stats.order += loss.order;
                let g = tape.backward(loss.total)?;
                accumulate_grads(&mut grads, &bind.gradients(&g));
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale_in_place(scale);
            }
            adam.step(params, &grads);
        }
        let inv = 1.0 / n as f64;
        stats.loss *= inv;
        stats.edge *= inv;
        stats.label *= inv;
        stats.order *= inv;
        log::debug!("epoch {epoch}: loss {:.6}", stats.loss);
        objective.end_epoch(&stats, params);
        log.push(stats);
    }
    Ok(log)
}
