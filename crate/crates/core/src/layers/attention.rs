//! Transformer encoder layers without any positional signal.
//!
//! Nothing here depends on token positions, so permuting the input rows
//! permutes the output rows the same way.

use rand::Rng;
use tensorgrad::{init_tensor, Binding, Init, ParamId, ParamStore, Tensor, TensorError, Var};

const LN_EPS: f64 = 1e-5;

/// One post-norm encoder layer: multi-head scaled dot-product attention and
/// a ReLU feed-forward block, each wrapped in residual + layer norm.
#[derive(Clone, Debug)]
pub struct SelfAttentionLayer {
    pub query: (ParamId, ParamId),
    pub key: (ParamId, ParamId),
    pub value: (ParamId, ParamId),
    pub output: (ParamId, ParamId),
    pub ff_in: (ParamId, ParamId),
    pub ff_out: (ParamId, ParamId),
    pub norm1: (ParamId, ParamId),
    pub norm2: (ParamId, ParamId),
    heads: usize,
    head_dim: usize,
}

fn affine<R: Rng>(
    params: &mut ParamStore,
    name: String,
    input: usize,
    output: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let w = params.add(
        format!("{name}.weight"),
        init_tensor(&[input, output], Init::Xavier, rng),
    );
    let b = params.add(format!("{name}.bias"), Tensor::zeros(&[output]));
    (w, b)
}

fn apply<'t>(bind: &Binding<'t, '_>, x: Var<'t>, (w, b): (ParamId, ParamId)) -> Result<Var<'t>, TensorError> {
    x.matmul(&bind.get(w))?.add_row(&bind.get(b))
}

impl SelfAttentionLayer {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        model_dim: usize,
        heads: usize,
        head_dim: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Self {
        let inner = heads * head_dim;
        let mut norm = |name: &str| {
            (
                params.add(format!("{prefix}.{name}.gain"), Tensor::filled(&[model_dim], 1.0)),
                params.add(format!("{prefix}.{name}.shift"), Tensor::zeros(&[model_dim])),
            )
        };
        let norm1 = norm("norm1");
        let norm2 = norm("norm2");
        SelfAttentionLayer {
            query: affine(params, format!("{prefix}.query"), model_dim, inner, rng),
            key: affine(params, format!("{prefix}.key"), model_dim, inner, rng),
            value: affine(params, format!("{prefix}.value"), model_dim, inner, rng),
            output: affine(params, format!("{prefix}.output"), inner, model_dim, rng),
            ff_in: affine(params, format!("{prefix}.ff_in"), model_dim, ff_dim, rng),
            ff_out: affine(params, format!("{prefix}.ff_out"), ff_dim, model_dim, rng),
            norm1,
            norm2,
            heads,
            head_dim,
        }
    }

    /// Attention weights per head, `[L x L]` rows summing to one.
    pub fn attention_weights<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>) -> Result<Vec<Var<'t>>, TensorError> {
        let q = apply(bind, x, self.query)?;
        let k = apply(bind, x, self.key)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        (0..self.heads)
            .map(|h| {
                let qh = q.slice_cols(h * self.head_dim, self.head_dim)?;
                let kh = k.slice_cols(h * self.head_dim, self.head_dim)?;
                qh.matmul(&kh.transpose()?)?.scale(scale).softmax_rows()
            })
            .collect()
    }

    pub fn forward<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let tape = bind.tape();
        let v = apply(bind, x, self.value)?;
        let weights = self.attention_weights(bind, x)?;
        let mut mixed = Vec::with_capacity(self.heads);
        for (h, w) in weights.into_iter().enumerate() {
            let vh = v.slice_cols(h * self.head_dim, self.head_dim)?;
            mixed.push(w.matmul(&vh)?);
        }
        let attended = apply(bind, tape.concat_cols(&mixed)?, self.output)?;
        let z1 = norm(bind, x.add(&attended)?, self.norm1)?;
        let ff = apply(bind, apply(bind, z1, self.ff_in)?.relu(), self.ff_out)?;
        norm(bind, z1.add(&ff)?, self.norm2)
    }
}

fn norm<'t>(bind: &Binding<'t, '_>, x: Var<'t>, (gain, shift): (ParamId, ParamId)) -> Result<Var<'t>, TensorError> {
    x.layer_norm_rows(LN_EPS)?
        .mul_row(&bind.get(gain))?
        .add_row(&bind.get(shift))
}

/// A stack of [`SelfAttentionLayer`]s.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub layers: Vec<SelfAttentionLayer>,
}

impl SelfAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        model_dim: usize,
        n_layers: usize,
        heads: usize,
        head_dim: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                SelfAttentionLayer::new(
                    params,
                    &format!("{prefix}.{l}"),
                    model_dim,
                    heads,
                    head_dim,
                    ff_dim,
                    rng,
                )
            })
            .collect();
        SelfAttention { layers }
    }

    pub fn forward<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.layers.iter().try_fold(x, |h, layer| layer.forward(bind, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensorgrad::{rng_from_seed, Tape};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        init_tensor(shape, Init::Uniform(1.0), &mut rng_from_seed(seed))
    }

    #[test]
    fn permutation_equivariance() {
        let mut ps = ParamStore::new();
        let enc = SelfAttention::new(&mut ps, "enc", 6, 2, 2, 3, 8, &mut rng_from_seed(3));
        let x = random(&[5, 6], 4);
        let perm = [3, 0, 4, 1, 2];
        let mut px = Vec::new();
        for &p in &perm {
            px.extend_from_slice(x.row(p));
        }
        let px = Tensor::new(&[5, 6], px).unwrap();

        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let out = enc.forward(&bind, tape.leaf(x)).unwrap().value();
        let pout = enc.forward(&bind, tape.leaf(px)).unwrap().value();
        for (r, &p) in perm.iter().enumerate() {
            for c in 0..6 {
                assert!((pout.get2(r, c) - out.get2(p, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_position_attends_to_itself() {
        let mut ps = ParamStore::new();
        let layer = SelfAttentionLayer::new(&mut ps, "att", 4, 2, 2, 4, &mut rng_from_seed(1));
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        for w in layer.attention_weights(&bind, tape.leaf(random(&[1, 4], 2))).unwrap() {
            assert_eq!(w.value().data(), &[1.0]);
        }
    }

    /// Two positions, width 2, one head with identity projections: the
    /// attended vector is the softmax-weighted sum of the inputs.
    #[test]
    fn two_position_closed_form() {
        let mut ps = ParamStore::new();
        let layer = SelfAttentionLayer::new(&mut ps, "att", 2, 1, 2, 2, &mut rng_from_seed(1));
        for (w, b) in [layer.query, layer.key, layer.value] {
            *ps.get_mut(w) = Tensor::eye(2);
            ps.get_mut(b).data_mut().fill(0.0);
        }
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let w = layer.attention_weights(&bind, tape.leaf(x.clone())).unwrap()[0].value();

        let s = 1.0 / 2f64.sqrt();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * s;
        for r in 0..2 {
            let s0 = dot(x.row(r), x.row(0));
            let s1 = dot(x.row(r), x.row(1));
            let p0 = s0.exp() / (s0.exp() + s1.exp());
            assert!((w.get2(r, 0) - p0).abs() < 1e-12);
            assert!((w.get2(r, 1) - (1.0 - p0)).abs() < 1e-12);
        }
        // attended row 0 = p0 * x0 + (1 - p0) * x1
        let v = w.matmul(&x).unwrap();
        let p0 = w.get2(0, 0);
        assert!((v.get2(0, 1) - (1.0 - p0) * 2.0).abs() < 1e-12);
    }
}
