//! Neural building blocks shared by the parser, teacher and student.
//!
//! Layers own [`ParamId`](tensorgrad::ParamId)s into a
//! [`ParamStore`](tensorgrad::ParamStore) and run on a
//! [`Binding`](tensorgrad::Binding), so forward passes never mutate them.

mod attention;
mod biaffine;
mod embedding;
mod lstm;
mod mlp;

use rand::Rng;
use tensorgrad::{Tape, Tensor, TensorError, Var};

pub use attention::{SelfAttention, SelfAttentionLayer};
pub use biaffine::Biaffine;
pub use embedding::Embedding;
pub use lstm::{BiLstm, LstmDirection};
pub use mlp::MlpHead;

/// Inverted dropout: zero entries with probability `p`, scale survivors by
/// `1 / (1 - p)`. A no-op when `p == 0`.
pub fn dropout<'t, R: Rng>(x: Var<'t>, p: f64, rng: &mut R) -> Result<Var<'t>, TensorError> {
    if p <= 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let keep = 1.0 - p;
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = x.tape().leaf(Tensor::new(&shape, mask)?);
    x.mul(&mask)
}

/// A `rows x cols` zero matrix on `tape`.
pub(crate) fn zeros<'t>(tape: &'t Tape, rows: usize, cols: usize) -> Var<'t> {
    tape.leaf(Tensor::zeros(&[rows, cols]))
}
