use rand::Rng;
use tensorgrad::{init_tensor, Binding, Init, ParamId, ParamStore, Tensor, TensorError, Var};

use super::zeros;

/// One LSTM direction. Gates are packed `[input, forget, cell, output]`
/// along the columns of `w_in` (`[in x 4h]`), `w_rec` (`[h x 4h]`) and
/// `bias` (`[4h]`).
#[derive(Clone, Debug)]
pub struct LstmDirection {
    pub w_in: ParamId,
    pub w_rec: ParamId,
    pub bias: ParamId,
    hidden: usize,
}

impl LstmDirection {
    fn new<R: Rng>(params: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_in = params.add(
            format!("{prefix}.w_in"),
            init_tensor(&[input, 4 * hidden], Init::Xavier, rng),
        );
        let w_rec = params.add(
            format!("{prefix}.w_rec"),
            init_tensor(&[hidden, 4 * hidden], Init::Xavier, rng),
        );
        let mut b = Tensor::zeros(&[4 * hidden]);
        // forget-gate bias starts at 1
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        let bias = params.add(format!("{prefix}.bias"), b);
        LstmDirection {
            w_in,
            w_rec,
            bias,
            hidden,
        }
    }

    /// Hidden states `[T x h]` in input order, scanning forwards or
    /// backwards.
    fn forward<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>, reverse: bool) -> Result<Var<'t>, TensorError> {
        let tape = bind.tape();
        let steps = x.shape()[0];
        let h = self.hidden;
        let projected = x.matmul(&bind.get(self.w_in))?.add_row(&bind.get(self.bias))?;
        let w_rec = bind.get(self.w_rec);
        let mut state = zeros(tape, 1, h);
        let mut cell = zeros(tape, 1, h);
        let mut outputs = Vec::with_capacity(steps);
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..steps).rev())
        } else {
            Box::new(0..steps)
        };
        for t in order {
            let gates = projected.slice_rows(t, 1)?.add(&state.matmul(&w_rec)?)?;
            let i = gates.slice_cols(0, h)?.sigmoid();
            let f = gates.slice_cols(h, h)?.sigmoid();
            let g = gates.slice_cols(2 * h, h)?.tanh();
            let o = gates.slice_cols(3 * h, h)?.sigmoid();
            cell = f.mul(&cell)?.add(&i.mul(&g)?)?;
            state = o.mul(&cell.tanh())?;
            outputs.push(state);
        }
        if reverse {
            outputs.reverse();
        }
        tape.concat_rows(&outputs)
    }
}

/// Stacked bidirectional LSTM; each layer outputs `forward ++ backward`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmDirection, LstmDirection)>,
    hidden: usize,
}

impl BiLstm {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        n_layers: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        let mut width = input;
        for l in 0..n_layers {
            let fwd = LstmDirection::new(params, &format!("{prefix}.{l}.fwd"), width, hidden, rng);
            let bwd = LstmDirection::new(params, &format!("{prefix}.{l}.bwd"), width, hidden, rng);
            layers.push((fwd, bwd));
            width = 2 * hidden;
        }
        BiLstm { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `[L x 2h]` for a non-empty `[L x in]` input.
    pub fn forward<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let mut cur = x;
        for (fwd, bwd) in &self.layers {
            let f = fwd.forward(bind, cur, false)?;
            let b = bwd.forward(bind, cur, true)?;
            cur = bind.tape().concat_cols(&[f, b])?;
        }
        Ok(cur)
    }
}
