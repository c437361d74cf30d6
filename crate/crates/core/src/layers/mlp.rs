use rand::Rng;
use tensorgrad::{init_tensor, Binding, Init, ParamId, ParamStore, Tensor, TensorError, Var};

/// `tanh(x W + b)`: one dimension-reducing transform.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub weight: ParamId,
    pub bias: ParamId,
    out_dim: usize,
}

impl MlpHead {
    pub fn new<R: Rng>(params: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let weight = params.add(
            format!("{prefix}.weight"),
            init_tensor(&[input, output], Init::Xavier, rng),
        );
        let bias = params.add(format!("{prefix}.bias"), Tensor::zeros(&[output]));
        MlpHead {
            weight,
            bias,
            out_dim: output,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward<'t>(&self, bind: &Binding<'t, '_>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        Ok(x.matmul(&bind.get(self.weight))?.add_row(&bind.get(self.bias))?.tanh())
    }
}
