//! Small dense-tensor autodiff library: a recording [`Tape`], named
//! parameters, Adam, seeded initialization and a binary container format.

mod container;
mod error;
pub mod gradcheck;
mod init;
mod optim;
mod params;
mod tape;
mod tensor;

pub use container::Container;
pub use error::TensorError;
pub use init::{fans, init_params, init_tensor, mix64, rng_from_seed, sub_seed, Init};
pub use optim::{Adam, AdamConfig};
pub use params::{accumulate_grads, Binding, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
