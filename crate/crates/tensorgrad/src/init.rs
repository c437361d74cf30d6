//! Parameter initialization and seed plumbing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform on `[-a, a]`; `a = 0` gives zeros.
    Uniform(f64),
    /// Glorot uniform with bound `sqrt(6 / (fan_in + fan_out))`, where the
    /// fans are the last two dimensions.
    Xavier,
    Zeros,
}

/// Fan-in/fan-out of a shape, taken from its trailing two dimensions.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        _ => (shape[shape.len() - 2], shape[shape.len() - 1]),
    }
}

pub fn init_tensor<R: Rng>(shape: &[usize], scheme: Init, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let bound = match scheme {
        Init::Zeros | Init::Uniform(0.0) => return Tensor::zeros(shape),
        Init::Uniform(a) => a,
        Init::Xavier => {
            let (fan_in, fan_out) = fans(shape);
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        }
    };
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

/// Seeded initialization.
pub fn init_params(shape: &[usize], scheme: Init, seed: u64) -> Tensor {
    init_tensor(shape, scheme, &mut rng_from_seed(seed))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a named sub-seed, e.g. `sub_seed(seed, "init")`. Stable across
/// platforms and releases.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(seed ^ mix64(h))
}
