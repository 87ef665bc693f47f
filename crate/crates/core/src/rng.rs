//! Seeded random streams.
//!
//! Every chain gets its own ChaCha8 stream selected by `(seed, chain_index)`,
//! so results do not depend on how chains are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Vector;

pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64, chain_index: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut Vector) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
