//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha8 stream derived from the run seed and a
//! fixed stream id, so adding an evaluation pass never perturbs training draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STREAM_TRAIN: u64 = 0;
pub const STREAM_EVAL: u64 = 1;
pub const STREAM_OUTPUT: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_DATA: u64 = 4;
/// Exact target draws used as an evaluation reference.
pub const STREAM_REFERENCE: u64 = 5;
/// Particle streams for SGLD start here; particle `i` uses `STREAM_PARTICLE_BASE + i`.
pub const STREAM_PARTICLE_BASE: u64 = 1 << 32;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn fill_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_normal(rng, &mut v);
    v
}
