//! Deterministic seed derivation.
//!
//! Every random decision in the pipeline (phantom shapes, vertex sampling,
//! epoch shuffles, mask perturbations, ...) draws from a `ChaCha8Rng` whose
//! seed is derived from one user-facing `u64` run seed plus a small number of
//! integer tags (stream id, patient index, slice index, epoch, ...). Deriving
//! instead of sharing one mutable RNG keeps results independent of call
//! order, so e.g. generating slices serially or in any other order yields
//! identical data.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream tags so unrelated consumers of the same run seed never
/// collide. The values are arbitrary but must stay stable forever.
pub mod stream {
    pub const PHANTOM_SHAPE: u64 = 0x01;
    pub const PHANTOM_NOISE: u64 = 0x02;
    pub const PHANTOM_PATIENT: u64 = 0x03;
    pub const PHANTOM_FLIP: u64 = 0x04;
    pub const PHANTOM_SLICE_COUNT: u64 = 0x05;
    pub const TRAIN_INIT: u64 = 0x10;
    pub const TRAIN_SHUFFLE: u64 = 0x11;
    pub const TRAIN_VERTICES: u64 = 0x12;
    pub const EVAL_PERTURB: u64 = 0x20;
    pub const GRADCHECK: u64 = 0x30;
}

/// One round of the SplitMix64 output function. Statistically strong enough
/// to decorrelate structured tag tuples like (seed, patient, slice).
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an ordered list of tags into a single u64.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    let mut state = base;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// Derives a counter-seeded RNG for `(base, tags...)`.
pub fn rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, tags))
}
