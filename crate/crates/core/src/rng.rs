//! Seeded, splittable random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream keyed by the
//! master seed, a trial index and a role, so trials can run in any order or in
//! parallel and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Alice = 1,
    Bob = 2,
    Offset = 3,
}

/// ChaCha8 stream for `(trial, role)` under `master_seed`.
pub fn stream(master_seed: u64, trial: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial.wrapping_mul(16).wrapping_add(role as u64));
    rng
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub(crate) fn unit(rng: &mut impl rand::RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
