//! Seeded, splittable random streams.
//!
//! Every stochastic draw in the crate comes from a ChaCha8 generator (a counter-based cipher
//! RNG) keyed by the run seed plus a `(domain, index)` pair. Changing how many rows or columns
//! are drawn never perturbs the draws of other rows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Arrivals = 1,
    Pending = 2,
    Processing = 3,
    Trace = 4,
    Kappa = 5,
    Perturb = 6,
    Planner = 7,
}

/// Returns the generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain as u64));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per planning round.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix(seed, salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019))
}

// splitmix64 finalizer over the pair
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0xD6E8_FEB8_6659_FD93;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
