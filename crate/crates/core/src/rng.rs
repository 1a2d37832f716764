//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! master seed, a [`Purpose`] tag and a short list of indices (dataset,
//! run, deletion, ...). Distinct keys give independent streams, so trials
//! can be evaluated in any order or on any thread and still reproduce.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// What a stream is used for. Part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Request = 2,
    Noise = 3,
    MixSubset = 4,
    AuditRealistic = 5,
    AuditEmpty = 6,
    Trial = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses a key into a single 64-bit seed.
pub fn derive_seed(seed: u64, purpose: Purpose, indices: &[u64]) -> u64 {
    let mut state = seed ^ (purpose as u64).rotate_left(32);
    let mut acc = splitmix64(&mut state);
    for &i in indices {
        state ^= i.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc ^= splitmix64(&mut state).rotate_left(17);
        state = state.wrapping_add(acc);
    }
    acc ^ splitmix64(&mut state)
}

/// Opens the stream for `(seed, purpose, indices)`.
pub fn stream(seed: u64, purpose: Purpose, indices: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, purpose, indices);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw on the open interval (0, 1) from 53 random bits.
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by inversion: exactly one uniform per draw, no rejection.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let std = Normal::standard();
    std.inverse_cdf(open_unit(rng))
}
