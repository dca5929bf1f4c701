//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator whose state is expanded from a
//! 64-bit seed with SplitMix64 (`SeedableRng::seed_from_u64`). Independent
//! units of work (one permutation, one removal chain) get their own stream
//! keyed by `(master seed, key, index)`, so results never depend on how work
//! is split across threads.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn member ids into stream keys.
pub fn key_of(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream_seed(master: u64, key: u64, index: u64) -> u64 {
    let a = mix64(master.wrapping_add(GOLDEN));
    let b = mix64(a ^ key.wrapping_add(GOLDEN.wrapping_mul(2)));
    mix64(b ^ index.wrapping_add(GOLDEN.wrapping_mul(3)))
}

pub fn stream(master: u64, key: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, key, index))
}

/// Standard normal draw by the Box-Muller transform (cosine branch only).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u keeps the logarithm's argument in (0, 1].
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
