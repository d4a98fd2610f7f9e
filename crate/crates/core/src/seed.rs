//! Seed derivation and the small sampling helpers shared by every
//! randomized stage.
//!
//! All derived seeds go through [`mix64`], the SplitMix64 finalizer, so a
//! one-bit change in any input flips about half of the output bits. Each
//! consumer mixes in its own domain tag, which keeps e.g. the split hash of
//! frame `i` uncorrelated with its frame seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random stream used for all scenario-level draws. ChaCha8 output is
/// specified bit-for-bit, so streams are reproducible across platforms.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) const TAG_FRAME: u64 = 0x6672_616d_6500_0001;
pub(crate) const TAG_SPLIT: u64 = 0x7370_6c69_7400_0002;
pub(crate) const TAG_NOISE: u64 = 0x6e6f_6973_6500_0003;
pub(crate) const TAG_PIXEL: u64 = 0x7069_7865_6c00_0004;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-dependent combination of two 64-bit values.
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b).rotate_left(23))
}

/// Seed of frame `index` in a campaign with master seed `master`:
/// `combine(combine(master, TAG_FRAME), index)`.
pub fn frame_seed(master: u64, index: u64) -> u64 {
    combine(combine(master, TAG_FRAME), index)
}

/// Bucket in `0..100` used for the train/validation assignment of a frame.
pub fn split_bucket(master: u64, index: u64) -> u64 {
    combine(combine(master, TAG_SPLIT), index) % 100
}

pub fn noise_seed(frame_seed: u64) -> u64 {
    combine(frame_seed, TAG_NOISE)
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

/// Uniform draw in `[lo, hi)`. Always consumes exactly one `f64` from the
/// stream, including for degenerate ranges, so the draw order stays fixed.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * u
    }
}

/// Log-uniform draw in `[lo, hi)`; both bounds must be positive.
pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    if hi <= lo {
        lo
    } else {
        (lo.ln() + (hi.ln() - lo.ln()) * u).exp()
    }
}

/// Uniform integer in `lo..=hi`; consumes one `u64`.
pub fn uniform_int<R: Rng + ?Sized>(rng: &mut R, lo: u32, hi: u32) -> u32 {
    let x: u64 = rng.gen();
    if hi <= lo {
        lo
    } else {
        lo + (x % (u64::from(hi - lo) + 1)) as u32
    }
}

/// Uniform index in `0..len`; consumes one `u64`. `len` must be non-zero.
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    let x: u64 = rng.gen();
    // Lemire's multiply-shift; bias is below 2^-40 for the pool sizes used here.
    ((u128::from(x) * len as u128) >> 64) as usize
}
