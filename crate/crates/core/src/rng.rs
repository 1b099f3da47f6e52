//! Counter-based Gaussian draws and seed derivation.
//!
//! Every Brownian increment is a pure function of `(seed, k₁, k₂, step)`, so
//! two noise models with different cutoffs driven by the same seed see
//! identical increments on their shared modes, and paths can be evaluated in
//! any order or thread without changing a single bit.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of words into one 64-bit key.
#[inline]
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(seed), |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Child seed for a labelled sub-stream (master → n → path).
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    hash_words(parent, &[0x5eed, label])
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // 53-bit mantissa in (0, 1]
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals keyed by `(seed, k₁, k₂, step)` (Box–Muller).
#[inline]
pub fn gaussian_pair(seed: u64, k1: i64, k2: i64, step: u64) -> (f64, f64) {
    let h = hash_words(seed, &[k1 as u64, k2 as u64, step]);
    let u1 = unit_open(h);
    let u2 = unit_open(splitmix64(h));
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
