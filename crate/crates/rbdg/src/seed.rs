//! Deterministic seed derivation.
//!
//! Every randomized component takes an explicit `u64` seed, and composite
//! procedures (Monte-Carlo sweeps, retry loops) derive child seeds from a
//! master seed with [`derive_seed`]. The derivation is a fixed splitmix64
//! chain, so results are reproducible across platforms and thread counts.

/// One round of the splitmix64 mixing function.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a sequence of stream labels.
///
/// The same `(master, parts)` pair always yields the same seed; distinct
/// labels yield statistically independent streams.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &part in parts {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}
