//! Deterministic seed streams.
//!
//! `derive_seed(base, replication, role)` chains the SplitMix64 finalizer over
//! the three inputs, so every (replication, role) pair gets an independent
//! stream and reruns reproduce it exactly.

pub const ROLE_INIT: u64 = 1;
/// Source task `t` uses `ROLE_SOURCE + t`.
pub const ROLE_SOURCE: u64 = 1 << 16;
/// Method `m` uses `ROLE_METHOD + m`.
pub const ROLE_METHOD: u64 = 2 << 16;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, replication: u64, role: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ replication) ^ role)
}

/// Order-sensitive digest of a list of points and outcomes.
pub fn digest<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    values.into_iter().fold(0x243f_6a88_85a3_08d3, |h, v| splitmix64(h ^ v.to_bits()))
}
