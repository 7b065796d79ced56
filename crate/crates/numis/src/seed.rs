//! Deterministic seed derivation. Every stochastic stage derives its RNG from
//! (run seed, purpose tags) with a splitmix64 chain, so reruns are bit-exact
//! and per-item streams are independent of scheduling.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a sequence of tags (epoch index, sample index, ...).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base ^ 0x6e75_6d69_735f_7365); // "numis_se"
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}
