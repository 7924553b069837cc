//! Seed derivation. Every random stream in a pipeline is derived from the
//! single top-level seed plus a stable name, so components can be re-run in
//! isolation and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of splitmix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used only to turn stream names into integers.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a named sub-seed, e.g. `sub_seed(seed, "selector")`.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(name)))
}

/// Derives a sub-seed from a parent seed and a sequence of integer coordinates
/// (trigger id, epoch, worker, ...).
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_streams_differ() {
        assert_ne!(sub_seed(7, "selector"), sub_seed(7, "trainer"));
        assert_eq!(sub_seed(7, "drift"), sub_seed(7, "drift"));
        assert_ne!(mix(1, &[0, 1]), mix(1, &[1, 0]));
    }
}
