//! Seed derivation. Every random decision in an experiment is drawn from a
//! named substream of one base seed, so changing e.g. the dropout stream never
//! perturbs initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of substream `name`/`index` from `base`.
pub fn substream(base: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the name, then mixed with the base seed and index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(base ^ h).wrapping_add(index))
}

pub fn rng_for(base: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(substream(base, name, index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ_by_name_and_index() {
        let a = substream(7, "init", 0);
        assert_ne!(a, substream(7, "dropout", 0));
        assert_ne!(a, substream(7, "init", 1));
        assert_ne!(a, substream(8, "init", 0));
        assert_eq!(a, substream(7, "init", 0));
    }
}
