//! Seed handling.
//!
//! Every run takes one user seed. Independent streams (data generation, splits,
//! initialization, batch order, fold assignment) get their own sub-seed through
//! [`derive_seed`], a SplitMix64 finalizer applied to `seed ^ stream`, so adding a
//! new stream never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams.
pub mod stream {
    pub const SYNTHETIC: u64 = 0x5359_4e54;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const INIT: u64 = 0x494e_4954;
    pub const BATCHES: u64 = 0x4241_5443;
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const PGD: u64 = 0x5047_4421;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive_seed(0, stream::SPLIT), derive_seed(0, stream::INIT));
        assert_eq!(derive_seed(7, stream::SPLIT), derive_seed(7, stream::SPLIT));
    }
}
