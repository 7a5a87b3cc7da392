//! Counter-style random streams.
//!
//! Every random draw in the crate is keyed by `(seed, stream, index)` where
//! `index` is usually a column or replica number, so results do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Generator for the `index`-th independent unit of work.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&index.to_le_bytes());
        key[16..24].copy_from_slice(&splitmix64(self.seed ^ index.rotate_left(17)).to_le_bytes());
        key[24..].copy_from_slice(b"spectrln");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }

    /// A statistically independent seed for a named sub-task.
    pub fn derive(&self, tag: u64) -> RngSeed {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5bd1_e995))),
            stream: self.stream,
        }
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
