//! Splittable, reproducible random streams.
//!
//! A stream is addressed by `(master_seed, stream_index)`. The pair keys a
//! ChaCha8 generator: the seed expands into the 256-bit key and the index
//! selects the ChaCha stream, so distinct pairs never share keystream.
//! Child streams hash the parent address into a fresh key, which lets any
//! nesting depth (replicate, size, draw) be addressed without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Derive an independent sub-stream. `child(k)` is a pure function of
    /// `(self, k)`.
    pub fn child(&self, k: u64) -> Self {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index.rotate_left(17) ^ 0x5851_F42D_4C95_7F2D));
        Self {
            master_seed: key,
            stream_index: k,
        }
    }

    /// Child addressed by a path of indices, e.g. `[tag, m, b]`.
    pub fn path(&self, keys: &[u64]) -> Self {
        keys.iter().fold(*self, |s, &k| s.child(k))
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
