//! Reproducible random streams.
//!
//! A stream is the pair `(master_seed, stream_index)`. It maps onto a
//! ChaCha8 keystream: the master seed expands to the key and the stream
//! index selects the ChaCha stream id, so every variate is a function of
//! `(seed, index, draw position)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

#[inline]
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

    pub fn from_seed(master_seed: u64) -> Self {
        Self::new(master_seed, 0)
    }

    /// The generator positioned at the start of this stream.
    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// An independent family of streams identified by `label`. Children with
    /// distinct labels (or of distinct parents) have distinct keys.
    pub fn child(&self, label: u64) -> RngStream {
        let key = splitmix64(
            splitmix64(self.master_seed ^ 0x6C62_272E_07BB_0142)
                ^ splitmix64(self.stream_index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
                ^ label.wrapping_mul(0xA076_1D64_78BD_642F),
        );
        RngStream::new(key, 0)
    }

    /// Child keyed by a textual label.
    pub fn labeled(&self, label: &str) -> RngStream {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01B3);
        }
        self.child(h)
    }

    /// Stream for replicate `i` of this family.
    pub fn replicate(&self, i: u64) -> Rng {
        RngStream::new(self.master_seed, self.stream_index.wrapping_add(i)).rng()
    }
}
