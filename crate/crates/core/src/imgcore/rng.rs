//! Deterministic random source.
//!
//! A ChaCha8 keystream keyed by a 64-bit seed and addressed by a 64-bit stream
//! id. Every image and every pipeline stage gets its own stream, so batches can
//! be generated in any order or in parallel and still reproduce bit-for-bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Well-known stage ids used when deriving child streams.
pub mod stage {
    pub const RECIPE: u64 = 1;
    pub const DEPTH: u64 = 2;
    pub const SHAKE: u64 = 3;
    pub const RAIN: u64 = 4;
    pub const NOISE: u64 = 5;
    /// Procedural clean scenes.
    pub const SCENE: u64 = 6;
    pub const POLICY: u64 = 7;
    /// Train/test assignment of a generated dataset.
    pub const SPLIT: u64 = 8;
    pub const PARAMS: u64 = 9;
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream for `(image id, stage)` under a master seed.
    pub fn for_image(master_seed: u64, image_id: u64, stage: u64) -> Self {
        Self::new(master_seed, mix(mix(0x5eed, image_id), stage))
    }

    /// Independent child stream; does not advance `self`.
    pub fn derive(&self, stage: u64) -> Self {
        Self::new(self.seed, mix(self.stream, stage))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in the keystream, in 32-bit words.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn set_word_pos(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.uniform() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}

// splitmix64 finalizer over a combined word.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .rotate_left(17)
        .wrapping_add(b.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
