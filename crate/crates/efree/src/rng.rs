//! Counter-based noise streams.
//!
//! A [`StreamKey`] names a family of independent ChaCha8 streams, one per
//! particle. Draw `k` of particle `i` depends only on `(seed, family, i, k)`,
//! so results do not depend on how particles are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    family: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, family: 0 }
    }

    /// Independent child key labelled by `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        Self { seed: self.seed, family: splitmix64(self.family ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for particle `index`.
    pub fn particle(&self, index: u64) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&self.family.to_le_bytes());
        bytes[16..24].copy_from_slice(&splitmix64(self.seed).to_le_bytes());
        bytes[24..].copy_from_slice(&splitmix64(self.family ^ 0xA5A5_A5A5_A5A5_A5A5).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(index);
        rng
    }
}
