//! Counter-based, splittable random streams.
//!
//! A stream is identified by a 64-bit seed and a path of integers such as
//! `(trial, layer, copy)`. The path is folded into a 64-bit key with the
//! SplitMix64 finalizer; the `i`-th output of the stream is
//! `mix64(key + (i + 1)·γ)` with `γ = 0x9E3779B97F4A7C15`, i.e. SplitMix64 run in
//! counter mode. Any stream can therefore be reproduced in isolation from its
//! `(seed, path)` alone, independent of thread scheduling.

use rand::RngCore;

/// Name recorded in experiment metadata.
pub const GENERATOR_NAME: &str = "splitmix64-ctr/v1";

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const PATH_DOMAIN: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            path: Vec::new(),
            key: mix64(seed ^ GAMMA),
            counter: 0,
        }
    }

    pub fn from_path(seed: u64, path: &[u64]) -> Self {
        path.iter().fold(Self::new(seed), |s, &p| s.child(p))
    }

    /// Independent sub-stream with `component` appended to the path.
    /// The parent's position in its own sequence does not affect the child.
    pub fn child(&self, component: u64) -> Self {
        let mut path = self.path.clone();
        path.push(component);
        let key = mix64(self.key.rotate_left(23) ^ mix64(component ^ PATH_DOMAIN));
        RngStream {
            seed: self.seed,
            path,
            key,
            counter: 0,
        }
    }

    pub fn derive(&self, components: &[u64]) -> Self {
        components.iter().fold(self.clone(), |s, &c| s.child(c))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// The `index`-th output without advancing the stream.
    pub fn at(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
