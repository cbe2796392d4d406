//! Reproducible random streams.
//!
//! A [`SeededStream`] names a ChaCha8 keystream: the seed selects the key and
//! the stream id selects one of the 2^64 independent nonces. Parallel work
//! items derive child streams by index, so results never depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub seed: u64,
    pub stream: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream for work item `index`. Children of distinct parents or
    /// distinct indices land on distinct stream ids with overwhelming
    /// probability.
    pub fn child(&self, index: u64) -> SeededStream {
        let mixed = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)));
        SeededStream { seed: self.seed, stream: mixed }
    }

    /// Child stream keyed by a label, for separating the roles of one trial
    /// (samples, reference points, split points, ...).
    pub fn named(&self, label: &str) -> SeededStream {
        let h = label
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.child(h)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 128-bit key for index `i`, used to hash membership sets by wrapping sums.
pub(crate) fn set_key(i: usize) -> u128 {
    let lo = splitmix64(i as u64 ^ 0x5851_f42d_4c95_7f2d);
    let hi = splitmix64(lo ^ 0x1405_7b7e_f767_814f);
    ((hi as u128) << 64) | lo as u128
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_sequence() {
        let s = SeededStream::new(7, 3);
        let a: Vec<u64> = (0..16).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        let mut r = s.rng();
        let b: Vec<u64> = (0..16).map(|_| r.random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_differ() {
        let s = SeededStream::from_seed(1);
        let mut a = s.child(0).rng();
        let mut b = s.child(1).rng();
        let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        assert_ne!(xa, xb);
        assert_ne!(s.child(0), s.child(1));
        assert_ne!(s.named("samples"), s.named("reference"));
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        let s = SeededStream::from_seed(99);
        let mut a = s.child(10).rng();
        let mut b = s.child(11).rng();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x: f64 = a.random::<f64>() - 0.5;
            let y: f64 = b.random::<f64>() - 0.5;
            sum += x * y;
        }
        // corr estimate has sd 1/sqrt(n); cov = corr/12
        let corr = 12.0 * sum / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
