//! Tag-addressed random streams.
//!
//! Every random draw in the crate is addressed by a `(seed, scope, tag)` tuple,
//! where the tag names the consumer (`Domain`), an anchor index, an iteration
//! index and a particle index. The tuple is mapped injectively onto a ChaCha8
//! key and stream id, so the values seen by one consumer never depend on what
//! other consumers drew, in which order, or on how many threads were running.
//! The keyed ChaCha8 block only seeds a Xoshiro256++ generator, which produces
//! the actual draws; long Langevin chains spend most of their time there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator handed out for one tag.
pub type StreamRng = Xoshiro256PlusPlus;

/// Which part of the crate a draw belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    ChainInit = 1,
    ChainNoise = 2,
    BankInit = 3,
    BankNoise = 4,
    BatchSelect = 5,
    AnchorSelect = 6,
    OutputSelect = 7,
    Dataset = 8,
    Probe = 9,
    Pilot = 10,
    Stationarity = 11,
    Baseline = 12,
    ThetaInit = 13,
    Test = 255,
}

/// Address of one random sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tag {
    pub domain: Domain,
    pub anchor: u64,
    pub iteration: u64,
    pub particle: u64,
}

impl Tag {
    pub fn new(domain: Domain, anchor: u64, iteration: u64, particle: u64) -> Self {
        Self {
            domain,
            anchor,
            iteration,
            particle,
        }
    }

    pub fn domain(domain: Domain) -> Self {
        Self::new(domain, 0, 0, 0)
    }
}

/// A counter-based random stream rooted at a 64-bit seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    scope: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, scope: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for an independent replica (chain, outer iteration, ...).
    pub fn substream(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            scope: splitmix64(self.scope ^ splitmix64(label.wrapping_add(1))),
        }
    }

    /// Generator for one tag. Draws from the returned generator are sequential,
    /// but its starting state is a pure function of `(seed, scope, tag)`.
    pub fn rng(&self, tag: Tag) -> StreamRng {
        let words = [
            self.seed,
            self.scope ^ ((tag.domain as u64) << 56),
            tag.anchor,
            tag.iteration,
        ];
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut keyed = ChaCha8Rng::from_seed(key);
        keyed.set_stream(tag.particle);
        StreamRng::from_rng(&mut keyed)
    }

    /// Fill `out` with independent standard normal draws for `tag`.
    pub fn fill_normal(&self, tag: Tag, out: &mut [f64]) {
        let mut rng = self.rng(tag);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    pub fn normal_vec(&self, tag: Tag, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        self.fill_normal(tag, &mut out);
        out
    }

    /// Uniform index in `0..n`.
    pub fn uniform_index(&self, tag: Tag, n: usize) -> usize {
        self.rng(tag).random_range(0..n)
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement, in draw order.
    pub fn sample_without_replacement(&self, tag: Tag, n: usize, k: usize) -> Vec<usize> {
        let mut rng = self.rng(tag);
        rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec()
    }
}

#[inline]
pub(crate) fn draw_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}
