//! Seeded random streams.
//!
//! Every stochastic consumer draws from its own ChaCha8 stream whose seed is
//! derived from the master seed and a list of integer keys (purpose, epoch,
//! source index, ...). Streams therefore never depend on the order in which
//! other consumers draw, which is what makes resume and parallel augmentation
//! reproducible.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::float::Float;
use super::tensor::Tensor;

/// Identifier written into checkpoints alongside the master seed.
pub const RNG_ALGORITHM: &str = "chacha8-splitmix-v1";

/// Purposes of derived sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Sampling = 3,
    Augment = 4,
    Eval = 5,
    Synth = 6,
    Generate = 7,
}

pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream keyed by `(master, purpose, keys...)`.
    pub fn derive(master: u64, purpose: Stream, keys: &[u64]) -> Self {
        let mut s = splitmix64(master ^ splitmix64(purpose as u64));
        for &k in keys {
            s = splitmix64(s ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D)));
        }
        Self::new(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        // Fisher-Yates, written out so the draw sequence is pinned here
        // rather than by a library version.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// I.i.d. standard normal draws of the given shape.
pub fn gaussian_sample<T: Float>(rng: &mut Rng, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.normal())).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}
