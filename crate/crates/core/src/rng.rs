//! Seeded, splittable random streams.
//!
//! Every run derives all of its randomness from one 64-bit seed. ChaCha is
//! counter-based, so a child stream is the same key with a different stream
//! id: forking never advances the parent and the result does not depend on
//! how much the parent has already been used.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Fork tags used by the solvers. Kept in one place so streams never collide.
pub mod tags {
    pub const LANCZOS: u64 = 0x4c41_4e43;
    pub const START_POINT: u64 = 0x5354_4152;
    pub const GRADIENT_SAMPLE: u64 = 0x4753_414d;
    pub const HESSIAN_SAMPLE: u64 = 0x4853_414d;
    pub const SURROGATE: u64 = 0x5355_5252;
    pub const PROBLEM: u64 = 0x5052_4f42;
}

#[derive(Debug, Clone)]
pub struct SeedStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `tag`.
    pub fn fork(&self, tag: u64) -> SeedStream {
        let child = splitmix64(self.stream ^ splitmix64(tag));
        Self::with_stream(self.seed, child)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Uniformly distributed point on the unit sphere in `d` dimensions.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let mut v = self.normal_vec(d);
            let n = crate::linalg::norm(&v);
            if n > 1e-300 {
                crate::linalg::scale(1.0 / n, &mut v);
                return v;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// `size` indices drawn uniformly from `0..n` with replacement.
    pub fn sample_with_replacement(&mut self, n: usize, size: usize) -> Vec<usize> {
        (0..size).map(|_| self.index(n)).collect()
    }

    /// Multiplicity of each index when `size` indices are drawn uniformly
    /// with replacement from `0..n`. Equal in distribution to counting the
    /// output of [`Self::sample_with_replacement`], but costs `O(n)` draws,
    /// which matters when theoretical sample sizes run into the millions.
    pub fn multinomial_counts(&mut self, n: usize, size: u64) -> Vec<u64> {
        let mut counts = vec![0u64; n];
        let mut remaining = size;
        for (i, c) in counts.iter_mut().enumerate() {
            if remaining == 0 {
                break;
            }
            let cells_left = (n - i) as f64;
            if cells_left <= 1.0 {
                *c = remaining;
                break;
            }
            let draw = Binomial::new(remaining, 1.0 / cells_left)
                .expect("binomial probability lies in (0, 1)")
                .sample(&mut self.rng);
            *c = draw;
            remaining -= draw;
        }
        counts
    }
}

impl RngCore for SeedStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
