use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::tensor::Tensor;
use crate::error::{bail, Result};

/// Name of the generator family, echoed into every run config.
pub const RNG_ALGORITHM: &str = "xoshiro256++";

/// Seeded PRNG: identical seeds give identical streams on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Independent child stream derived from the seed and a stream id only,
    /// never from how much of the parent has been consumed.
    pub fn fork(&self, stream: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(stream.wrapping_add(1))))
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn gaussian(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        gaussian(self, rows, cols)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// Serialized generator state, for checkpoints.
    pub fn state_string(&self) -> String {
        serde_json::to_string(&(self.seed, &self.inner)).expect("rng state serializes")
    }

    pub fn from_state_string(s: &str) -> Result<Self> {
        match serde_json::from_str::<(u64, Xoshiro256PlusPlus)>(s) {
            Ok((seed, inner)) => Ok(Self { seed, inner }),
            Err(e) => bail!(Input, "bad rng state {s:?}: {e}"),
        }
    }
}

/// i.i.d. standard-normal `rows×cols` tensor.
pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        bail!(Dimension, "gaussian: zero-size shape {rows}x{cols}");
    }
    Ok(Tensor::from_rows(rows, cols, rng.normals(rows * cols)))
}
