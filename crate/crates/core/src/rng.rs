//! Reproducible Brownian increments.
//!
//! Path `i` under master seed `s` draws from `ChaCha8(seed_from_u64(s))` on
//! stream `i`. Noise mode `k` owns the block of the keystream starting at
//! word `k << 48` and reads standard normals from it sequentially; the
//! `j`-th normal of mode `k` is the increment of `β^k` over the base
//! interval `[j·δ, (j+1)·δ)` divided by `√δ`. A step of length `m·δ` sums
//! `m` consecutive base normals, so runs with different step sizes or mode
//! counts see the same Brownian path.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const MODE_STRIDE_BITS: u32 = 48;

struct ModeStream {
    rng: ChaCha8Rng,
    normals: Vec<f64>,
}

pub struct BrownianPath {
    seed: u64,
    path_index: u64,
    base_dt: f64,
    modes: Vec<ModeStream>,
}

impl BrownianPath {
    pub fn new(seed: u64, path_index: u64, base_dt: f64) -> Self {
        Self {
            seed,
            path_index,
            base_dt,
            modes: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    fn stream(&mut self, mode: usize) -> &mut ModeStream {
        while self.modes.len() < mode {
            let k = self.modes.len() + 1;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(self.path_index);
            rng.set_word_pos((k as u128) << MODE_STRIDE_BITS);
            self.modes.push(ModeStream {
                rng,
                normals: Vec::new(),
            });
        }
        &mut self.modes[mode - 1]
    }

    /// `j`-th base normal of mode `k` (1-based).
    pub fn base_normal(&mut self, mode: usize, j: usize) -> f64 {
        let s = self.stream(mode);
        while s.normals.len() <= j {
            let z: f64 = StandardNormal.sample(&mut s.rng);
            s.normals.push(z);
        }
        s.normals[j]
    }

    /// `β^k((j+1)mδ) − β^k(jmδ)`.
    pub fn increment(&mut self, mode: usize, step: usize, substeps: usize) -> f64 {
        let start = step * substeps;
        let sum: f64 = (start..start + substeps)
            .map(|i| self.base_normal(mode, i))
            .sum();
        self.base_dt.sqrt() * sum
    }

    /// Increments of modes `1..=k` over step `step`.
    pub fn increments(&mut self, n_modes: usize, step: usize, substeps: usize) -> Vec<f64> {
        (1..=n_modes)
            .map(|k| self.increment(k, step, substeps))
            .collect()
    }

    /// Base normals drawn so far, per mode.
    pub fn consumed(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.normals.len()).collect()
    }
}

/// Raw 64-bit draw for seeding auxiliary samplers of path `i`.
pub fn auxiliary_rng(seed: u64, path_index: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(tag + 1));
    rng.set_stream(path_index);
    let _ = rng.next_u64();
    rng
}
