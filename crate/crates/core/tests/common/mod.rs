#![allow(dead_code)]

use std::sync::Arc;

use gradflow_core::potentials::{PLaplaceParams, ReactionParams};
use gradflow_core::{Field, Potential, SpectralBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spme() -> Potential {
    Potential::porous_medium(2.0).unwrap()
}

/// `−Δ` with the reaction `t − t³`.
pub fn srde() -> Potential {
    Potential::reaction_diffusion(ReactionParams::default()).unwrap()
}

pub fn heat() -> Potential {
    Potential::reaction_diffusion(ReactionParams::none()).unwrap()
}

/// 3-Laplacian with the reaction `t − t³`.
pub fn plap() -> Potential {
    Potential::p_laplace(PLaplaceParams::standard(3.0).with_reactions(ReactionParams::default().reactions)).unwrap()
}

pub fn families() -> Vec<(&'static str, Potential)> {
    vec![("porous_medium", spme()), ("reaction_diffusion", srde()), ("p_laplace", plap())]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients uniform in `[−a, a]·k^{−decay}`.
pub fn random_field(basis: &Arc<SpectralBasis>, rng: &mut ChaCha8Rng, a: f64, decay: f64) -> Field {
    Field::from_fn(basis, |k| a * rng.random_range(-1.0..1.0) * (k as f64).powf(-decay))
}

/// `σ_k k^{−α}` with random signs `σ_k`.
pub fn rough_field(basis: &Arc<SpectralBasis>, alpha: f64, seed: u64) -> Field {
    let mut r = rng(seed);
    Field::from_fn(basis, |k| {
        let s = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        s * (k as f64).powf(-alpha)
    })
}
