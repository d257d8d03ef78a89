mod common;

use std::f64::consts::{PI, SQRT_2};

use common::{heat, rng, random_field, spme};
use gradflow_core::noise::{
    a5_analytic_bound, a5_lipschitz_estimate, a6_norm, apply_mode, sample_increment, summability, PresetKind,
};
use gradflow_core::potentials::{ReactionParams, ScalarLaw};
use gradflow_core::{BrownianPath, Estimate, Field, NoiseOperator, Potential, PreparedNoise, ProjectionMode, SpectralBasis};
use proptest::prelude::*;

#[test]
fn zero_noise_everywhere() {
    let b = SpectralBasis::new(8);
    let zero = NoiseOperator::zero();
    let prepared = PreparedNoise::new(&zero, &b, &heat()).unwrap();
    let v = Field::basis_vector(&b, 2).unwrap();
    let mut path = BrownianPath::new(1, 0, 1e-3);
    let inc = sample_increment(&prepared, &v, 0.0, 0, 1, &mut path).unwrap();
    assert!(inc.coeffs().iter().all(|&c| c == 0.0));
    assert!(path.consumed().is_empty());
    assert_eq!(a5_lipschitz_estimate(&zero, &b, heat().h_tag(), 10, &mut rng(0)), 0.0);
    assert_eq!(a6_norm(&zero, &v, 0.0, &heat()).unwrap().norm, 0.0);
    assert!(apply_mode(&zero, &v, 1).is_err());
}

#[test]
fn multiplicative_mode_of_first_mode() {
    let b = SpectralBasis::new(16);
    let op = NoiseOperator::multiplicative(vec![1.0]);
    let e1 = Field::basis_vector(&b, 1).unwrap();
    let m = apply_mode(&op, &e1, 1).unwrap();
    // e_1² = 2 sin²(πξ) is even about ½, so only odd modes survive.
    assert!((m.coeffs()[0] - 8.0 * SQRT_2 / (3.0 * PI)).abs() < 1e-6);
    for k in (1..16).step_by(2) {
        assert!(m.coeffs()[k].abs() < 1e-12, "mode {}", k + 1);
    }
    assert!(apply_mode(&op, &Field::zeros(&b), 1).unwrap().coeffs().iter().all(|&c| c == 0.0));
}

#[test]
fn additive_single_mode_variance_is_dt() {
    let b = SpectralBasis::new(4);
    let dt = 1e-3;
    let op = NoiseOperator::additive(vec![Field::basis_vector(&b, 1).unwrap()]);
    let prepared = PreparedNoise::new(&op, &b, &heat()).unwrap();
    let v = Field::zeros(&b);
    let mut path = BrownianPath::new(17, 0, dt);
    let xs: Vec<f64> = (0..100_000)
        .map(|j| sample_increment(&prepared, &v, 0.0, j, 1, &mut path).unwrap().coeffs()[0])
        .collect();
    let mean = Estimate::from_samples(&xs);
    assert!(mean.mean.abs() <= 3.0 * mean.se);
    let var = Estimate::variance_of(&xs);
    assert!((var.mean - dt).abs() <= 3.0 * var.se, "{var:?}");
}

#[test]
fn multiplicative_increment_obeys_ito_isometry() {
    let b = SpectralBasis::new(8);
    let dt = 1e-2;
    let p = spme();
    let op = NoiseOperator::multiplicative_powerlaw(1.0, 1.0, 3);
    let prepared = PreparedNoise::new(&op, &b, &p).unwrap();
    let v = random_field(&b, &mut rng(2), 1.0, 1.0);
    let want: f64 = dt * (1..=3)
        .map(|k| prepared.projected_mode(&v, k).unwrap().norm_sq(p.h_tag()))
        .sum::<f64>();
    let mut path = BrownianPath::new(4, 0, dt);
    let xs: Vec<f64> = (0..100_000)
        .map(|j| sample_increment(&prepared, &v, 0.0, j, 1, &mut path).unwrap().norm_sq(p.h_tag()))
        .collect();
    let got = Estimate::from_samples(&xs);
    assert!((got.mean - want).abs() <= 3.0 * got.se, "{got:?} vs {want}");
}

#[test]
fn lipschitz_constants() {
    let b = SpectralBasis::new(8);
    let tag = spme().h_tag();
    let add = NoiseOperator::additive_powerlaw(&b, 1.0, 2.0, 4).unwrap();
    assert_eq!(a5_lipschitz_estimate(&add, &b, tag, 10, &mut rng(0)), 0.0);

    let op = NoiseOperator::multiplicative_powerlaw(1.0, 2.0, 4);
    let bound = a5_analytic_bound(&op, tag);
    let few = a5_lipschitz_estimate(&op, &b, tag, 10, &mut rng(1));
    let many = a5_lipschitz_estimate(&op, &b, tag, 1000, &mut rng(1));
    assert!(few <= many && many <= bound, "{few} {many} {bound}");
}

#[test]
fn weighted_norm_of_single_additive_mode() {
    let b = SpectralBasis::new(16);
    // f(t) = −t: growth order 2, so p₁ = 1.
    let p = Potential::reaction_diffusion(ReactionParams::new(vec![ScalarLaw::polynomial(&[0.0, -1.0])])).unwrap();
    let op = NoiseOperator::additive(vec![Field::basis_vector(&b, 1).unwrap()]);
    let rep = a6_norm(&op, &Field::zeros(&b), 0.0, &p).unwrap();
    assert!((rep.norm - (PI * PI / 2.0 + 1.5)).abs() < 1e-10, "{}", rep.norm);
}

#[test]
fn multiplicative_weighted_ratio_is_bounded() {
    let b = SpectralBasis::new(8);
    let p = spme();
    let op = NoiseOperator::multiplicative_powerlaw(1.0, 3.0, 4);
    let mut r = rng(6);
    let worst = (0..100)
        .map(|_| a6_norm(&op, &random_field(&b, &mut r, 3.0, 1.0), 0.0, &p).unwrap().ratio)
        .fold(0.0f64, f64::max);
    assert!(worst.is_finite() && worst > 0.0);
}

#[test]
fn projection_modes_agree_on_the_subspace() {
    let b = SpectralBasis::new(8);
    let g = vec![Field::from_coeffs(&b, &[0.3, -0.2, 0.1]).unwrap()];
    let p = spme();
    let w = PreparedNoise::new(&NoiseOperator::additive(g.clone()), &b, &p).unwrap();
    let o = PreparedNoise::new(&NoiseOperator::additive(g).with_projection(ProjectionMode::Orthogonal), &b, &p).unwrap();
    let v = Field::zeros(&b);
    let (a, c) = (w.projected_mode(&v, 1).unwrap(), o.projected_mode(&v, 1).unwrap());
    for (x, y) in a.coeffs().iter().zip(c.coeffs()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn increments_are_reproducible_and_coupled() {
    let draw = |seed, path, step| BrownianPath::new(seed, path, 1e-3).increments(3, step, 2);
    assert_eq!(draw(5, 2, 7), draw(5, 2, 7));
    assert_ne!(draw(5, 2, 7), draw(5, 3, 7));
    assert_ne!(draw(5, 2, 7), draw(6, 2, 7));

    let mut fine = BrownianPath::new(5, 2, 1e-3);
    let mut coarse = BrownianPath::new(5, 2, 1e-3);
    let c = coarse.increment(2, 3, 4);
    let f: f64 = (12..16).map(|j| fine.increment(2, j, 1)).sum();
    assert!((c - f).abs() < 1e-15);
    assert_eq!(fine.consumed(), coarse.consumed());
}

#[test]
fn summability_of_presets() {
    assert!(summability(&spme(), PresetKind::Additive, 2.0, 8).satisfied);
    assert!(!summability(&spme(), PresetKind::Additive, 0.1, 8).satisfied);
    assert!(summability(&spme(), PresetKind::Multiplicative, 3.0, 8).satisfied);
}

proptest! {
    #[test]
    fn multiplicative_modes_are_linear(c in prop::collection::vec(-2.0..2.0f64, 6), a in -3.0..3.0f64, k in 1usize..4) {
        let b = SpectralBasis::new(6);
        let op = NoiseOperator::multiplicative_powerlaw(1.0, 1.0, 3);
        let v = Field::from_coeffs(&b, &c).unwrap();
        let lhs = apply_mode(&op, &v.scaled(a), k).unwrap();
        let rhs = apply_mode(&op, &v, k).unwrap().scaled(a);
        for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()));
        }
    }
}
