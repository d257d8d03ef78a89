mod common;

use common::{families, heat, plap, rng, random_field, spme};
use gradflow_core::integrator::{initial_state, picard_solve, prox_residual, prox_step, simulate_path};
use gradflow_core::potentials::{PLaplaceParams, ReactionParams};
use gradflow_core::{
    BrownianPath, Field, InitialProjection, NoiseOperator, Potential, PreparedNoise, SchemeConfig, SpaceTag,
    SpectralBasis,
};
use proptest::prelude::*;

fn prepared(op: &NoiseOperator, b: &std::sync::Arc<SpectralBasis>, p: &Potential) -> PreparedNoise {
    PreparedNoise::new(op, b, p).unwrap()
}

/// Gradient descent in the `H` metric on `φ(z) + ‖z − w‖²_H / (2dt)`.
fn descent_oracle(p: &Potential, w: &Field, dt: f64, eta: f64, steps: usize) -> Field {
    let mut z = w.clone();
    for _ in 0..steps {
        let g = &p.subgradient(&z) + &(&z - w).scaled(1.0 / dt);
        z = z.axpy(-eta, &g);
    }
    z
}

#[test]
fn prox_matches_descent_oracle() {
    let b = SpectralBasis::new(8);
    let p = spme();
    let w = Field::basis_vector(&b, 1).unwrap();
    let got = prox_step(&p, &w, 0.01, 1e-12, 100).unwrap();
    let want = descent_oracle(&p, &w, 0.01, 2e-4, 20_000);
    assert!(got.distance_sq(&want, p.h_tag()).sqrt() < 1e-5);
    assert!(prox_residual(&p, &got, &w, 0.01) < 1e-9);
}

#[test]
fn prox_fixes_the_minimiser() {
    let b = SpectralBasis::new(8);
    for (name, p) in families() {
        let z = prox_step(&p, &Field::zeros(&b), 0.05, 1e-10, 100).unwrap();
        assert!(z.coeffs().iter().all(|c| c.abs() < 1e-12), "{name}");
    }
}

#[test]
fn free_potential_gives_a_random_walk() {
    let b = SpectralBasis::new(4);
    let p = Potential::free(SpaceTag::L2);
    let g = vec![Field::basis_vector(&b, 1).unwrap(), Field::basis_vector(&b, 3).unwrap().scaled(0.5)];
    let noise = prepared(&NoiseOperator::additive(g), &b, &p);
    let cfg = SchemeConfig::proximal(1e-2, 0.5).with_seed(8);
    let x0 = Field::from_coeffs(&b, &[0.2]).unwrap();
    let sol = simulate_path(&x0, &b, &p, &noise, &cfg, 3).unwrap();
    let mut path = BrownianPath::new(8, 3, 1e-2);
    let w1: f64 = (0..50).map(|j| path.increment(1, j, 1)).sum();
    let w2: f64 = (0..50).map(|j| path.increment(2, j, 1)).sum();
    let want = [0.2 + w1, 0.0, 0.5 * w2, 0.0];
    for (a, c) in sol.final_state.coeffs().iter().zip(want) {
        assert!((a - c).abs() < 1e-12);
    }
}

#[test]
fn zero_horizon_returns_projected_start() {
    let fine = SpectralBasis::new(32);
    let b = SpectralBasis::new(8);
    let x0 = random_field(&fine, &mut rng(4), 1.0, 1.0);
    let p = spme();
    let cfg = SchemeConfig::proximal(1e-3, 0.0);
    let sol = simulate_path(&x0, &b, &p, &prepared(&NoiseOperator::zero(), &b, &p), &cfg, 0).unwrap();
    assert_eq!(sol.len(), 1);
    assert_eq!(sol.final_state, initial_state(&x0, &b, &p, &cfg).unwrap());
    let mut csv = Vec::new();
    sol.write_csv(&mut csv, true).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,energy,subgrad_h_norm,coeff_1,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn initial_projections_differ_only_for_nonquadratic_weights() {
    let fine = SpectralBasis::new(32);
    let b = SpectralBasis::new(8);
    let x0 = random_field(&fine, &mut rng(9), 1.0, 0.5);
    let orth = SchemeConfig::proximal(1e-3, 0.1).with_initial(InitialProjection::Orthogonal);
    let weighted = SchemeConfig::proximal(1e-3, 0.1);
    let h = heat();
    assert_eq!(initial_state(&x0, &b, &h, &orth).unwrap(), initial_state(&x0, &b, &h, &weighted).unwrap());
    let p = spme();
    assert_ne!(initial_state(&x0, &b, &p, &orth).unwrap(), initial_state(&x0, &b, &p, &weighted).unwrap());
    let lvl = SchemeConfig::proximal(1e-3, 0.1).with_initial(InitialProjection::Levelset { level: 0.01 });
    let x = initial_state(&x0, &b, &p, &lvl).unwrap();
    assert!(p.phi_tilde_1_value(&x) <= 8.0 * 0.01 * (1.0 + 1e-8));
}

#[test]
fn validation_names_the_step_size_constraint() {
    let b = SpectralBasis::new(8);
    // λ = 1 for the reaction t − t³, so dt must stay below 1.
    let err = SchemeConfig::proximal(2.0, 4.0).validate(&common::srde(), &b).unwrap_err().to_string();
    assert!(err.contains("dt"), "{err}");
    let err = SchemeConfig::explicit(1e-2, 0.1).validate(&heat(), &b).unwrap_err().to_string();
    assert!(err.contains("cfl") || err.contains("CFL") || err.contains("explicit"), "{err}");
    assert!(SchemeConfig::proximal(3e-3, 0.01).validate(&heat(), &b).is_err());
}

/// Both schemes on the same Brownian path drift apart at rate `dt`.
#[test]
fn explicit_and_proximal_agree_to_first_order() {
    let b = SpectralBasis::new(4);
    let p = spme();
    let noise = prepared(&NoiseOperator::additive_powerlaw(&b, 0.3, 1.0, 4).unwrap(), &b, &p);
    let x0 = Field::from_coeffs(&b, &[1.0, -0.5, 0.25]).unwrap();
    let base = 2.5e-4;
    let sup_gap = |dt: f64| {
        let run = |cfg: SchemeConfig| simulate_path(&x0, &b, &p, &noise, &cfg.with_seed(2).with_base_dt(base), 0).unwrap();
        let a = run(SchemeConfig::proximal(dt, 0.1));
        let c = run(SchemeConfig::explicit(dt, 0.1));
        a.states
            .iter()
            .zip(&c.states)
            .map(|(x, y)| x.distance_sq(y, p.h_tag()).sqrt())
            .fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&dt| sup_gap(dt)).collect();
    for w in gaps.windows(2) {
        let r = w[1] / w[0];
        assert!((0.35..0.7).contains(&r), "{gaps:?}");
    }
}

#[test]
fn picard_additive_and_zero_noise() {
    let b = SpectralBasis::new(8);
    let p = spme();
    let x0 = Field::from_coeffs(&b, &[0.5, 0.2]).unwrap();
    let cfg = SchemeConfig::proximal(1e-3, 0.02).with_seed(3);

    let add = prepared(&NoiseOperator::additive_powerlaw(&b, 0.2, 1.0, 4).unwrap(), &b, &p);
    let out = picard_solve(&x0, &b, &p, &add, &cfg, 1, 1e-12, 50).unwrap();
    assert_eq!(out.iterations, 1);
    let direct = simulate_path(&x0, &b, &p, &add, &cfg, 1).unwrap();
    assert_eq!(out.path.final_state, direct.final_state);

    let zero = prepared(&NoiseOperator::zero(), &b, &p);
    let out = picard_solve(&x0, &b, &p, &zero, &cfg, 1, 1e-12, 50).unwrap();
    let direct = simulate_path(&x0, &b, &p, &zero, &cfg, 1).unwrap();
    assert_eq!(out.path.states, direct.states);
}

#[test]
fn picard_multiplicative_contracts() {
    let b = SpectralBasis::new(8);
    let p = spme();
    let x0 = Field::from_coeffs(&b, &[0.5, 0.2]).unwrap();
    let cfg = SchemeConfig::proximal(1e-3, 0.02).with_seed(3);
    let mult = prepared(&NoiseOperator::multiplicative_powerlaw(1.0, 3.0, 4), &b, &p);
    let out = picard_solve(&x0, &b, &p, &mult, &cfg, 0, 1e-12, 100).unwrap();
    assert!(out.iterations > 1);
    assert!(out.ratios.iter().all(|&r| r < 1.0), "{:?}", out.ratios);
    let direct = simulate_path(&x0, &b, &p, &mult, &cfg, 0).unwrap();
    assert!(out.path.final_state.distance_sq(&direct.final_state, p.h_tag()).sqrt() < 1e-10);
}

#[test]
fn same_seed_same_path() {
    let b = SpectralBasis::new(8);
    let p = plap();
    let noise = prepared(&NoiseOperator::multiplicative_powerlaw(0.5, 2.0, 4), &b, &p);
    let x0 = random_field(&b, &mut rng(1), 1.0, 1.0);
    let cfg = SchemeConfig::proximal(1e-3, 0.01).with_seed(77);
    let a = simulate_path(&x0, &b, &p, &noise, &cfg, 5).unwrap();
    let c = simulate_path(&x0, &b, &p, &noise, &cfg, 5).unwrap();
    assert_eq!(a.states, c.states);
    assert_eq!(a.increments_consumed, c.increments_consumed);
    let d = simulate_path(&x0, &b, &p, &noise, &cfg, 6).unwrap();
    assert_ne!(a.final_state, d.final_state);
}

fn convex_families() -> Vec<Potential> {
    vec![spme(), heat(), Potential::p_laplace(PLaplaceParams::standard(3.0)).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_prox_is_the_scalar_resolvent(c in prop::collection::vec(-2.0..2.0f64, 6), dt in 1e-4..1.0f64) {
        let b = SpectralBasis::new(6);
        let w = Field::from_coeffs(&b, &c).unwrap();
        let z = prox_step(&heat(), &w, dt, 1e-12, 10).unwrap();
        for (k, (zk, ck)) in z.coeffs().iter().zip(&c).enumerate() {
            prop_assert!((zk - ck / (1.0 + dt * b.eigenvalues()[k])).abs() < 1e-13);
        }
    }

    #[test]
    fn resolvent_is_nonexpansive(a in prop::collection::vec(-1.0..1.0f64, 6), c in prop::collection::vec(-1.0..1.0f64, 6)) {
        let b = SpectralBasis::new(6);
        let w1 = Field::from_coeffs(&b, &a).unwrap();
        let w2 = Field::from_coeffs(&b, &c).unwrap();
        for p in convex_families() {
            let z1 = prox_step(&p, &w1, 0.01, 1e-12, 100).unwrap();
            let z2 = prox_step(&p, &w2, 0.01, 1e-12, 100).unwrap();
            let tag = p.h_tag();
            prop_assert!(z1.distance_sq(&z2, tag).sqrt() <= w1.distance_sq(&w2, tag).sqrt() + 1e-9);
        }
    }

    #[test]
    fn proximal_step_dissipates_energy(a in prop::collection::vec(-1.0..1.0f64, 6), dt in 1e-4..1e-2f64) {
        let b = SpectralBasis::new(6);
        let x = Field::from_fn(&b, |k| a[k - 1] / k as f64);
        for (_, p) in families() {
            let next = prox_step(&p, &x, dt, 1e-10, 100).unwrap();
            let lhs = p.phi_value(&next) + next.distance_sq(&x, p.h_tag()) / (2.0 * dt);
            prop_assert!(lhs <= p.phi_value(&x) + 1e-10);
        }
    }
}

#[test]
fn heat_without_noise_decays_per_mode() {
    let b = SpectralBasis::new(6);
    let h = Potential::reaction_diffusion(ReactionParams::none()).unwrap();
    let x0 = Field::from_fn(&b, |k| 1.0 / k as f64);
    let cfg = SchemeConfig::proximal(1e-3, 0.01);
    let sol = simulate_path(&x0, &b, &h, &prepared(&NoiseOperator::zero(), &b, &h), &cfg, 0).unwrap();
    for k in 1..=6 {
        let want = x0.coeffs()[k - 1] / (1.0 + 1e-3 * b.eigenvalues()[k - 1]).powi(10);
        assert!((sol.final_state.coeffs()[k - 1] - want).abs() < 1e-14);
    }
}
