//! Diffusion operators `B` with `U = L²(0,1)` and `ẽ_k = e_k`, their
//! Galerkin projections, and the Lipschitz / weighted Hilbert–Schmidt
//! diagnostics.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{weighted_hs_norm, Family, FamilyParams, Potential};
use crate::projections::{project_orthogonal, project_weighted, WeightedProjectionProblem};
use crate::rng::BrownianPath;
use crate::spectral::{Field, SpaceTag, SpectralBasis};

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// `B(u) = Σ g_k (e_k, u)`.
    Additive { g: Vec<Field> },
    /// `B(v)(h) = Σ μ_k e_k v (e_k, h)`.
    LinearMultiplicative { mu: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Orthogonal,
    #[default]
    Weighted,
}

/// Deterministic time modulation `s(t)` multiplying the operator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Constant,
    /// `s(t) = offset + slope·t`.
    Linear { offset: f64, slope: f64 },
}

impl Modulation {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Modulation::Constant => 1.0,
            Modulation::Linear { offset, slope } => offset + slope * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOperator {
    pub kind: NoiseKind,
    pub projection_mode: ProjectionMode,
    pub modulation: Modulation,
}

impl NoiseOperator {
    pub fn zero() -> Self {
        Self::new(NoiseKind::Zero)
    }

    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            projection_mode: ProjectionMode::default(),
            modulation: Modulation::default(),
        }
    }

    pub fn additive(g: Vec<Field>) -> Self {
        Self::new(NoiseKind::Additive { g })
    }

    pub fn multiplicative(mu: Vec<f64>) -> Self {
        Self::new(NoiseKind::LinearMultiplicative { mu })
    }

    /// `g_k = amplitude·k^{−decay}·e_k`, k = 1..=modes, on `basis`.
    pub fn additive_powerlaw(basis: &Arc<SpectralBasis>, amplitude: f64, decay: f64, modes: usize) -> Result<Self> {
        let g = (1..=modes)
            .map(|k| Field::basis_vector(basis, k).map(|e| e.scaled(amplitude * (k as f64).powf(-decay))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::additive(g))
    }

    /// `μ_k = amplitude·k^{−decay}`, k = 1..=modes.
    pub fn multiplicative_powerlaw(amplitude: f64, decay: f64, modes: usize) -> Self {
        Self::multiplicative((1..=modes).map(|k| amplitude * (k as f64).powf(-decay)).collect())
    }

    pub fn with_projection(mut self, mode: ProjectionMode) -> Self {
        self.projection_mode = mode;
        self
    }

    pub fn with_modulation(mut self, modulation: Modulation) -> Self {
        self.modulation = modulation;
        self
    }

    /// Number of retained noise modes `K`.
    pub fn n_modes(&self) -> usize {
        match &self.kind {
            NoiseKind::Zero => 0,
            NoiseKind::Additive { g } => g.len(),
            NoiseKind::LinearMultiplicative { mu } => mu.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NoiseKind::Zero) || self.n_modes() == 0
    }

    /// Whether `B(v)` does not depend on `v`.
    pub fn is_state_independent(&self) -> bool {
        !matches!(self.kind, NoiseKind::LinearMultiplicative { .. })
    }
}

fn check_mode(op: &NoiseOperator, k: usize) -> Result<()> {
    if k == 0 || k > op.n_modes() {
        return Err(Error::Dimension(format!(
            "noise mode {k} out of range 1..={}",
            op.n_modes()
        )));
    }
    Ok(())
}

/// `e_k ⊙ v` by pointwise multiplication at the nodes of `basis`, analysed
/// onto the modes of `basis`.
fn mode_product(v: &Field, k: usize, basis: &Arc<SpectralBasis>) -> Field {
    let v = v.rebase(basis);
    let ek = basis.sine_row(k);
    let w = basis.quad_weights()[0];
    let prod: Vec<f64> = v.values().iter().zip(ek).map(|(a, b)| a * b).collect();
    let c = (1..=basis.n_modes())
        .map(|j| w * crate::spectral::dot(&prod, basis.sine_row(j)))
        .collect();
    Field::from_vec(basis, c)
}

/// `B(v)(ẽ_k)` on the basis of `v` (unmodulated).
pub fn apply_mode(op: &NoiseOperator, v: &Field, k: usize) -> Result<Field> {
    check_mode(op, k)?;
    match &op.kind {
        NoiseKind::Zero => Ok(Field::zeros(v.basis())),
        NoiseKind::Additive { g } => Ok(g[k - 1].clone()),
        NoiseKind::LinearMultiplicative { mu } => {
            if k > v.n_modes() {
                let ext = SpectralBasis::new(k.max(v.n_modes()));
                Ok(mode_product(v, k, &ext).scaled(mu[k - 1]))
            } else {
                Ok(mode_product(v, k, v.basis()).scaled(mu[k - 1]))
            }
        }
    }
}

/// A noise operator bound to a Galerkin basis and potential, with the
/// state-independent projections cached.
#[derive(Debug, Clone)]
pub struct PreparedNoise {
    op: NoiseOperator,
    basis: Arc<SpectralBasis>,
    potential: Potential,
    projected_additive: Vec<Field>,
    extended: Arc<SpectralBasis>,
}

impl PreparedNoise {
    pub fn new(op: &NoiseOperator, basis: &Arc<SpectralBasis>, potential: &Potential) -> Result<Self> {
        let n = basis.n_modes();
        let mut projected_additive = Vec::new();
        if let NoiseKind::Additive { g } = &op.kind {
            for gk in g {
                let src = if gk.n_modes() < n { gk.rebase(basis) } else { gk.clone() };
                projected_additive.push(project_into(&src, basis, potential, op.projection_mode)?);
            }
        }
        let ext_modes = n + op.n_modes();
        let extended = if matches!(op.kind, NoiseKind::LinearMultiplicative { .. }) {
            SpectralBasis::new(ext_modes)
        } else {
            basis.clone()
        };
        Ok(Self {
            op: op.clone(),
            basis: basis.clone(),
            potential: potential.clone(),
            projected_additive,
            extended,
        })
    }

    pub fn operator(&self) -> &NoiseOperator {
        &self.op
    }

    pub fn n_modes(&self) -> usize {
        self.op.n_modes()
    }

    pub fn is_zero(&self) -> bool {
        self.op.is_zero()
    }

    pub fn is_state_independent(&self) -> bool {
        self.op.is_state_independent()
    }

    /// `Π B(v)(ẽ_k)` in `H_n` (unmodulated).
    pub fn projected_mode(&self, v: &Field, k: usize) -> Result<Field> {
        check_mode(&self.op, k)?;
        match &self.op.kind {
            NoiseKind::Zero => Ok(Field::zeros(&self.basis)),
            NoiseKind::Additive { .. } => Ok(self.projected_additive[k - 1].clone()),
            NoiseKind::LinearMultiplicative { mu } => {
                let prod = mode_product(v, k, &self.extended).scaled(mu[k - 1]);
                project_into(&prod, &self.basis, &self.potential, self.op.projection_mode)
            }
        }
    }

    /// `s(t) Σ_k Π B(v)(ẽ_k) ΔW_k`.
    pub fn increment(&self, v: &Field, t: f64, dw: &[f64]) -> Result<Field> {
        let mut acc = vec![0.0; self.basis.n_modes()];
        if self.is_zero() {
            return Ok(Field::from_vec(&self.basis, acc));
        }
        let s = self.op.modulation.at(t);
        for (k, &w) in dw.iter().enumerate().take(self.n_modes()) {
            let b = self.projected_mode(v, k + 1)?;
            for (a, c) in acc.iter_mut().zip(b.coeffs()) {
                *a += s * w * c;
            }
        }
        Ok(Field::from_vec(&self.basis, acc))
    }
}

fn project_into(
    h: &Field,
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    mode: ProjectionMode,
) -> Result<Field> {
    let n = basis.n_modes();
    match mode {
        ProjectionMode::Orthogonal => Ok(project_orthogonal(h, n)?.rebase(basis)),
        ProjectionMode::Weighted => {
            if potential.phi_tilde_1_is_diagonal() {
                Ok(h.rebase(basis))
            } else {
                Ok(project_weighted(&WeightedProjectionProblem::new(h, n, potential))?.rebase(basis))
            }
        }
    }
}

/// One stochastic increment `Σ_k Π B(v)(ẽ_k) ΔW_k` over `[step·dt, (step+1)·dt)`.
pub fn sample_increment(
    noise: &PreparedNoise,
    v: &Field,
    t: f64,
    step: usize,
    substeps: usize,
    path: &mut BrownianPath,
) -> Result<Field> {
    if noise.is_zero() {
        return Ok(Field::zeros(v.basis()));
    }
    let dw = path.increments(noise.n_modes(), step, substeps);
    noise.increment(v, t, &dw)
}

/// `max Σ_k ‖B(v)(ẽ_k) − B(w)(ẽ_k)‖²_H / ‖v − w‖²_H` over random pairs in
/// `H_n`.
pub fn a5_lipschitz_estimate<R: Rng>(
    op: &NoiseOperator,
    basis: &Arc<SpectralBasis>,
    tag: SpaceTag,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let NoiseKind::LinearMultiplicative { mu } = &op.kind else {
        return 0.0;
    };
    let ext = SpectralBasis::new(basis.n_modes() + mu.len());
    let mut best: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let u = random_field(basis, rng);
        let denom = u.norm_sq(tag);
        if denom == 0.0 {
            continue;
        }
        // B is linear, so B(v) − B(w) = B(v − w).
        let num: f64 = mu
            .iter()
            .enumerate()
            .map(|(i, m)| m * m * mode_product(&u, i + 1, &ext).norm_sq(tag))
            .sum();
        best = best.max(num / denom);
    }
    best
}

/// Analytic bound on the (A5) constant of linear multiplicative noise:
/// `Σ μ_k² (‖e_k‖_∞ + ‖e_k'‖_∞/π)²` in `H^{-1}`, `Σ μ_k² ‖e_k‖²_∞` in `L²`.
pub fn a5_analytic_bound(op: &NoiseOperator, tag: SpaceTag) -> f64 {
    let NoiseKind::LinearMultiplicative { mu } = &op.kind else {
        return 0.0;
    };
    mu.iter()
        .enumerate()
        .map(|(i, m)| {
            let k = (i + 1) as f64;
            let factor = match tag {
                SpaceTag::L2 => 2.0,
                SpaceTag::Hminus1 => 2.0 * (1.0 + k) * (1.0 + k),
                SpaceTag::H1zero => f64::INFINITY,
            };
            m * m * factor
        })
        .sum()
}

fn random_field<R: Rng>(basis: &Arc<SpectralBasis>, rng: &mut R) -> Field {
    Field::from_fn(basis, |k| rng.random_range(-1.0..1.0) / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A6Report {
    pub norm: f64,
    /// `norm / (1 + φ(v) + ‖v‖²_H)`.
    pub ratio: f64,
}

/// `Σ_i (Σ_k φ̃₁(s(t) B(v)(ẽ_k))^{1/p_i})^{p_i}` over the retained modes,
/// with `B(v)(ẽ_k)` unprojected.
pub fn a6_norm(op: &NoiseOperator, v: &Field, t: f64, potential: &Potential) -> Result<A6Report> {
    let s = op.modulation.at(t);
    let values: Vec<f64> = match &op.kind {
        NoiseKind::Zero => Vec::new(),
        NoiseKind::Additive { g } => g.iter().map(|gk| potential.phi_tilde_1_value(&gk.scaled(s))).collect(),
        NoiseKind::LinearMultiplicative { mu } => {
            let ext = SpectralBasis::new(v.n_modes() + mu.len());
            mu.iter()
                .enumerate()
                .map(|(i, m)| potential.phi_tilde_1_value(&mode_product(v, i + 1, &ext).scaled(s * m)))
                .collect()
        }
    };
    let norm = if values.is_empty() {
        0.0
    } else {
        weighted_hs_norm(potential, values.iter().copied())
    };
    let denom = 1.0 + potential.phi_value(v) + v.norm_sq(potential.h_tag());
    Ok(A6Report {
        norm,
        ratio: norm / denom,
    })
}

/// Kind of power-law noise preset, for the summability checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummabilityReport {
    /// Exponents `s` of the series `Σ k^{−s}` that must converge.
    pub series_exponents: Vec<f64>,
    pub satisfied: bool,
    /// Bound on the omitted tail `Σ_{k>K} k^{−s}` of the slowest series.
    pub tail_bound: f64,
}

/// Checks the sufficient decay condition for power-law noise with
/// coefficients `∝ k^{−decay}` against the family of `potential`.
///
/// `λ_k` in the multiplicative conditions is the Dirichlet eigenvalue
/// `(kπ)²` for the porous-medium family and `‖e_k‖_∞ + ‖e_k'‖_∞ ∝ k` for the
/// other two.
pub fn summability(potential: &Potential, kind: PresetKind, decay: f64, modes: usize) -> SummabilityReport {
    let orders: Vec<f64> = match potential.params() {
        FamilyParams::ReactionDiffusion(r) => r.growth_orders(),
        FamilyParams::PLaplace(p) => p.reactions.iter().map(|f| f.degree() + 1.0).collect(),
        _ => Vec::new(),
    };
    let r1 = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let rn = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d = decay;
    let exps: Vec<f64> = match (potential.family(), kind) {
        (Family::Free, _) => vec![2.0 * d],
        (Family::PorousMedium, PresetKind::Additive) => {
            let p = potential.max_degree() - 1.0;
            vec![2.0 * d, 4.0 * (d + 1.0) / (p + 1.0)]
        }
        (Family::PorousMedium, PresetKind::Multiplicative) => {
            let p = potential.max_degree() - 1.0;
            vec![4.0 * (d - 2.0) / (p + 1.0)]
        }
        (Family::ReactionDiffusion, kind) => {
            let (r1, rn) = if orders.is_empty() { (2.0, 2.0) } else { (r1, rn) };
            match kind {
                PresetKind::Additive => vec![4.0 * (d - 1.0) / rn, 2.0 * r1 * d / rn],
                PresetKind::Multiplicative => vec![(d - 1.0) * (4.0 / rn).min(2.0 * r1 / rn)],
            }
        }
        (Family::PLaplace, kind) => {
            let m = match potential.params() {
                FamilyParams::PLaplace(p) => p.m,
                _ => unreachable!(),
            };
            let rn = if orders.is_empty() { m } else { rn };
            match kind {
                PresetKind::Additive => vec![
                    (d - 1.0) * (2.0 * m / rn).min(1.0),
                    d * (2.0 / m).min(4.0 / rn),
                ],
                PresetKind::Multiplicative => vec![(d - 1.0) * (4.0 / m).min(4.0 / rn).min(1.0)],
            }
        }
    };
    let slowest = exps.iter().copied().fold(f64::INFINITY, f64::min);
    let satisfied = slowest > 1.0;
    let tail_bound = if satisfied {
        (modes.max(1) as f64).powf(1.0 - slowest) / (slowest - 1.0)
    } else {
        f64::INFINITY
    };
    SummabilityReport {
        series_exponents: exps,
        satisfied,
        tail_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::ReactionParams;
    use rand::SeedableRng;

    #[test]
    fn zero_noise_is_zero() {
        let b = SpectralBasis::new(4);
        let pot = Potential::porous_medium(2.0).unwrap();
        let prepared = PreparedNoise::new(&NoiseOperator::zero(), &b, &pot).unwrap();
        let v = Field::from_fn(&b, |k| k as f64);
        let mut path = BrownianPath::new(0, 0, 0.1);
        let inc = sample_increment(&prepared, &v, 0.0, 0, 1, &mut path).unwrap();
        assert!(inc.coeffs().iter().all(|c| *c == 0.0));
        assert!(apply_mode(&NoiseOperator::zero(), &v, 1).is_err());
    }

    #[test]
    fn multiplicative_mode_product() {
        let b = SpectralBasis::new(6);
        let op = NoiseOperator::multiplicative(vec![1.0]);
        let e1 = Field::basis_vector(&b, 1).unwrap();
        let out = apply_mode(&op, &e1, 1).unwrap();
        // ∫ 2 sin²(πξ) √2 sin(πξ) dξ = 8√2 / (3π)
        let want = 8.0 * 2f64.sqrt() / (3.0 * std::f64::consts::PI);
        // e_1³ is not a trigonometric polynomial in cos(2πjξ), so the
        // midpoint rule is only second-order accurate here.
        assert!((out.coeffs()[0] - want).abs() < 1e-5);
        assert!(out.coeffs()[1].abs() < 1e-14);
        let zero = apply_mode(&op, &Field::zeros(&b), 1).unwrap();
        assert!(zero.coeffs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn a5_and_a6_trivial_cases() {
        let b = SpectralBasis::new(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let add = NoiseOperator::additive(vec![Field::basis_vector(&b, 1).unwrap()]);
        assert_eq!(a5_lipschitz_estimate(&add, &b, SpaceTag::L2, 10, &mut rng), 0.0);
        let pot = Potential::reaction_diffusion(ReactionParams::new(vec![crate::ScalarLaw::polynomial(&[0.0, -1.0])])).unwrap();
        let r = a6_norm(&add, &Field::zeros(&b), 0.0, &pot).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((r.norm - (pi2 / 2.0 + 1.5)).abs() < 1e-12);
        let z = a6_norm(&NoiseOperator::zero(), &Field::zeros(&b), 0.0, &pot).unwrap();
        assert_eq!(z.norm, 0.0);
    }

    #[test]
    fn summability_presets() {
        let pm = Potential::porous_medium(2.0).unwrap();
        assert!(summability(&pm, PresetKind::Multiplicative, 3.0, 8).satisfied);
        assert!(!summability(&pm, PresetKind::Multiplicative, 2.5, 8).satisfied);
        assert!(summability(&pm, PresetKind::Additive, 1.0, 8).satisfied);
        let heat = Potential::reaction_diffusion(ReactionParams::none()).unwrap();
        assert!(summability(&heat, PresetKind::Additive, 1.6, 8).satisfied);
        assert!(!summability(&heat, PresetKind::Additive, 1.4, 8).satisfied);
    }
}
