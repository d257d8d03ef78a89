//! Quasi-convex energies `φ`, comparison functionals `φ̃` and their
//! derivatives for the porous-medium, reaction–diffusion and p-Laplace
//! families.
//!
//! Every functional used here has the local form
//!
//! ```text
//! F(v) = a/2 ℰ(v,v) + b/2 ‖v‖²_H + ∫ Σ G_i(v) dξ + ∫ Σ K_j(v') dξ
//! ```
//!
//! with `ℰ(v,v) = ∫ |v'|²`. [`LocalFunctional`] evaluates such functionals,
//! their coefficient-space gradients and Hessians on a sine basis; the
//! families only differ in which terms they switch on.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{pow_abs, Field, SpaceTag};

/// A scalar nonlinearity `Φ ∈ C¹(ℝ)` together with `Φ'` and the
/// antiderivative `Ψ(r) = ∫₀ʳ Φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarLaw {
    /// `Φ(r) = scale·|r|^{exponent−1} r`.
    Power { exponent: f64, scale: f64 },
    /// `Φ(r) = Σ_j coeffs[j] r^j`.
    Polynomial { coeffs: Vec<f64> },
}

impl ScalarLaw {
    pub fn power(exponent: f64) -> Self {
        ScalarLaw::Power {
            exponent,
            scale: 1.0,
        }
    }

    pub fn polynomial(coeffs: &[f64]) -> Self {
        ScalarLaw::Polynomial {
            coeffs: coeffs.to_vec(),
        }
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match self {
            ScalarLaw::Power { exponent, scale } => {
                if *exponent == 1.0 {
                    scale * r
                } else {
                    scale * pow_abs(r, exponent - 1.0) * r
                }
            }
            ScalarLaw::Polynomial { coeffs } => horner(coeffs, r),
        }
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            ScalarLaw::Power { exponent, scale } => {
                scale * exponent * pow_abs(r, exponent - 1.0)
            }
            ScalarLaw::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * r + j as f64 * c;
                }
                acc
            }
        }
    }

    #[inline]
    pub fn antiderivative(&self, r: f64) -> f64 {
        match self {
            ScalarLaw::Power { exponent, scale } => {
                scale * pow_abs(r, exponent + 1.0) / (exponent + 1.0)
            }
            ScalarLaw::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate().rev() {
                    acc = acc * r + c / (j + 1) as f64;
                }
                acc * r
            }
        }
    }

    /// Growth exponent of `|Φ|` at infinity.
    pub fn degree(&self) -> f64 {
        match self {
            ScalarLaw::Power { exponent, .. } => *exponent,
            ScalarLaw::Polynomial { coeffs } => {
                coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0) as f64
            }
        }
    }

    fn leading(&self) -> f64 {
        match self {
            ScalarLaw::Power { scale, .. } => *scale,
            ScalarLaw::Polynomial { coeffs } => coeffs
                .iter()
                .rev()
                .find(|c| **c != 0.0)
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// `sup_r Φ'(r)`, or `None` if unbounded above.
    pub fn derivative_sup(&self) -> Option<f64> {
        match self {
            ScalarLaw::Power { exponent, scale } => {
                if *exponent == 1.0 {
                    Some(*scale)
                } else if *scale <= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            ScalarLaw::Polynomial { coeffs } => {
                let deg = self.degree() as usize;
                if deg <= 1 {
                    return Some(if deg == 1 { coeffs[1] } else { 0.0 });
                }
                // Φ' has degree deg−1; it is bounded above iff that degree is
                // even with a negative leading coefficient.
                if (deg - 1) % 2 == 1 || self.leading() > 0.0 {
                    return None;
                }
                // Extrema of Φ' are roots of Φ'', all inside the Cauchy bound.
                let lead = deg as f64 * (deg - 1) as f64 * coeffs[deg];
                let radius = 1.0
                    + (2..deg)
                        .map(|j| (j as f64 * (j - 1) as f64 * coeffs[j] / lead).abs())
                        .fold(0.0, f64::max);
                Some(maximize_1d(|r| self.derivative(r), -radius, radius))
            }
        }
    }
}

fn horner(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
}

fn maximize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let (mut best_x, mut best) = (lo, f(lo));
    for i in 1..=n {
        let x = lo + i as f64 * h;
        let y = f(x);
        if y > best {
            best = y;
            best_x = x;
        }
    }
    // Golden-section refinement around the best grid point.
    let (mut a, mut b) = (best_x - h, best_x + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b)))
}

/// `coef · Ψ_law(·)` as an integrand.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Term {
    pub coef: f64,
    pub law: ScalarLaw,
}

impl Term {
    fn new(coef: f64, law: ScalarLaw) -> Self {
        Self { coef, law }
    }
}

/// `a/2 ℰ(v,v) + b/2 ‖v‖²_H + ∫ ΣG(v) + ∫ ΣK(v')`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunctional {
    pub(crate) dirichlet: f64,
    pub(crate) h_quadratic: f64,
    pub(crate) tag: SpaceTag,
    pub(crate) value_terms: Vec<Term>,
    pub(crate) gradient_terms: Vec<Term>,
}

impl LocalFunctional {
    fn new(tag: SpaceTag) -> Self {
        Self {
            dirichlet: 0.0,
            h_quadratic: 0.0,
            tag,
            value_terms: Vec::new(),
            gradient_terms: Vec::new(),
        }
    }

    fn with_h_quadratic(&self, b: f64) -> Self {
        let mut f = self.clone();
        f.h_quadratic += b;
        f
    }

    /// True when the functional is a quadratic form diagonal in the sine basis.
    pub fn is_diagonal_quadratic(&self) -> bool {
        self.gradient_terms.is_empty()
            && self.value_terms.iter().all(|t| match &t.law {
                ScalarLaw::Power { exponent, .. } => *exponent == 1.0,
                ScalarLaw::Polynomial { coeffs } => {
                    coeffs.iter().enumerate().all(|(j, c)| j == 1 || *c == 0.0)
                }
            })
    }

    /// Diagonal of the quadratic part (`a λ_k + b w_k`) plus, for
    /// [`is_diagonal_quadratic`](Self::is_diagonal_quadratic) functionals,
    /// the contribution of the linear laws.
    pub(crate) fn diagonal_quadratic(&self, eigenvalues: &[f64]) -> Vec<f64> {
        let lin: f64 = self
            .value_terms
            .iter()
            .map(|t| t.coef * t.law.derivative(0.0))
            .sum();
        eigenvalues
            .iter()
            .map(|&l| self.dirichlet * l + self.h_quadratic * self.tag.weight(l) + lin)
            .collect()
    }

    fn quadratic_part(&self, coeffs: &[f64], lambdas: &[f64]) -> f64 {
        if self.dirichlet == 0.0 && self.h_quadratic == 0.0 {
            return 0.0;
        }
        0.5 * coeffs
            .iter()
            .zip(lambdas)
            .map(|(c, &l)| c * c * (self.dirichlet * l + self.h_quadratic * self.tag.weight(l)))
            .sum::<f64>()
    }

    pub fn value(&self, v: &Field) -> f64 {
        let basis = v.basis();
        let mut total = self.quadratic_part(v.coeffs(), basis.eigenvalues());
        let w = basis.quad_weights()[0];
        if !self.value_terms.is_empty() {
            let s: f64 = v
                .values()
                .iter()
                .map(|&x| {
                    self.value_terms
                        .iter()
                        .map(|t| t.coef * t.law.antiderivative(x))
                        .sum::<f64>()
                })
                .sum();
            total += w * s;
        }
        if !self.gradient_terms.is_empty() {
            let s: f64 = v
                .derivative_values()
                .iter()
                .map(|&x| {
                    self.gradient_terms
                        .iter()
                        .map(|t| t.coef * t.law.antiderivative(x))
                        .sum::<f64>()
                })
                .sum();
            total += w * s;
        }
        total
    }

    /// `∂F/∂c_k = DF(v)(e_k)` for k = 1..=n.
    pub fn coef_gradient(&self, v: &Field, n: usize) -> Vec<f64> {
        let basis = v.basis();
        let lambdas = basis.eigenvalues();
        let c = v.coeffs();
        let mut g: Vec<f64> = (0..n)
            .map(|i| {
                c[i] * (self.dirichlet * lambdas[i] + self.h_quadratic * self.tag.weight(lambdas[i]))
            })
            .collect();
        if !self.value_terms.is_empty() {
            let dens: Vec<f64> = v
                .values()
                .iter()
                .map(|&x| self.value_terms.iter().map(|t| t.coef * t.law.value(x)).sum())
                .collect();
            for (gi, p) in g.iter_mut().zip(basis.project_values(&dens, n)) {
                *gi += p;
            }
        }
        if !self.gradient_terms.is_empty() {
            let dens: Vec<f64> = v
                .derivative_values()
                .iter()
                .map(|&x| self.gradient_terms.iter().map(|t| t.coef * t.law.value(x)).sum())
                .collect();
            for (gi, p) in g.iter_mut().zip(basis.project_values_derivative(&dens, n)) {
                *gi += p;
            }
        }
        g
    }

    /// `D²F(v)(e_k, e_l)` for k, l = 1..=n.
    pub fn hessian(&self, v: &Field, n: usize) -> DMatrix<f64> {
        let basis = v.basis();
        let lambdas = basis.eigenvalues();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] =
                self.dirichlet * lambdas[i] + self.h_quadratic * self.tag.weight(lambdas[i]);
        }
        if !self.value_terms.is_empty() {
            let dens: Vec<f64> = v
                .values()
                .iter()
                .map(|&x| {
                    self.value_terms
                        .iter()
                        .map(|t| t.coef * t.law.derivative(x))
                        .sum()
                })
                .collect();
            // 2 sin(a) sin(b) = cos(a−b) − cos(a+b)
            let mom = basis.cosine_moments(&dens, n);
            for k in 1..=n {
                for l in 1..=n {
                    h[(k - 1, l - 1)] += mom[k.abs_diff(l)] - mom[k + l];
                }
            }
        }
        if !self.gradient_terms.is_empty() {
            let dens: Vec<f64> = v
                .derivative_values()
                .iter()
                .map(|&x| {
                    self.gradient_terms
                        .iter()
                        .map(|t| t.coef * t.law.derivative(x))
                        .sum()
                })
                .collect();
            // 2 cos(a) cos(b) = cos(a−b) + cos(a+b)
            let mom = basis.cosine_moments(&dens, n);
            for k in 1..=n {
                for l in 1..=n {
                    let s = (k * l) as f64 * PI * PI;
                    h[(k - 1, l - 1)] += s * (mom[k.abs_diff(l)] + mom[k + l]);
                }
            }
        }
        h
    }

    /// `D²F(v)(w, w)`.
    pub fn qform(&self, v: &Field, w: &Field) -> f64 {
        let basis = v.basis();
        let w = w.rebase(basis);
        let mut total = 2.0 * self.quadratic_part(w.coeffs(), basis.eigenvalues());
        let q = basis.quad_weights()[0];
        if !self.value_terms.is_empty() {
            let s: f64 = v
                .values()
                .iter()
                .zip(w.values())
                .map(|(&x, &y)| {
                    self.value_terms
                        .iter()
                        .map(|t| t.coef * t.law.derivative(x))
                        .sum::<f64>()
                        * y
                        * y
                })
                .sum();
            total += q * s;
        }
        if !self.gradient_terms.is_empty() {
            let s: f64 = v
                .derivative_values()
                .iter()
                .zip(w.derivative_values())
                .map(|(&x, y)| {
                    self.gradient_terms
                        .iter()
                        .map(|t| t.coef * t.law.derivative(x))
                        .sum::<f64>()
                        * y
                        * y
                })
                .sum();
            total += q * s;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PorousMedium,
    ReactionDiffusion,
    PLaplace,
    /// `φ ≡ 0`: the decoupled case used to isolate the noise.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousMediumParams {
    pub p: f64,
    pub phi: ScalarLaw,
}

impl PorousMediumParams {
    /// `Φ(r) = |r|^{p−1} r`.
    pub fn power_law(p: f64) -> Self {
        Self {
            p,
            phi: ScalarLaw::power(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionParams {
    pub reactions: Vec<ScalarLaw>,
}

impl ReactionParams {
    /// The pure heat equation, `f ≡ 0`.
    pub fn none() -> Self {
        Self {
            reactions: Vec::new(),
        }
    }

    pub fn new(reactions: Vec<ScalarLaw>) -> Self {
        Self { reactions }
    }

    /// Growth orders `r_i = deg f_i + 1`.
    pub fn growth_orders(&self) -> Vec<f64> {
        self.reactions.iter().map(|f| f.degree() + 1.0).collect()
    }
}

impl Default for ReactionParams {
    /// `f(t) = t − t³`.
    fn default() -> Self {
        Self::new(vec![ScalarLaw::polynomial(&[0.0, 1.0, 0.0, -1.0])])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLaplaceParams {
    pub m: f64,
    /// `Φ = Ψ'` acting on `v'`.
    pub phi: ScalarLaw,
    pub reactions: Vec<ScalarLaw>,
}

impl PLaplaceParams {
    /// `Ψ(x) = |x|^m / m`, no reaction.
    pub fn standard(m: f64) -> Self {
        Self {
            m,
            phi: ScalarLaw::power(m - 1.0),
            reactions: Vec::new(),
        }
    }

    pub fn with_reactions(mut self, reactions: Vec<ScalarLaw>) -> Self {
        self.reactions = reactions;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    PorousMedium(PorousMediumParams),
    ReactionDiffusion(ReactionParams),
    PLaplace(PLaplaceParams),
    Free,
}

/// The energy `φ`, its comparison functional `φ̃` and the metadata the
/// assumption checks need.
#[derive(Debug, Clone)]
pub struct Potential {
    family: Family,
    params: FamilyParams,
    lambda_qc: f64,
    homogeneity_degrees: Vec<f64>,
    p_list: Vec<f64>,
    h_tag: SpaceTag,
    phi: LocalFunctional,
    phi_tilde: LocalFunctional,
    phi_tilde_1: LocalFunctional,
    warnings: Vec<String>,
}

const SAMPLE_RADIUS: f64 = 10.0;
const SAMPLE_COUNT: usize = 2001;

fn sample_points() -> impl Iterator<Item = f64> {
    (0..SAMPLE_COUNT)
        .map(|i| -SAMPLE_RADIUS + 2.0 * SAMPLE_RADIUS * i as f64 / (SAMPLE_COUNT - 1) as f64)
}

fn validate_monotone_law(name: &str, law: &ScalarLaw, errors: &mut Vec<String>) {
    if law.value(0.0) != 0.0 {
        errors.push(format!("{name}(0) = {} but must be 0", law.value(0.0)));
    }
    if let Some(r) = sample_points().find(|&r| law.derivative(r) < -1e-12) {
        errors.push(format!(
            "{name}' must be non-negative, found {name}'({r}) = {}",
            law.derivative(r)
        ));
    }
    if law.degree() < 1.0 {
        errors.push(format!("{name} must grow at least linearly"));
    }
}

fn validate_reaction(i: usize, f: &ScalarLaw, errors: &mut Vec<String>) {
    let deg = f.degree();
    let odd_poly = matches!(f, ScalarLaw::Polynomial { .. }) && (deg as usize) % 2 == 1;
    let dissipative_power = matches!(f, ScalarLaw::Power { scale, .. } if *scale < 0.0);
    if !(odd_poly || dissipative_power) || f.leading() >= 0.0 {
        errors.push(format!(
            "reaction f_{} must be an odd-degree polynomial (or signed power) with negative leading coefficient",
            i + 1
        ));
    }
    if deg + 1.0 < 2.0 {
        errors.push(format!("reaction f_{} has growth order below 2", i + 1));
    }
    if f.derivative_sup().is_none() {
        errors.push(format!("reaction f_{} has f' unbounded above", i + 1));
    }
}

fn reaction_lambda(reactions: &[ScalarLaw]) -> f64 {
    reactions
        .iter()
        .map(|f| f.derivative_sup().unwrap_or(f64::INFINITY))
        .sum::<f64>()
        .max(0.0)
}

impl Potential {
    /// Porous medium with `Φ(r) = |r|^{p−1} r`.
    pub fn porous_medium(p: f64) -> Result<Self> {
        Self::porous_medium_with(PorousMediumParams::power_law(p))
    }

    pub fn porous_medium_with(params: PorousMediumParams) -> Result<Self> {
        let mut errors = Vec::new();
        if !(params.p >= 1.0) {
            errors.push(format!("porous-medium exponent p = {} must be >= 1", params.p));
        }
        validate_monotone_law("Phi", &params.phi, &mut errors);
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let tag = SpaceTag::Hminus1;
        let mut phi = LocalFunctional::new(tag);
        phi.value_terms.push(Term::new(1.0, params.phi.clone()));
        let mut phi_tilde = LocalFunctional::new(tag);
        phi_tilde.value_terms.push(Term::new(1.0, ScalarLaw::power(params.p)));
        let mut warnings = Vec::new();
        if params.p < 2.0 {
            warnings.push(format!(
                "p = {} < 2: Phi' is only Holder continuous at 0, Hessians use one-sided values",
                params.p
            ));
        }
        Ok(Self {
            family: Family::PorousMedium,
            lambda_qc: 0.0,
            homogeneity_degrees: vec![params.p + 1.0],
            p_list: vec![(params.p + 1.0) / 2.0],
            h_tag: tag,
            phi_tilde_1: phi_tilde.with_h_quadratic(1.0),
            phi,
            phi_tilde,
            params: FamilyParams::PorousMedium(params),
            warnings,
        })
    }

    pub fn reaction_diffusion(params: ReactionParams) -> Result<Self> {
        let mut errors = Vec::new();
        for (i, f) in params.reactions.iter().enumerate() {
            validate_reaction(i, f, &mut errors);
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let tag = SpaceTag::L2;
        let mut phi = LocalFunctional::new(tag);
        phi.dirichlet = 1.0;
        let mut phi_tilde = LocalFunctional::new(tag);
        phi_tilde.dirichlet = 1.0;
        let orders = params.growth_orders();
        for (f, &r) in params.reactions.iter().zip(&orders) {
            phi.value_terms.push(Term::new(-1.0, f.clone()));
            // r·Ψ of |t|^{r−2}t is |t|^r.
            phi_tilde.value_terms.push(Term::new(r, ScalarLaw::power(r - 1.0)));
        }
        let mut degrees = vec![2.0];
        degrees.extend(&orders);
        Ok(Self {
            family: Family::ReactionDiffusion,
            lambda_qc: reaction_lambda(&params.reactions),
            homogeneity_degrees: degrees,
            p_list: orders.iter().map(|r| r / 2.0).collect(),
            h_tag: tag,
            phi_tilde_1: phi_tilde.with_h_quadratic(1.0),
            phi,
            phi_tilde,
            params: FamilyParams::ReactionDiffusion(params),
            warnings: Vec::new(),
        })
    }

    pub fn p_laplace(params: PLaplaceParams) -> Result<Self> {
        let mut errors = Vec::new();
        if !(params.m >= 2.0) {
            errors.push(format!("p-Laplace exponent m = {} must be >= 2", params.m));
        }
        validate_monotone_law("Phi", &params.phi, &mut errors);
        for (i, f) in params.reactions.iter().enumerate() {
            validate_reaction(i, f, &mut errors);
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let tag = SpaceTag::L2;
        let mut phi = LocalFunctional::new(tag);
        phi.gradient_terms.push(Term::new(1.0, params.phi.clone()));
        let mut phi_tilde = LocalFunctional::new(tag);
        phi_tilde
            .gradient_terms
            .push(Term::new(1.0, ScalarLaw::power(params.m - 1.0)));
        let orders: Vec<f64> = params.reactions.iter().map(|f| f.degree() + 1.0).collect();
        for (f, &r) in params.reactions.iter().zip(&orders) {
            phi.value_terms.push(Term::new(-1.0, f.clone()));
            phi_tilde.value_terms.push(Term::new(r, ScalarLaw::power(r - 1.0)));
        }
        let mut degrees = vec![params.m];
        degrees.extend(&orders);
        let mut p_list: Vec<f64> = orders.iter().map(|r| r / 2.0).collect();
        p_list.push(params.m / 2.0);
        Ok(Self {
            family: Family::PLaplace,
            lambda_qc: reaction_lambda(&params.reactions),
            homogeneity_degrees: degrees,
            p_list,
            h_tag: tag,
            phi_tilde_1: phi_tilde.with_h_quadratic(1.0),
            phi,
            phi_tilde,
            params: FamilyParams::PLaplace(params),
            warnings: Vec::new(),
        })
    }

    /// `φ ≡ 0` with `φ̃ ≡ 0`; the weighted projection reduces to truncation.
    pub fn free(tag: SpaceTag) -> Self {
        let phi = LocalFunctional::new(tag);
        Self {
            family: Family::Free,
            params: FamilyParams::Free,
            lambda_qc: 0.0,
            homogeneity_degrees: vec![2.0],
            p_list: Vec::new(),
            h_tag: tag,
            phi_tilde_1: phi.with_h_quadratic(1.0),
            phi_tilde: phi.clone(),
            phi,
            warnings: Vec::new(),
        }
    }

    pub fn from_params(params: FamilyParams) -> Result<Self> {
        match params {
            FamilyParams::PorousMedium(p) => Self::porous_medium_with(p),
            FamilyParams::ReactionDiffusion(p) => Self::reaction_diffusion(p),
            FamilyParams::PLaplace(p) => Self::p_laplace(p),
            FamilyParams::Free => Ok(Self::free(SpaceTag::L2)),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    /// `λ ≥ 0` such that `φ + λ/2 ‖·‖²_H` is convex.
    pub fn lambda_qc(&self) -> f64 {
        self.lambda_qc
    }

    pub fn homogeneity_degrees(&self) -> &[f64] {
        &self.homogeneity_degrees
    }

    /// Largest homogeneity degree of `φ̃₁` (at least 2 for the `H` term).
    pub fn max_degree(&self) -> f64 {
        self.homogeneity_degrees.iter().copied().fold(2.0, f64::max)
    }

    pub fn p_list(&self) -> &[f64] {
        &self.p_list
    }

    /// Distinct exponents of the weighted Hilbert–Schmidt sums, always
    /// including `p_0 = 1`.
    pub fn weighted_exponents(&self) -> Vec<f64> {
        let mut ps = vec![1.0];
        for &p in &self.p_list {
            if !ps.iter().any(|q| (q - p).abs() < 1e-12) {
                ps.push(p);
            }
        }
        ps.sort_by(|a, b| a.total_cmp(b));
        ps
    }

    pub fn h_tag(&self) -> SpaceTag {
        self.h_tag
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn phi(&self) -> &LocalFunctional {
        &self.phi
    }

    pub fn phi_tilde_1(&self) -> &LocalFunctional {
        &self.phi_tilde_1
    }

    /// Whether `φ̃₁` is a quadratic form diagonal in the sine basis.
    pub fn phi_tilde_1_is_diagonal(&self) -> bool {
        self.phi_tilde_1.is_diagonal_quadratic()
    }

    /// Whether `φ` itself is a diagonal quadratic (the linear heat equation).
    pub fn phi_is_diagonal(&self) -> bool {
        self.phi.is_diagonal_quadratic()
    }

    pub fn phi_value(&self, v: &Field) -> f64 {
        self.phi.value(v)
    }

    pub fn phi_tilde_value(&self, v: &Field) -> f64 {
        self.phi_tilde.value(v)
    }

    pub fn phi_tilde_1_value(&self, v: &Field) -> f64 {
        self.phi_tilde_1.value(v)
    }

    /// Coefficient gradient of `φ`: `Dφ(v)(e_k)`, k = 1..=n_modes.
    pub fn phi_gradient(&self, v: &Field) -> Vec<f64> {
        self.phi.coef_gradient(v, v.n_modes())
    }

    /// `H`-Riesz representative of `Dφ(v)` restricted to `H_n`.
    pub fn subgradient(&self, v: &Field) -> Field {
        let g = self.phi_gradient(v);
        let lambdas = v.basis().eigenvalues();
        let c = g
            .iter()
            .zip(lambdas)
            .map(|(d, &l)| d / self.h_tag.weight(l))
            .collect();
        Field::from_vec(v.basis(), c)
    }

    /// `‖P_n Dφ(v)‖²_H`.
    pub fn subgradient_norm_sq(&self, v: &Field) -> f64 {
        let g = self.phi_gradient(v);
        g.iter()
            .zip(v.basis().eigenvalues())
            .map(|(d, &l)| d * d / self.h_tag.weight(l))
            .sum()
    }

    pub fn hessian_qform(&self, v: &Field, w: &Field) -> f64 {
        self.phi.qform(v, w)
    }
}

fn finite_or_diverged(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::DivergedEnergy(format!("{what} evaluated to {x}")))
    }
}

pub fn eval_phi(p: &Potential, v: &Field) -> Result<f64> {
    finite_or_diverged(p.phi_value(v), "phi")
}

pub fn eval_phi_tilde(p: &Potential, v: &Field) -> Result<f64> {
    finite_or_diverged(p.phi_tilde_value(v), "phi_tilde")
}

pub fn eval_phi_tilde_1(p: &Potential, v: &Field) -> Result<f64> {
    finite_or_diverged(p.phi_tilde_1_value(v), "phi_tilde_1")
}

pub fn subgradient(p: &Potential, v: &Field) -> Field {
    p.subgradient(v)
}

pub fn hessian_qform(p: &Potential, v: &Field, w: &Field) -> f64 {
    p.hessian_qform(v, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A2Report {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
}

/// Second-derivative bound: `Σ_k D²φ(v)(w_k,w_k)` against
/// `1 + φ(v) + Σ_i (Σ_k φ̃₁(w_k)^{1/p_i})^{p_i}`.
pub fn check_a2_bound(p: &Potential, v: &Field, ws: &[Field]) -> A2Report {
    if ws.is_empty() {
        return A2Report {
            lhs: 0.0,
            rhs: 1.0 + p.phi_value(v),
            constant: 0.0,
        };
    }
    let lhs: f64 = ws.iter().map(|w| p.hessian_qform(v, w)).sum();
    let rhs = 1.0 + p.phi_value(v) + weighted_hs_norm(p, ws.iter().map(|w| p.phi_tilde_1_value(w)));
    A2Report {
        lhs,
        rhs,
        constant: lhs / rhs,
    }
}

/// `Σ_i (Σ_k x_k^{1/p_i})^{p_i}` over the distinct exponents.
pub(crate) fn weighted_hs_norm(p: &Potential, values: impl Iterator<Item = f64> + Clone) -> f64 {
    p.weighted_exponents()
        .iter()
        .map(|&e| {
            values
                .clone()
                .map(|x| x.max(0.0).powf(1.0 / e))
                .sum::<f64>()
                .powf(e)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityReport {
    /// `2⟨−Dφ(v), v⟩`.
    pub pairing: f64,
    /// `pairing / (1 + ‖v‖²_H)`.
    pub bound_a4: f64,
    /// `(pairing + C₁ φ(v)) / (1 + ‖v‖²_H)`.
    pub bound_a4prime: f64,
}

pub fn check_coercivity(p: &Potential, v: &Field, c1: f64) -> CoercivityReport {
    let g = p.phi_gradient(v);
    let pairing = -2.0 * g.iter().zip(v.coeffs()).map(|(a, b)| a * b).sum::<f64>();
    let denom = 1.0 + v.norm_sq(p.h_tag());
    CoercivityReport {
        pairing,
        bound_a4: pairing / denom,
        bound_a4prime: (pairing + c1 * p.phi_value(v)) / denom,
    }
}

/// Sampled constants of the scalar growth conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub law: String,
    /// Smallest `c₁` seen in `c₁|r|^d − c₂ ≤ Ψ(r)` over `|r| ≥ 1`.
    pub c1: f64,
    /// Smallest `c₂` with `|Φ'(r)| ≤ c₂(1 + |r|^{d−1})` over the samples.
    pub c2: f64,
    pub derivative_min: f64,
    pub derivative_sup: Option<f64>,
}

fn growth_report(name: &str, law: &ScalarLaw, sign: f64, degree: f64) -> GrowthReport {
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for r in sample_points() {
        let d = law.derivative(r);
        dmin = dmin.min(d);
        c2 = c2.max(d.abs() / (1.0 + pow_abs(r, degree - 2.0)));
        if r.abs() >= 1.0 {
            c1 = c1.min(sign * law.antiderivative(r) / pow_abs(r, degree));
        }
    }
    GrowthReport {
        law: name.to_string(),
        c1,
        c2,
        derivative_min: dmin,
        derivative_sup: law.derivative_sup(),
    }
}

/// Growth constants of every scalar law in the potential.
pub fn check_growth(p: &Potential) -> Vec<GrowthReport> {
    match p.params() {
        FamilyParams::PorousMedium(pm) => {
            vec![growth_report("Phi", &pm.phi, 1.0, pm.p + 1.0)]
        }
        FamilyParams::ReactionDiffusion(rd) => rd
            .reactions
            .iter()
            .enumerate()
            .map(|(i, f)| growth_report(&format!("f_{}", i + 1), f, -1.0, f.degree() + 1.0))
            .collect(),
        FamilyParams::PLaplace(pl) => {
            let mut v = vec![growth_report("Phi", &pl.phi, 1.0, pl.m)];
            v.extend(pl.reactions.iter().enumerate().map(|(i, f)| {
                growth_report(&format!("f_{}", i + 1), f, -1.0, f.degree() + 1.0)
            }));
            v
        }
        FamilyParams::Free => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralBasis;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    #[test]
    fn scalar_law_derivatives() {
        let law = ScalarLaw::polynomial(&[0.0, 1.0, 0.0, -1.0]);
        assert_abs_diff_eq!(law.value(2.0), -6.0);
        assert_abs_diff_eq!(law.derivative(2.0), -11.0);
        assert_abs_diff_eq!(law.antiderivative(2.0), 2.0 - 4.0);
        assert_abs_diff_eq!(law.derivative_sup().unwrap(), 1.0, epsilon = 1e-10);
        let pw = ScalarLaw::power(2.0);
        assert_eq!(pw.value(-3.0), -9.0);
        assert_eq!(pw.derivative(-3.0), 6.0);
        assert_eq!(pw.antiderivative(-3.0), 9.0);
        assert!(pw.derivative_sup().is_none());
    }

    #[test]
    fn zero_field_has_zero_energy_everywhere() {
        let b = SpectralBasis::new(8);
        let z = Field::zeros(&b);
        for p in [
            Potential::porous_medium(2.0).unwrap(),
            Potential::reaction_diffusion(ReactionParams::default()).unwrap(),
            Potential::p_laplace(PLaplaceParams::standard(4.0)).unwrap(),
        ] {
            assert_eq!(eval_phi(&p, &z).unwrap(), 0.0);
            assert_eq!(eval_phi_tilde(&p, &z).unwrap(), 0.0);
            assert!(subgradient(&p, &z).coeffs().iter().all(|c| *c == 0.0));
            assert_eq!(check_coercivity(&p, &z, 1.0).pairing, 0.0);
            assert_eq!(hessian_qform(&p, &z, &z), 0.0);
        }
    }

    #[test]
    fn porous_medium_e1_values() {
        let b = SpectralBasis::with_dealias(4, 64).unwrap();
        let e1 = Field::basis_vector(&b, 1).unwrap();
        let p = Potential::porous_medium(2.0).unwrap();
        let want = 8.0 * SQRT_2 / (9.0 * PI);
        assert_abs_diff_eq!(eval_phi(&p, &e1).unwrap(), want, epsilon = 1e-6);
        assert_abs_diff_eq!(eval_phi_tilde(&p, &e1).unwrap(), want, epsilon = 1e-6);
        let hq = 2.0 * 2.0 * SQRT_2 * 4.0 / (3.0 * PI);
        assert_abs_diff_eq!(hessian_qform(&p, &e1, &e1), hq, epsilon = 1e-5);
    }

    #[test]
    fn heat_equation_values() {
        let b = SpectralBasis::new(6);
        let e1 = Field::basis_vector(&b, 1).unwrap();
        let heat = Potential::reaction_diffusion(ReactionParams::none()).unwrap();
        assert_abs_diff_eq!(eval_phi(&heat, &e1).unwrap(), PI * PI / 2.0, epsilon = 1e-12);
        let g = subgradient(&heat, &e1);
        assert_abs_diff_eq!(g.coeffs()[0], PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(hessian_qform(&heat, &e1, &e1), PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(check_coercivity(&heat, &e1, 1.0).pairing, -2.0 * PI * PI, epsilon = 1e-12);
        assert_eq!(heat.lambda_qc(), 0.0);
        assert!(heat.phi_is_diagonal());

        let linear = Potential::reaction_diffusion(ReactionParams::new(vec![ScalarLaw::polynomial(&[0.0, -1.0])])).unwrap();
        assert_abs_diff_eq!(eval_phi_tilde(&linear, &e1).unwrap(), PI * PI / 2.0 + 1.0, epsilon = 1e-12);
        assert!(linear.phi_tilde_1_is_diagonal());
    }

    #[test]
    fn metadata_per_family() {
        let pm = Potential::porous_medium(2.0).unwrap();
        assert_eq!(pm.p_list(), &[1.5]);
        assert_eq!(pm.lambda_qc(), 0.0);
        assert_eq!(pm.h_tag(), SpaceTag::Hminus1);
        let rd = Potential::reaction_diffusion(ReactionParams::default()).unwrap();
        assert_eq!(rd.p_list(), &[2.0]);
        assert_abs_diff_eq!(rd.lambda_qc(), 1.0, epsilon = 1e-9);
        assert_eq!(rd.max_degree(), 4.0);
        let pl = Potential::p_laplace(
            PLaplaceParams::standard(4.0).with_reactions(vec![ScalarLaw::polynomial(&[0.0, 2.0, 0.0, -1.0])]),
        )
        .unwrap();
        assert_eq!(pl.p_list(), &[2.0, 2.0]);
        assert_eq!(pl.weighted_exponents(), vec![1.0, 2.0]);
        assert_abs_diff_eq!(pl.lambda_qc(), 2.0, epsilon = 1e-9);
        let plain = Potential::p_laplace(PLaplaceParams::standard(4.0)).unwrap();
        assert_eq!(plain.lambda_qc(), 0.0);
    }

    #[test]
    fn rejects_invalid_laws() {
        let bad_phi = PorousMediumParams {
            p: 2.0,
            phi: ScalarLaw::polynomial(&[0.5, 1.0]),
        };
        let err = Potential::porous_medium_with(bad_phi).unwrap_err();
        assert!(err.to_string().contains("Phi(0)"));
        let growing = ReactionParams::new(vec![ScalarLaw::polynomial(&[0.0, 0.0, 0.0, 1.0])]);
        assert!(Potential::reaction_diffusion(growing).is_err());
        assert!(Potential::p_laplace(PLaplaceParams::standard(1.5)).is_err());
        assert!(Potential::porous_medium(1.5).unwrap().warnings().len() == 1);
    }

    #[test]
    fn a2_trivial_cases() {
        let b = SpectralBasis::new(4);
        let z = Field::zeros(&b);
        let heat = Potential::reaction_diffusion(ReactionParams::none()).unwrap();
        let r = check_a2_bound(&heat, &z, &[]);
        assert_eq!((r.lhs, r.constant), (0.0, 0.0));
        let e1 = Field::basis_vector(&b, 1).unwrap();
        let r = check_a2_bound(&heat, &z, &[e1.clone()]);
        assert_abs_diff_eq!(r.lhs, PI * PI, epsilon = 1e-12);
        // φ̃₁(e_1) = π²/2 + 1/2
        assert_abs_diff_eq!(r.rhs, 1.0 + PI * PI / 2.0 + 0.5, epsilon = 1e-12);
        assert!(r.constant < PI * PI);
    }

    #[test]
    fn hessian_matrix_matches_qform() {
        let b = SpectralBasis::new(6);
        let v = Field::from_fn(&b, |k| 0.7 / k as f64 * if k % 2 == 0 { -1.0 } else { 1.0 });
        for p in [
            Potential::porous_medium(3.0).unwrap(),
            Potential::reaction_diffusion(ReactionParams::default()).unwrap(),
            Potential::p_laplace(PLaplaceParams::standard(4.0).with_reactions(ReactionParams::default().reactions)).unwrap(),
        ] {
            let h = p.phi().hessian(&v, 6);
            let w = Field::from_fn(&b, |k| (k as f64).sin());
            let wv = nalgebra::DVector::from_column_slice(w.coeffs());
            let direct = (wv.transpose() * &h * &wv)[(0, 0)];
            assert_abs_diff_eq!(direct, p.hessian_qform(&v, &w), epsilon = 1e-9 * direct.abs().max(1.0));
        }
    }
}
