//! Dirichlet sine discretization of the unit interval.
//!
//! Functions on `(0, 1)` are expanded as `v = Σ c_k e_k` with
//! `e_k(ξ) = √2 sin(kπξ)`, the L²-orthonormal eigenbasis of `-Δ` with
//! eigenvalues `λ_k = (kπ)²`. Pointwise nonlinearities are evaluated at the
//! nodes of a composite midpoint rule, which integrates `cos(mπξ)` exactly
//! for every `m` that is not a multiple of `2·n_quad`. With the default
//! `n_quad = 4·n_modes` this covers products of up to four band-limited
//! factors without aliasing.
//!
//! Mode indices in the public API are 1-based, matching `e_1, e_2, …`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEALIAS_FACTOR: usize = 4;

/// Which Hilbert norm `‖·‖_H` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    L2,
    Hminus1,
    H1zero,
}

impl SpaceTag {
    /// Diagonal weight of mode `k` (eigenvalue `lambda`) in the squared norm.
    #[inline]
    pub fn weight(self, lambda: f64) -> f64 {
        match self {
            SpaceTag::L2 => 1.0,
            SpaceTag::Hminus1 => 1.0 / lambda,
            SpaceTag::H1zero => lambda,
        }
    }
}

/// Sine basis with precomputed collocation tables.
pub struct SpectralBasis {
    n_modes: usize,
    n_quad: usize,
    eigenvalues: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    // Row-major n_modes x n_quad: √2 sin(kπξ_j).
    sine: Vec<f64>,
    // Row-major n_modes x n_quad: √2 kπ cos(kπξ_j).
    dsine: Vec<f64>,
    // Row-major (2 n_modes + 1) x n_quad: cos(mπξ_j), m = 0..=2n.
    cosine: Vec<f64>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("n_modes", &self.n_modes)
            .field("n_quad", &self.n_quad)
            .finish()
    }
}

impl SpectralBasis {
    /// Basis with `n_quad = 4·n_modes`.
    pub fn new(n_modes: usize) -> Arc<Self> {
        Self::with_dealias(n_modes, DEFAULT_DEALIAS_FACTOR).expect("default quadrature is valid")
    }

    pub fn with_dealias(n_modes: usize, factor: usize) -> Result<Arc<Self>> {
        if factor < DEFAULT_DEALIAS_FACTOR {
            return Err(Error::Domain(format!(
                "dealias factor {factor} is below the minimum {DEFAULT_DEALIAS_FACTOR}"
            )));
        }
        Self::with_quadrature(n_modes, factor * n_modes)
    }

    pub fn with_quadrature(n_modes: usize, n_quad: usize) -> Result<Arc<Self>> {
        if n_modes == 0 {
            return Err(Error::Domain("n_modes must be positive".into()));
        }
        if n_quad < DEFAULT_DEALIAS_FACTOR * n_modes {
            return Err(Error::Domain(format!(
                "n_quad = {n_quad} < {DEFAULT_DEALIAS_FACTOR} x n_modes = {}",
                DEFAULT_DEALIAS_FACTOR * n_modes
            )));
        }
        let m = n_quad;
        let h = 1.0 / m as f64;
        let nodes: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * h).collect();
        let weights = vec![h; m];
        let eigenvalues = (1..=n_modes).map(|k| (k as f64 * PI).powi(2)).collect();

        let mut sine = Vec::with_capacity(n_modes * m);
        let mut dsine = Vec::with_capacity(n_modes * m);
        for k in 1..=n_modes {
            let kp = k as f64 * PI;
            for &x in &nodes {
                let (s, c) = (kp * x).sin_cos();
                sine.push(SQRT_2 * s);
                dsine.push(SQRT_2 * kp * c);
            }
        }
        let mut cosine = Vec::with_capacity((2 * n_modes + 1) * m);
        for mm in 0..=2 * n_modes {
            let mp = mm as f64 * PI;
            cosine.extend(nodes.iter().map(|&x| (mp * x).cos()));
        }

        Ok(Arc::new(Self {
            n_modes,
            n_quad,
            eigenvalues,
            nodes,
            weights,
            sine,
            dsine,
            cosine,
        }))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    /// `λ_k = (kπ)²`, k = 1..=n_modes.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples of `e_k` at the quadrature nodes (`k` is 1-based).
    pub fn sine_row(&self, k: usize) -> &[f64] {
        let m = self.n_quad;
        &self.sine[(k - 1) * m..k * m]
    }

    /// Samples of `e_k'` at the quadrature nodes (`k` is 1-based).
    pub fn dsine_row(&self, k: usize) -> &[f64] {
        let m = self.n_quad;
        &self.dsine[(k - 1) * m..k * m]
    }

    /// Samples of `cos(mπξ)`, `0 ≤ m ≤ 2·n_modes`.
    pub(crate) fn cosine_row(&self, m: usize) -> &[f64] {
        let q = self.n_quad;
        &self.cosine[m * q..(m + 1) * q]
    }

    /// Same mode count and quadrature.
    pub fn same_as(&self, other: &SpectralBasis) -> bool {
        self.n_modes == other.n_modes && self.n_quad == other.n_quad
    }

    /// `Σ_k c_k e_k(ξ_j)` for a coefficient slice of length ≤ n_modes.
    pub fn synthesize_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_quad];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, s) in out.iter_mut().zip(self.sine_row(k + 1)) {
                    *o += c * s;
                }
            }
        }
        out
    }

    /// `Σ_k c_k e_k'(ξ_j)`.
    pub fn derivative_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_quad];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, s) in out.iter_mut().zip(self.dsine_row(k + 1)) {
                    *o += c * s;
                }
            }
        }
        out
    }

    /// Quadrature projection of nodal values onto the first `n` sine modes.
    pub(crate) fn project_values(&self, values: &[f64], n: usize) -> Vec<f64> {
        let w = self.weights[0];
        (1..=n)
            .map(|k| w * dot(values, self.sine_row(k)))
            .collect()
    }

    /// `∫ g e_k' dξ` for k = 1..=n.
    pub(crate) fn project_values_derivative(&self, values: &[f64], n: usize) -> Vec<f64> {
        let w = self.weights[0];
        (1..=n)
            .map(|k| w * dot(values, self.dsine_row(k)))
            .collect()
    }

    /// `∫ d(ξ) cos(mπξ) dξ` for m = 0..=2n.
    pub(crate) fn cosine_moments(&self, density: &[f64], n: usize) -> Vec<f64> {
        let w = self.weights[0];
        (0..=2 * n)
            .map(|m| w * dot(density, self.cosine_row(m)))
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An element of `H_n = span{e_1, …, e_n}` stored by its sine coefficients.
pub struct Field {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<f64>,
    values: OnceLock<Vec<f64>>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.clone(),
            values: self.values.clone(),
        }
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("n_modes", &self.basis.n_modes)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.basis.same_as(&other.basis) && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        Self::from_vec(basis, vec![0.0; basis.n_modes])
    }

    /// Coefficients beyond `coeffs.len()` are zero.
    pub fn from_coeffs(basis: &Arc<SpectralBasis>, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > basis.n_modes {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis with {} modes",
                coeffs.len(),
                basis.n_modes
            )));
        }
        let mut c = coeffs.to_vec();
        c.resize(basis.n_modes, 0.0);
        Ok(Self::from_vec(basis, c))
    }

    pub(crate) fn from_vec(basis: &Arc<SpectralBasis>, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), basis.n_modes);
        Self {
            basis: Arc::clone(basis),
            coeffs,
            values: OnceLock::new(),
        }
    }

    /// The basis function `e_k` (1-based).
    pub fn basis_vector(basis: &Arc<SpectralBasis>, k: usize) -> Result<Self> {
        if k == 0 || k > basis.n_modes {
            return Err(Error::Dimension(format!(
                "mode {k} outside 1..={}",
                basis.n_modes
            )));
        }
        let mut c = vec![0.0; basis.n_modes];
        c[k - 1] = 1.0;
        Ok(Self::from_vec(basis, c))
    }

    /// Coefficients `c_k = f(k)`, k = 1..=n_modes.
    pub fn from_fn(basis: &Arc<SpectralBasis>, f: impl FnMut(usize) -> f64) -> Self {
        let c = (1..=basis.n_modes).map(f).collect();
        Self::from_vec(basis, c)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Cached collocation values.
    pub fn values(&self) -> &[f64] {
        self.values
            .get_or_init(|| self.basis.synthesize_coeffs(&self.coeffs))
    }

    /// Collocation values of the derivative (not cached).
    pub fn derivative_values(&self) -> Vec<f64> {
        self.basis.derivative_coeffs(&self.coeffs)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Same coefficients on another basis: zero-padded, or truncated when
    /// the target has fewer modes (the orthogonal projection).
    pub fn rebase(&self, basis: &Arc<SpectralBasis>) -> Self {
        if Arc::ptr_eq(basis, &self.basis) {
            return self.clone();
        }
        let mut c: Vec<f64> = self.coeffs.iter().take(basis.n_modes).copied().collect();
        c.resize(basis.n_modes, 0.0);
        Self::from_vec(basis, c)
    }

    /// Keep the first `n` coefficients, zero the rest.
    pub fn truncated(&self, n: usize) -> Self {
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if i < n { c } else { 0.0 })
            .collect();
        Self::from_vec(&self.basis, c)
    }

    /// Highest mode with a non-zero coefficient (0 for the zero field).
    pub fn bandwidth(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |i| i + 1)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_vec(&self.basis, self.coeffs.iter().map(|c| a * c).collect())
    }

    /// `self + a·other`; `other` is rebased first.
    pub fn axpy(&self, a: f64, other: &Field) -> Self {
        let mut c = self.coeffs.clone();
        for (x, y) in c.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
        Self::from_vec(&self.basis, c)
    }

    /// `(self, other)_H` for the given tag.
    pub fn inner(&self, other: &Field, tag: SpaceTag) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .zip(&self.basis.eigenvalues)
            .map(|((a, b), &l)| a * b * tag.weight(l))
            .sum()
    }

    pub fn norm_sq(&self, tag: SpaceTag) -> f64 {
        self.inner(self, tag)
    }

    pub fn norm(&self, tag: SpaceTag) -> f64 {
        self.norm_sq(tag).sqrt()
    }

    /// `‖self − other‖²_H`, comparing coefficients mode by mode (either may
    /// have more modes).
    pub fn distance_sq(&self, other: &Field, tag: SpaceTag) -> f64 {
        let (long, short) = if self.n_modes() >= other.n_modes() {
            (self, other)
        } else {
            (other, self)
        };
        long.coeffs
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let b = short.coeffs.get(i).copied().unwrap_or(0.0);
                (a - b).powi(2) * tag.weight(long.basis.eigenvalues[i])
            })
            .sum()
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scaled(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

/// Nodal values `Σ_k c_k √2 sin(kπξ_j)`.
pub fn synthesize(f: &Field) -> Vec<f64> {
    f.values().to_vec()
}

/// Sine coefficients of nodal values by quadrature.
pub fn analyze(values: &[f64], basis: &Arc<SpectralBasis>) -> Result<Field> {
    if values.len() != basis.n_quad {
        return Err(Error::Dimension(format!(
            "{} values for {} quadrature nodes",
            values.len(),
            basis.n_quad
        )));
    }
    let c = basis.project_values(values, basis.n_modes);
    Ok(Field::from_vec(basis, c))
}

pub fn norm(f: &Field, tag: SpaceTag) -> f64 {
    f.norm(tag)
}

/// Quadrature approximation of `(∫₀¹ |f|^q dξ)^{1/q}`.
pub fn lp_norm(f: &Field, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("L^q norm needs q >= 1, got {q}")));
    }
    let w = f.basis.weights[0];
    let s: f64 = f.values().iter().map(|v| pow_abs(*v, q)).sum::<f64>() * w;
    Ok(s.powf(1.0 / q))
}

/// Nodal values of `f'`.
pub fn spectral_derivative(f: &Field) -> Vec<f64> {
    f.derivative_values()
}

/// Galerkin representation of `div g` for nodal values `g`:
/// `d_k = −∫₀¹ g e_k' dξ`, so that `weak_divergence(f') = −λ ⊙ c`.
pub fn weak_divergence(g: &[f64], basis: &Arc<SpectralBasis>) -> Result<Field> {
    if g.len() != basis.n_quad {
        return Err(Error::Dimension(format!(
            "{} values for {} quadrature nodes",
            g.len(),
            basis.n_quad
        )));
    }
    let c = basis
        .project_values_derivative(g, basis.n_modes)
        .into_iter()
        .map(|d| -d)
        .collect();
    Ok(Field::from_vec(basis, c))
}

/// `|r|^q` with integer fast paths.
#[inline]
pub(crate) fn pow_abs(r: f64, q: f64) -> f64 {
    let a = r.abs();
    if q == 2.0 {
        a * a
    } else if q == 1.0 {
        a
    } else if q == 3.0 {
        a * a * a
    } else if q == 4.0 {
        let s = a * a;
        s * s
    } else if q == 0.0 {
        1.0
    } else if q.fract() == 0.0 && q > 0.0 && q < 64.0 {
        a.powi(q as i32)
    } else {
        a.powf(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigenvalues_are_k_pi_squared() {
        let b = SpectralBasis::new(5);
        for (i, l) in b.eigenvalues().iter().enumerate() {
            assert_eq!(*l, ((i + 1) as f64 * PI).powi(2));
        }
        assert!(b.eigenvalues().windows(2).all(|w| w[0] < w[1]));
        let s: f64 = b.quad_weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_underresolved_quadrature() {
        assert!(SpectralBasis::with_quadrature(8, 31).is_err());
        assert!(SpectralBasis::with_quadrature(8, 32).is_ok());
        assert!(SpectralBasis::with_dealias(8, 2).is_err());
    }

    #[test]
    fn synthesize_zero_and_e1() {
        let b = SpectralBasis::new(6);
        assert!(synthesize(&Field::zeros(&b)).iter().all(|v| *v == 0.0));
        let e1 = Field::basis_vector(&b, 1).unwrap();
        for (v, x) in synthesize(&e1).iter().zip(b.quad_nodes()) {
            assert_abs_diff_eq!(*v, SQRT_2 * (PI * x).sin(), epsilon = 1e-14);
        }
    }

    #[test]
    fn analyze_band_limited() {
        let b = SpectralBasis::new(8);
        let vals: Vec<f64> = b
            .quad_nodes()
            .iter()
            .map(|x| SQRT_2 * (PI * x).sin() + 2.0 * SQRT_2 * (3.0 * PI * x).sin())
            .collect();
        let f = analyze(&vals, &b).unwrap();
        for (k, c) in f.coeffs().iter().enumerate() {
            let want = match k + 1 {
                1 => 1.0,
                3 => 2.0,
                _ => 0.0,
            };
            assert_abs_diff_eq!(*c, want, epsilon = 1e-10);
        }
        assert!(analyze(&vals[1..], &b).is_err());
    }

    #[test]
    fn analyze_parabola_matches_sine_series() {
        // ∫ ξ(1−ξ) √2 sin(kπξ) dξ = 4√2/(kπ)³ for odd k, 0 for even k.
        let b = SpectralBasis::with_dealias(8, 16).unwrap();
        let vals: Vec<f64> = b.quad_nodes().iter().map(|x| x * (1.0 - x)).collect();
        let f = analyze(&vals, &b).unwrap();
        for (i, c) in f.coeffs().iter().enumerate() {
            let k = (i + 1) as f64;
            let want = if (i + 1) % 2 == 1 {
                4.0 * SQRT_2 / (k * PI).powi(3)
            } else {
                0.0
            };
            assert_abs_diff_eq!(*c, want, epsilon = 1e-5);
        }
    }

    #[test]
    fn norms_of_e1() {
        let b = SpectralBasis::new(4);
        let e1 = Field::basis_vector(&b, 1).unwrap();
        assert_abs_diff_eq!(norm(&e1, SpaceTag::L2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm(&e1, SpaceTag::Hminus1), 1.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(norm(&e1, SpaceTag::H1zero), PI, epsilon = 1e-14);
    }

    #[test]
    fn lp_norms() {
        let b = SpectralBasis::new(8);
        let z = Field::zeros(&b);
        assert_eq!(lp_norm(&z, 3.0).unwrap(), 0.0);
        let e1 = Field::basis_vector(&b, 1).unwrap();
        assert_abs_diff_eq!(lp_norm(&e1, 2.0).unwrap(), 1.0, epsilon = 1e-10);
        assert!(lp_norm(&e1, 0.5).is_err());
    }

    #[test]
    fn derivative_and_divergence() {
        let b = SpectralBasis::new(6);
        let z = Field::zeros(&b);
        assert!(spectral_derivative(&z).iter().all(|v| *v == 0.0));
        let e1 = Field::basis_vector(&b, 1).unwrap();
        for (d, x) in spectral_derivative(&e1).iter().zip(b.quad_nodes()) {
            assert_abs_diff_eq!(*d, SQRT_2 * PI * (PI * x).cos(), epsilon = 1e-13);
        }
        let div = weak_divergence(&spectral_derivative(&e1), &b).unwrap();
        assert_abs_diff_eq!(div.coeffs()[0], -PI * PI, epsilon = 1e-10);
        for c in &div.coeffs()[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-10);
        }
        let zero_div = weak_divergence(&vec![0.0; b.n_quad()], &b).unwrap();
        assert!(zero_div.coeffs().iter().all(|c| *c == 0.0));
        assert!(weak_divergence(&[1.0], &b).is_err());
    }

    #[test]
    fn rebase_and_distance() {
        let fine = SpectralBasis::new(8);
        let coarse = SpectralBasis::new(3);
        let f = Field::from_fn(&fine, |k| 1.0 / k as f64);
        let g = f.rebase(&coarse);
        assert_eq!(g.coeffs(), &[1.0, 0.5, 1.0 / 3.0]);
        let tail: f64 = (4..=8).map(|k| 1.0 / (k * k) as f64).sum();
        assert_abs_diff_eq!(f.distance_sq(&g, SpaceTag::L2), tail, epsilon = 1e-15);
        assert_abs_diff_eq!(g.distance_sq(&f, SpaceTag::L2), tail, epsilon = 1e-15);
        assert_eq!(f.truncated(3).bandwidth(), 3);
        assert!(Field::from_coeffs(&coarse, &[1.0; 4]).is_err());
    }
}
