//! Damped Newton minimisation of `s·F(z) + ½ Σ q_k (z_k − a_k)²` over the
//! leading coefficients of `z`, with `F` a [`LocalFunctional`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::potentials::LocalFunctional;
use crate::spectral::{Field, SpectralBasis};

const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const DESCENT_STEPS: usize = 500;
const STAGNATION_STEPS: usize = 3;

pub(crate) struct Problem<'a> {
    pub functional: &'a LocalFunctional,
    pub scale: f64,
    /// Anchor coefficients and per-mode penalty weights.
    pub anchor: Option<(&'a [f64], &'a [f64])>,
    pub basis: &'a Arc<SpectralBasis>,
    /// Only `z_1..z_{n_free}` move; the remaining coefficients stay fixed.
    pub n_free: usize,
    /// Stopping metric: `sqrt(Σ g_k² / q_k)` with the anchor weights when
    /// true, `max |g_k|` otherwise.
    pub weighted_residual: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub context: &'static str,
    /// Skip Newton and run gradient descent only.
    pub descent_only: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub z: Field,
    #[allow(dead_code)]
    pub iterations: usize,
    #[allow(dead_code)]
    pub residual: f64,
}

impl Problem<'_> {
    fn value(&self, z: &Field) -> f64 {
        let mut v = self.scale * self.functional.value(z);
        if let Some((a, q)) = self.anchor {
            v += 0.5
                * z.coeffs()[..self.n_free]
                    .iter()
                    .zip(a)
                    .zip(q)
                    .map(|((zi, ai), qi)| qi * (zi - ai) * (zi - ai))
                    .sum::<f64>();
        }
        v
    }

    fn gradient(&self, z: &Field) -> Vec<f64> {
        let mut g = self.functional.coef_gradient(z, self.n_free);
        for gi in g.iter_mut() {
            *gi *= self.scale;
        }
        if let Some((a, q)) = self.anchor {
            for k in 0..self.n_free {
                g[k] += q[k] * (z.coeffs()[k] - a[k]);
            }
        }
        g
    }

    fn hessian(&self, z: &Field) -> DMatrix<f64> {
        let mut h = self.functional.hessian(z, self.n_free) * self.scale;
        if let Some((_, q)) = self.anchor {
            for k in 0..self.n_free {
                h[(k, k)] += q[k];
            }
        }
        h
    }

    fn residual(&self, g: &[f64]) -> f64 {
        match (self.weighted_residual, self.anchor) {
            (true, Some((_, q))) => g
                .iter()
                .zip(q)
                .map(|(gi, qi)| gi * gi / qi)
                .sum::<f64>()
                .sqrt(),
            _ => g.iter().fold(0.0, |m, gi| m.max(gi.abs())),
        }
    }

    fn with_free(&self, z: &Field, free: &[f64]) -> Field {
        let mut c = z.coeffs().to_vec();
        c[..self.n_free].copy_from_slice(free);
        Field::from_vec(self.basis, c)
    }

    fn closed_form(&self, z0: &Field) -> Field {
        let d = self
            .functional
            .diagonal_quadratic(&self.basis.eigenvalues()[..self.n_free]);
        let free: Vec<f64> = (0..self.n_free)
            .map(|k| match self.anchor {
                Some((a, q)) => q[k] * a[k] / (self.scale * d[k] + q[k]),
                None => 0.0,
            })
            .collect();
        self.with_free(z0, &free)
    }

    pub fn minimize(&self, z0: Field) -> Result<Outcome> {
        if self.functional.is_diagonal_quadratic() {
            let z = self.closed_form(&z0);
            let residual = self.residual(&self.gradient(&z));
            return Ok(Outcome {
                z,
                iterations: 1,
                residual,
            });
        }
        let mut z = z0;
        let mut trace = Vec::new();
        let mut stalled = self.descent_only;
        let newton_iters = if self.descent_only { 0 } else { self.max_iter };
        // Consecutive Newton steps whose decrement is below the roundoff of
        // the objective, and the residual when the run began.
        let mut flat = 0;
        let mut flat_ref = f64::INFINITY;
        for it in 0..newton_iters {
            let g = self.gradient(&z);
            let res = self.residual(&g);
            trace.push(res);
            if !res.is_finite() {
                break;
            }
            if flat > 0 && res < 0.5 * flat_ref {
                flat = 0;
            }
            // Converged, or stuck at the roundoff floor of the gradient.
            if res <= self.tol || flat >= STAGNATION_STEPS {
                return Ok(Outcome {
                    z,
                    iterations: it,
                    residual: res,
                });
            }
            let dir = newton_direction(self.hessian(&z), &g);
            match dir.and_then(|d| self.line_search(&z, &g, &d)) {
                Some((next, negligible)) => {
                    z = next;
                    if !negligible {
                        flat = 0;
                    } else {
                        if flat == 0 {
                            flat_ref = res;
                        }
                        flat += 1;
                    }
                }
                None => {
                    stalled = true;
                    break;
                }
            }
        }
        if stalled {
            if let Some(out) = self.descend(z.clone(), &mut trace) {
                return Ok(out);
            }
        }
        let residual = trace.last().copied().unwrap_or(f64::NAN);
        Err(Error::Convergence {
            context: self.context,
            iterations: trace.len(),
            residual,
            last_iterate: z.into_coeffs(),
            trace,
        })
    }

    /// Armijo backtracking along `d`; the flag marks a step whose predicted
    /// decrease is below the roundoff of `f`.
    fn line_search(&self, z: &Field, g: &[f64], d: &DVector<f64>) -> Option<(Field, bool)> {
        let slope: f64 = g.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            return None;
        }
        let f0 = self.value(z);
        let x = &z.coeffs()[..self.n_free];
        // Predicted decrease below roundoff of f: take the full step.
        if -slope < 1e-13 * (1.0 + f0.abs()) {
            let free: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            return Some((self.with_free(z, &free), true));
        }
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACK {
            let free: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            let trial = self.with_free(z, &free);
            let f = self.value(&trial);
            if f.is_finite() && f <= f0 + ARMIJO_SLOPE * t * slope {
                return Some((trial, false));
            }
            t *= 0.5;
        }
        None
    }

    fn descend(&self, mut z: Field, trace: &mut Vec<f64>) -> Option<Outcome> {
        let mut step = 1.0;
        for _ in 0..DESCENT_STEPS {
            let g = self.gradient(&z);
            let res = self.residual(&g);
            trace.push(res);
            if res <= self.tol {
                return Some(Outcome {
                    z,
                    iterations: trace.len(),
                    residual: res,
                });
            }
            let d = DVector::from_iterator(g.len(), g.iter().map(|x| -x));
            let f0 = self.value(&z);
            let gg: f64 = g.iter().map(|x| x * x).sum();
            let x = z.coeffs()[..self.n_free].to_vec();
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACK {
                let free: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                let trial = self.with_free(&z, &free);
                if self.value(&trial) <= f0 - ARMIJO_SLOPE * step * gg {
                    z = trial;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        None
    }
}

fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Option<DVector<f64>> {
    let rhs = DVector::from_iterator(g.len(), g.iter().map(|x| -x));
    if let Some(ch) = h.clone().cholesky() {
        let d = ch.solve(&rhs);
        if d.iter().all(|x| x.is_finite()) {
            return Some(d);
        }
    }
    let scale = h.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut mu = 1e-8 * scale;
    for _ in 0..20 {
        let mut shifted = h.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += mu;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.solve(&rhs));
        }
        mu *= 10.0;
    }
    None
}
