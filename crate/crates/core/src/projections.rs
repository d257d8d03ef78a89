//! Orthogonal truncation `P_n`, the `φ̃₁`-weighted best approximation onto
//! `H_n`, and the `H`-nearest point of the level set `{φ̃₁ ≤ level}`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::solver::Problem;
use crate::spectral::Field;

/// Truncation to the first `n` modes, kept on the input's basis.
pub fn project_orthogonal(h: &Field, n: usize) -> Result<Field> {
    if n > h.n_modes() {
        return Err(Error::Dimension(format!(
            "cannot project onto {n} modes of a field with {}",
            h.n_modes()
        )));
    }
    let mut c = h.coeffs().to_vec();
    c[n..].iter_mut().for_each(|x| *x = 0.0);
    Ok(Field::from_vec(h.basis(), c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionSolver {
    Newton,
    GradientDescent,
}

#[derive(Debug, Clone)]
pub struct WeightedProjectionProblem<'a> {
    pub target: &'a Field,
    pub n: usize,
    pub potential: &'a Potential,
    pub solver: ProjectionSolver,
    /// Bound on the ∞-norm of the coefficient gradient at the solution.
    pub tol_grad: f64,
    pub max_iter: usize,
}

impl<'a> WeightedProjectionProblem<'a> {
    pub fn new(target: &'a Field, n: usize, potential: &'a Potential) -> Self {
        Self {
            target,
            n,
            potential,
            solver: ProjectionSolver::Newton,
            tol_grad: 1e-10,
            max_iter: 200,
        }
    }
}

/// `argmin_{a ∈ ℝⁿ} φ̃₁(h − Σ a_k e_k)`, returned on the target's basis.
pub fn project_weighted(prob: &WeightedProjectionProblem) -> Result<Field> {
    let h = prob.target;
    let n = prob.n;
    if n > h.n_modes() {
        return Err(Error::Dimension(format!(
            "cannot project onto {n} modes of a field with {}",
            h.n_modes()
        )));
    }
    let value = prob.potential.phi_tilde_1_value(h);
    if !value.is_finite() {
        return Err(Error::DivergedEnergy(format!(
            "phi_tilde_1 of the projection target is {value}"
        )));
    }
    // Minimise over the residual r = h − Σ a_k e_k, whose leading n modes
    // are free; the warm start is the truncation (r_k = 0 for k ≤ n).
    let mut start = h.coeffs().to_vec();
    start[..n].iter_mut().for_each(|x| *x = 0.0);
    let residual_field = Field::from_vec(h.basis(), start);
    let problem = Problem {
        functional: prob.potential.phi_tilde_1(),
        scale: 1.0,
        anchor: None,
        basis: h.basis(),
        n_free: n,
        weighted_residual: false,
        tol: prob.tol_grad,
        max_iter: prob.max_iter,
        context: "weighted projection",
        descent_only: prob.solver == ProjectionSolver::GradientDescent,
    };
    let r = problem.minimize(residual_field)?.z;
    let mut c = vec![0.0; h.n_modes()];
    for k in 0..n {
        c[k] = h.coeffs()[k] - r.coeffs()[k];
    }
    Ok(Field::from_vec(h.basis(), c))
}

/// Coefficient gradient of `a ↦ φ̃₁(h − Σ a_k e_k)` at the projection `p`.
pub fn weighted_optimality_residual(h: &Field, p: &Field, n: usize, potential: &Potential) -> f64 {
    let r = h - &p.rebase(h.basis());
    potential
        .phi_tilde_1()
        .coef_gradient(&r, n)
        .iter()
        .fold(0.0, |m, g| m.max(g.abs()))
}

#[derive(Debug, Clone)]
pub struct LevelSetProjectionProblem<'a> {
    pub target: &'a Field,
    pub level: f64,
    pub potential: &'a Potential,
    /// Bisection stops once the multiplier bracket is narrower than this.
    pub dual_tol: f64,
}

impl<'a> LevelSetProjectionProblem<'a> {
    pub fn new(target: &'a Field, level: f64, potential: &'a Potential) -> Self {
        Self {
            target,
            level,
            potential,
            dual_tol: 1e-10,
        }
    }
}

const LEVELSET_REL_TOL: f64 = 1e-8;

/// `H`-nearest point of `{g : φ̃₁(g) ≤ level}`.
pub fn project_levelset(prob: &LevelSetProjectionProblem) -> Result<Field> {
    let h = prob.target;
    let level = prob.level;
    if !(level > 0.0) {
        return Err(Error::Domain(format!("level must be positive, got {level}")));
    }
    let pot = prob.potential;
    if pot.phi_tilde_1_value(h) <= level {
        return Ok(h.clone());
    }
    let tag = pot.h_tag();
    let q: Vec<f64> = h.basis().eigenvalues().iter().map(|&l| tag.weight(l)).collect();
    let inner = |theta: f64, start: &Field| -> Result<Field> {
        Problem {
            functional: pot.phi_tilde_1(),
            scale: theta,
            anchor: Some((h.coeffs(), &q)),
            basis: h.basis(),
            n_free: h.n_modes(),
            weighted_residual: true,
            tol: 1e-12,
            max_iter: 200,
            context: "level-set inner solve",
            descent_only: false,
        }
        .minimize(start.clone())
        .map(|o| o.z)
    };
    let tol = LEVELSET_REL_TOL * level;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut g_hi = inner(hi, h)?;
    let mut doublings = 0;
    while pot.phi_tilde_1_value(&g_hi) > level {
        lo = hi;
        hi *= 2.0;
        g_hi = inner(hi, &g_hi)?;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numeric(format!(
                "level-set bracket failed: phi_tilde_1 = {} > {level} at theta = {hi}",
                pot.phi_tilde_1_value(&g_hi)
            )));
        }
    }
    let mut g = g_hi.clone();
    for _ in 0..400 {
        let gap = pot.phi_tilde_1_value(&g) - level;
        if gap.abs() <= tol {
            return Ok(g);
        }
        if hi - lo <= prob.dual_tol * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        g = inner(mid, &g)?;
        if pot.phi_tilde_1_value(&g) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!(
        "level-set bisection stalled in [{lo}, {hi}] with constraint gap {}",
        pot.phi_tilde_1_value(&g) - level
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    /// `φ̃₁(h − 𝒫h)`.
    pub err: f64,
    /// `φ̃₁(𝒫h)`.
    pub phi_proj: f64,
    /// `φ̃₁(𝒫h) / φ̃₁(h)`.
    pub ratio: f64,
}

/// Weighted projections of `h` for each `n` in `n_list`; errors if the
/// approximation error increases along the list.
pub fn projection_study(h: &Field, n_list: &[usize], potential: &Potential) -> Result<Vec<StudyRow>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("n_list must be strictly increasing".into()));
    }
    let total = potential.phi_tilde_1_value(h);
    let mut rows: Vec<StudyRow> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let p = project_weighted(&WeightedProjectionProblem::new(h, n, potential))?;
        let err = potential.phi_tilde_1_value(&(h - &p));
        let phi_proj = potential.phi_tilde_1_value(&p);
        if let Some(prev) = rows.last() {
            if err > prev.err + 1e-9 {
                return Err(Error::Numeric(format!(
                    "projection error increased from {} (n = {}) to {err} (n = {n})",
                    prev.err, prev.n
                )));
            }
        }
        rows.push(StudyRow {
            n,
            err,
            phi_proj,
            ratio: if total > 0.0 { phi_proj / total } else { 0.0 },
        });
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "err", "phi_proj", "ratio"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:e}", r.err),
            format!("{:e}", r.phi_proj),
            format!("{:e}", r.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
