//! Time stepping for the Galerkin SDE
//! `dXⁿ = −P_n Dφ(Xⁿ) dt + Σ_k Π B(Xⁿ)(ẽ_k) dβ^k`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::PreparedNoise;
use crate::potentials::Potential;
use crate::projections::{
    project_levelset, project_orthogonal, project_weighted, LevelSetProjectionProblem,
    WeightedProjectionProblem,
};
use crate::rng::BrownianPath;
use crate::solver::Problem;
use crate::spectral::{Field, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ProximalEm,
    ExplicitEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProjection {
    Orthogonal,
    Weighted,
    /// Nearest point of `{φ̃₁ ≤ level}`, then the weighted projection.
    Levelset { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub seed: u64,
    pub initial_projection: InitialProjection,
    pub cfl_safety: f64,
    /// Resolution of the underlying Brownian path; `dt` must be a multiple.
    /// Defaults to `dt`.
    pub base_dt: Option<f64>,
    /// Keep every state in the [`PathSolution`].
    pub record_states: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Self {
        Self {
            scheme,
            dt,
            t_end,
            newton_tol: 1e-10,
            newton_max: 100,
            seed: 0,
            initial_projection: InitialProjection::Weighted,
            cfl_safety: 0.5,
            base_dt: None,
            record_states: true,
        }
    }

    pub fn proximal(dt: f64, t_end: f64) -> Self {
        Self::new(Scheme::ProximalEm, dt, t_end)
    }

    pub fn explicit(dt: f64, t_end: f64) -> Self {
        Self::new(Scheme::ExplicitEm, dt, t_end)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial(mut self, p: InitialProjection) -> Self {
        self.initial_projection = p;
        self
    }

    pub fn with_base_dt(mut self, base_dt: f64) -> Self {
        self.base_dt = Some(base_dt);
        self
    }

    pub fn without_states(mut self) -> Self {
        self.record_states = false;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn substeps(&self) -> usize {
        self.base_dt.map_or(1, |b| (self.dt / b).round() as usize)
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt.unwrap_or(self.dt)
    }

    /// Every violated constraint, in one error.
    pub fn validate(&self, potential: &Potential, basis: &SpectralBasis) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            errs.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            errs.push(format!("t_end = {} must be non-negative", self.t_end));
        }
        if self.dt > 0.0 && self.t_end >= 0.0 {
            let n = self.t_end / self.dt;
            if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                errs.push(format!("t_end / dt = {n} must be an integer"));
            }
        }
        if let Some(b) = self.base_dt {
            let m = self.dt / b;
            if !(b > 0.0) || (m - m.round()).abs() > 1e-9 * m.max(1.0) || m.round() < 1.0 {
                errs.push(format!("dt = {} must be a positive multiple of base_dt = {b}", self.dt));
            }
        }
        if !(self.newton_tol > 0.0) {
            errs.push("newton_tol must be positive".into());
        }
        if self.newton_max == 0 {
            errs.push("newton_max must be positive".into());
        }
        match self.scheme {
            Scheme::ProximalEm => {
                let l = potential.lambda_qc();
                if l > 0.0 && self.dt * l >= 1.0 {
                    errs.push(format!(
                        "proximal_em requires dt < 1/lambda_qc = {} (dt = {})",
                        1.0 / l,
                        self.dt
                    ));
                }
            }
            Scheme::ExplicitEm => {
                let cfl = self.cfl_safety / basis.eigenvalues().last().copied().unwrap_or(1.0);
                if self.dt > cfl {
                    errs.push(format!(
                        "explicit_em requires dt <= cfl_safety / lambda_n = {cfl:e} (dt = {})",
                        self.dt
                    ));
                }
            }
        }
        if let InitialProjection::Levelset { level } = self.initial_projection {
            if !(level > 0.0) {
                errs.push(format!("levelset level = {level} must be positive"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}


#[derive(Debug, Clone)]
pub struct PathSolution {
    pub times: Vec<f64>,
    /// Empty unless the run recorded states.
    pub states: Vec<Field>,
    pub final_state: Field,
    pub subgrad_h_norms: Vec<f64>,
    pub energies: Vec<f64>,
    pub increments_consumed: Vec<usize>,
}

impl PathSolution {
    fn start(x0: Field, potential: &Potential, record: bool) -> Self {
        let mut p = Self {
            times: Vec::new(),
            states: Vec::new(),
            final_state: x0.clone(),
            subgrad_h_norms: Vec::new(),
            energies: Vec::new(),
            increments_consumed: Vec::new(),
        };
        p.push(0.0, x0, potential, record);
        p
    }

    fn push(&mut self, t: f64, x: Field, potential: &Potential, record: bool) {
        self.times.push(t);
        self.energies.push(potential.phi_value(&x));
        self.subgrad_h_norms.push(potential.subgradient_norm_sq(&x).sqrt());
        if record {
            self.states.push(x.clone());
        }
        self.final_state = x;
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `Σ_j dt · t_j ‖∂φ(X_{t_j})‖²_H` over the left endpoints.
    pub fn weighted_subgradient_integral(&self) -> f64 {
        self.times
            .windows(2)
            .zip(&self.subgrad_h_norms)
            .map(|(w, g)| (w[1] - w[0]) * w[0] * g * g)
            .sum()
    }

    /// `max_j t_j ‖∂φ(X_{t_j})‖²_H`.
    pub fn max_weighted_subgradient(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.subgrad_h_norms)
            .map(|(t, g)| t * g * g)
            .fold(0.0, f64::max)
    }

    /// CSV with `t, energy, subgrad_h_norm` and, when `with_coeffs` and
    /// states were recorded, `coeff_1..coeff_n`.
    pub fn write_csv<W: Write>(&self, out: W, with_coeffs: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_coeffs = with_coeffs && self.states.len() == self.times.len();
        let n = self.final_state.n_modes();
        let mut header = vec!["t".to_string(), "energy".into(), "subgrad_h_norm".into()];
        if with_coeffs {
            header.extend((1..=n).map(|k| format!("coeff_{k}")));
        }
        w.write_record(&header)?;
        for j in 0..self.times.len() {
            let mut row = vec![
                format!("{:e}", self.times[j]),
                format!("{:e}", self.energies[j]),
                format!("{:e}", self.subgrad_h_norms[j]),
            ];
            if with_coeffs {
                row.extend(self.states[j].coeffs().iter().map(|c| format!("{c:e}")));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `argmin_z φ(z) + ‖z − w‖²_H / (2dt)` over `H_n`.
pub fn prox_step(potential: &Potential, w: &Field, dt: f64, tol: f64, max_iter: usize) -> Result<Field> {
    let tag = potential.h_tag();
    let q: Vec<f64> = w.basis().eigenvalues().iter().map(|&l| tag.weight(l)).collect();
    Problem {
        functional: potential.phi(),
        scale: dt,
        anchor: Some((w.coeffs(), &q)),
        basis: w.basis(),
        n_free: w.n_modes(),
        weighted_residual: true,
        tol,
        max_iter,
        context: "proximal step",
        descent_only: false,
    }
    .minimize(w.clone())
    .map(|o| o.z)
}

/// `‖z − w + dt ∂φ(z)‖_H`.
pub fn prox_residual(potential: &Potential, z: &Field, w: &Field, dt: f64) -> f64 {
    let r = &(z - w) + &potential.subgradient(z).scaled(dt);
    r.norm(potential.h_tag())
}

/// Projection of the initial datum onto `H_n` per `cfg.initial_projection`.
pub fn initial_state(
    x0: &Field,
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    cfg: &SchemeConfig,
) -> Result<Field> {
    let n = basis.n_modes().min(x0.n_modes());
    let out = match cfg.initial_projection {
        InitialProjection::Orthogonal => project_orthogonal(x0, n)?,
        InitialProjection::Weighted => weighted_onto(x0, n, potential)?,
        InitialProjection::Levelset { level } => {
            let g = project_levelset(&LevelSetProjectionProblem::new(x0, level, potential))?;
            weighted_onto(&g, n, potential)?
        }
    };
    Ok(out.rebase(basis))
}

fn weighted_onto(x0: &Field, n: usize, potential: &Potential) -> Result<Field> {
    if potential.phi_tilde_1_is_diagonal() {
        project_orthogonal(x0, n)
    } else {
        project_weighted(&WeightedProjectionProblem::new(x0, n, potential))
    }
}

/// One step from `t_j = step·dt`, with the noise integrand evaluated at
/// `frozen` (the current state for the direct scheme).
fn advance(
    x: &Field,
    frozen: &Field,
    step: usize,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
) -> Result<Field> {
    let t = step as f64 * cfg.dt;
    let mut w = x.clone();
    if !noise.is_zero() {
        let dw = path.increments(noise.n_modes(), step, cfg.substeps());
        w = &w + &noise.increment(frozen, t, &dw)?;
    }
    let next = match cfg.scheme {
        Scheme::ProximalEm => prox_step(potential, &w, cfg.dt, cfg.newton_tol, cfg.newton_max)?,
        Scheme::ExplicitEm => w.axpy(-cfg.dt, &potential.subgradient(x)),
    };
    if !next.is_finite() {
        return Err(Error::Diverged {
            step: step + 1,
            time: t + cfg.dt,
        });
    }
    Ok(next)
}

/// One step of the configured scheme.
pub fn step(
    state: &Field,
    step_index: usize,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
) -> Result<Field> {
    advance(state, state, step_index, potential, noise, cfg, path)
}

/// Projects `x0` and runs the scheme on path `path_index` of `cfg.seed`.
pub fn simulate_path(
    x0: &Field,
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path_index: u64,
) -> Result<PathSolution> {
    cfg.validate(potential, basis)?;
    let start = initial_state(x0, basis, potential, cfg)?;
    let mut path = BrownianPath::new(cfg.seed, path_index, cfg.base_dt());
    simulate_from(start, potential, noise, cfg, &mut path)
}

/// Runs the scheme from an already projected state.
pub fn simulate_from(
    start: Field,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
) -> Result<PathSolution> {
    let mut sol = PathSolution::start(start.clone(), potential, cfg.record_states);
    simulate_with(start, potential, noise, cfg, path, |j, x| {
        if j > 0 {
            sol.push(j as f64 * cfg.dt, x.clone(), potential, cfg.record_states);
        }
        Ok(())
    })?;
    sol.increments_consumed = path.consumed();
    Ok(sol)
}

/// Runs the scheme, handing `(j, X_{t_j})` for j = 0..=n_steps to
/// `observe`; returns the terminal state.
pub fn simulate_with<F>(
    start: Field,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
    mut observe: F,
) -> Result<Field>
where
    F: FnMut(usize, &Field) -> Result<()>,
{
    let mut x = start;
    observe(0, &x)?;
    for j in 0..cfg.n_steps() {
        x = step(&x, j, potential, noise, cfg, path)?;
        observe(j + 1, &x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub path: PathSolution,
    /// Evaluations of the frozen-coefficient map.
    pub iterations: usize,
    /// `sup_j ‖X^{i+1}_j − X^i_j‖_H` per iteration.
    pub distances: Vec<f64>,
    /// Successive quotients of `distances`.
    pub ratios: Vec<f64>,
    /// Number of times the interval was split.
    pub subdivisions: usize,
}

const MAX_SUBDIVISION_DEPTH: usize = 8;

/// Fixed point of `Y ↦ F(Y)`, where `F(Y)` solves the additive-noise
/// equation with integrand `B(Y_t)` on the Brownian path `path_index`.
pub fn picard_solve(
    x0: &Field,
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path_index: u64,
    picard_tol: f64,
    picard_max: usize,
) -> Result<PicardOutcome> {
    cfg.validate(potential, basis)?;
    let start = initial_state(x0, basis, potential, cfg)?;
    let mut path = BrownianPath::new(cfg.seed, path_index, cfg.base_dt());
    let n_steps = cfg.n_steps();
    let mut acc = PicardAcc::default();
    let states = picard_segment(
        start, 0, n_steps, potential, noise, cfg, &mut path, picard_tol, picard_max, 0, &mut acc,
    )?;
    let mut sol = PathSolution::start(states[0].clone(), potential, cfg.record_states);
    for (j, x) in states.into_iter().enumerate().skip(1) {
        sol.push(j as f64 * cfg.dt, x, potential, cfg.record_states);
    }
    sol.increments_consumed = path.consumed();
    Ok(PicardOutcome {
        path: sol,
        iterations: acc.iterations,
        distances: acc.distances,
        ratios: acc.ratios,
        subdivisions: acc.subdivisions,
    })
}

#[derive(Default)]
struct PicardAcc {
    iterations: usize,
    distances: Vec<f64>,
    ratios: Vec<f64>,
    subdivisions: usize,
}

/// Frozen-coefficient solve over steps `j0..j1`.
fn frozen_solve(
    start: &Field,
    frozen: &[Field],
    j0: usize,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(frozen.len());
    out.push(start.clone());
    for (i, y) in frozen.iter().enumerate().take(frozen.len() - 1) {
        let x = advance(&out[i], y, j0 + i, potential, noise, cfg, path)?;
        out.push(x);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn picard_segment(
    start: Field,
    j0: usize,
    j1: usize,
    potential: &Potential,
    noise: &PreparedNoise,
    cfg: &SchemeConfig,
    path: &mut BrownianPath,
    tol: f64,
    max_iter: usize,
    depth: usize,
    acc: &mut PicardAcc,
) -> Result<Vec<Field>> {
    let tag = potential.h_tag();
    let mut y = vec![start.clone(); j1 - j0 + 1];
    if noise.is_state_independent() {
        acc.iterations += 1;
        return frozen_solve(&start, &y, j0, potential, noise, cfg, path);
    }
    let mut local = Vec::new();
    for _ in 0..max_iter {
        let x = frozen_solve(&start, &y, j0, potential, noise, cfg, path)?;
        acc.iterations += 1;
        let d = x
            .iter()
            .zip(&y)
            .map(|(a, b)| a.distance_sq(b, tag))
            .fold(0.0, f64::max)
            .sqrt();
        if let Some(&prev) = local.last() {
            let ratio: f64 = if prev > 0.0 { d / prev } else { 0.0 };
            acc.ratios.push(ratio);
        }
        local.push(d);
        acc.distances.push(d);
        y = x;
        if d <= tol {
            return Ok(y);
        }
        let n = local.len();
        if n >= 3 && local[n - 1] >= local[n - 2] && local[n - 2] >= local[n - 3] {
            break;
        }
    }
    if depth >= MAX_SUBDIVISION_DEPTH || j1 - j0 < 2 {
        return Err(Error::NonContraction {
            ratios: acc.ratios.clone(),
        });
    }
    acc.subdivisions += 1;
    let mid = j0 + (j1 - j0) / 2;
    let mut first = picard_segment(
        start, j0, mid, potential, noise, cfg, path, tol, max_iter, depth + 1, acc,
    )?;
    let second = picard_segment(
        first.last().unwrap().clone(),
        mid,
        j1,
        potential,
        noise,
        cfg,
        path,
        tol,
        max_iter,
        depth + 1,
        acc,
    )?;
    first.extend(second.into_iter().skip(1));
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseOperator;
    use crate::potentials::ReactionParams;
    use crate::spectral::SpaceTag;

    #[test]
    fn heat_decay_is_scalar_resolvent() {
        let b = SpectralBasis::new(6);
        let heat = Potential::reaction_diffusion(ReactionParams::none()).unwrap();
        let noise = PreparedNoise::new(&NoiseOperator::zero(), &b, &heat).unwrap();
        let x0 = Field::from_fn(&b, |k| 1.0 / k as f64);
        let cfg = SchemeConfig::proximal(0.01, 0.05);
        let sol = simulate_path(&x0, &b, &heat, &noise, &cfg, 0).unwrap();
        assert_eq!(sol.len(), 6);
        for k in 1..=6 {
            let lam = b.eigenvalues()[k - 1];
            let want = (1.0 / k as f64) / (1.0 + 0.01 * lam).powi(5);
            assert!((sol.final_state.coeffs()[k - 1] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn t_end_zero_is_projected_start() {
        let b = SpectralBasis::new(4);
        let fine = SpectralBasis::new(8);
        let pm = Potential::porous_medium(2.0).unwrap();
        let noise = PreparedNoise::new(&NoiseOperator::zero(), &b, &pm).unwrap();
        let x0 = Field::from_fn(&fine, |k| 1.0 / (k * k) as f64);
        let cfg = SchemeConfig::proximal(0.01, 0.0);
        let sol = simulate_path(&x0, &b, &pm, &noise, &cfg, 0).unwrap();
        assert_eq!(sol.len(), 1);
        let p = project_weighted(&WeightedProjectionProblem::new(&x0, 4, &pm)).unwrap();
        assert!(sol.final_state.distance_sq(&p, SpaceTag::L2) < 1e-24);
    }

    #[test]
    fn validation_aggregates() {
        let b = SpectralBasis::new(16);
        let rd = Potential::reaction_diffusion(ReactionParams::default()).unwrap();
        let mut cfg = SchemeConfig::proximal(1.5, 1.0);
        cfg.newton_max = 0;
        let err = cfg.validate(&rd, &b).unwrap_err().to_string();
        assert!(err.contains("1/lambda_qc"));
        assert!(err.contains("integer"));
        assert!(err.contains("newton_max"));
        let ex = SchemeConfig::explicit(1e-3, 1e-2);
        assert!(ex.validate(&rd, &b).unwrap_err().to_string().contains("cfl_safety"));
    }
}
