//! Monte Carlo estimators for the a priori energy bound, continuous
//! dependence on the initial datum, Galerkin Cauchy property,
//! `t`-weighted subgradient integral and the exact Ornstein–Uhlenbeck law.
//!
//! Paths are simulated in parallel and collected in path order; all sums
//! are compensated, so results do not depend on the worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::integrator::{initial_state, simulate_with, SchemeConfig};
use crate::noise::{a6_norm, NoiseKind, NoiseOperator, PreparedNoise};
use crate::potentials::{Family, FamilyParams, Potential};
use crate::rng::BrownianPath;
use crate::spectral::{Field, SpectralBasis};

/// Neumaier-compensated sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, se: 0.0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = neumaier_sum(xs.iter().copied()) / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
        Self {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }

    /// Sample variance with the standard error of the variance estimator
    /// under a normal model.
    pub fn variance_of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n < 2 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let m = neumaier_sum(xs.iter().copied()) / n as f64;
        let var = neumaier_sum(xs.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64;
        Self {
            mean: var,
            se: var * (2.0 / (n - 1) as f64).sqrt(),
        }
    }

    pub fn scaled(self, a: f64) -> Self {
        Self {
            mean: self.mean * a,
            se: self.se * a.abs(),
        }
    }

    /// `self / other` with first-order error propagation.
    pub fn ratio(self, other: Estimate) -> Self {
        if other.mean == 0.0 {
            return Self {
                mean: if self.mean == 0.0 { 0.0 } else { f64::INFINITY },
                se: 0.0,
            };
        }
        let r = self.mean / other.mean;
        Self {
            mean: r,
            se: ((self.se / other.mean).powi(2) + (r * other.se / other.mean).powi(2)).sqrt(),
        }
    }

    fn too_noisy(&self) -> bool {
        self.se > 0.25 * self.mean.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Violated,
    Inconclusive,
}

/// One decision `lhs ≤ rhs` under the 3-SE rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub verdict: Verdict,
}

impl Check {
    /// With `relative_rule`, no verdict is issued when either side has a
    /// standard error above 25% of its estimate.
    pub fn new(name: &str, lhs: Estimate, rhs: Estimate, relative_rule: bool) -> Self {
        let se = (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
        let verdict = if !lhs.mean.is_finite() || !rhs.mean.is_finite() {
            Verdict::Inconclusive
        } else if relative_rule && (lhs.too_noisy() || rhs.too_noisy()) {
            Verdict::Inconclusive
        } else if lhs.mean - rhs.mean > 3.0 * se {
            Verdict::Violated
        } else {
            Verdict::Bounded
        };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub label: String,
    pub n_modes: usize,
    pub dt: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub ratio: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorReport {
    pub name: String,
    /// Identifier of the inequality under test.
    pub inequality: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub n_paths: usize,
    pub fingerprint: String,
    pub verdict: Verdict,
    pub ladder: Vec<LadderRow>,
    pub checks: Vec<Check>,
    pub diverged_paths: usize,
    pub metadata: BTreeMap<String, Value>,
}

impl EstimatorReport {
    fn finish(mut self) -> Self {
        self.verdict = if self.diverged_paths > 0 || self.checks.iter().any(|c| c.verdict == Verdict::Violated) {
            Verdict::Violated
        } else if self.checks.iter().any(|c| c.verdict == Verdict::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Bounded
        };
        self
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_canonical_json(self)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{} [{}]\n", self.name, self.inequality));
        s.push_str(&format!(
            "  paths {}  fingerprint {}  verdict {:?}\n",
            self.n_paths, self.fingerprint, self.verdict
        ));
        s.push_str(&format!(
            "  lhs {:.6e} ± {:.2e}   rhs {:.6e} ± {:.2e}\n",
            self.lhs.mean, self.lhs.se, self.rhs.mean, self.rhs.se
        ));
        if !self.ladder.is_empty() {
            s.push_str(&format!(
                "  {:<14} {:>6} {:>10} {:>13} {:>10} {:>13} {:>10} {:>13} {:>10}\n",
                "label", "n", "dt", "lhs", "se", "rhs", "se", "ratio", "se"
            ));
            for r in &self.ladder {
                s.push_str(&format!(
                    "  {:<14} {:>6} {:>10.3e} {:>13.6e} {:>10.2e} {:>13.6e} {:>10.2e} {:>13.6e} {:>10.2e}\n",
                    r.label, r.n_modes, r.dt, r.lhs.mean, r.lhs.se, r.rhs.mean, r.rhs.se, r.ratio.mean, r.ratio.se
                ));
            }
        }
        for c in &self.checks {
            s.push_str(&format!(
                "  check {:<28} {:>13.6e} <= {:>13.6e}  {:?}\n",
                c.name, c.lhs.mean, c.rhs.mean, c.verdict
            ));
        }
        s
    }

    pub fn write_ladder_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "inequality", "label", "n_modes", "dt", "lhs", "lhs_se", "rhs", "rhs_se", "ratio", "ratio_se",
        ])?;
        for r in &self.ladder {
            w.write_record([
                self.inequality.clone(),
                r.label.clone(),
                r.n_modes.to_string(),
                format!("{:e}", r.dt),
                format!("{:e}", r.lhs.mean),
                format!("{:e}", r.lhs.se),
                format!("{:e}", r.rhs.mean),
                format!("{:e}", r.rhs.se),
                format!("{:e}", r.ratio.mean),
                format!("{:e}", r.ratio.se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A point `(n, dt)` of a refinement ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rung {
    pub n_modes: usize,
    pub dt: f64,
}

impl Rung {
    pub fn new(n_modes: usize, dt: f64) -> Self {
        Self { n_modes, dt }
    }
}

/// Shared inputs of every estimator.
#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub potential: &'a Potential,
    pub noise: &'a NoiseOperator,
    /// Scheme, horizon, seed and initial projection; `dt` is overridden by
    /// ladder rungs where present.
    pub cfg: &'a SchemeConfig,
    pub n_paths: usize,
}

impl Experiment<'_> {
    fn fingerprint(&self, extra: Value) -> Result<String> {
        crate::io::fingerprint(&json!({
            "potential": self.potential.params(),
            "noise": describe_noise(self.noise),
            "scheme": self.cfg,
            "n_paths": self.n_paths,
            "extra": extra,
        }))
    }

    fn report(&self, name: &str, inequality: &str, extra: Value) -> Result<EstimatorReport> {
        let mut metadata = BTreeMap::new();
        metadata.insert(
            "sup_convention".into(),
            json!("suprema over time are maxima over the grid nodes"),
        );
        metadata.insert("family".into(), json!(self.potential.family()));
        for (i, w) in self.potential.warnings().iter().enumerate() {
            metadata.insert(format!("warning_{i}"), json!(w));
        }
        Ok(EstimatorReport {
            name: name.into(),
            inequality: inequality.into(),
            lhs: Estimate::exact(0.0),
            rhs: Estimate::exact(0.0),
            n_paths: self.n_paths,
            fingerprint: self.fingerprint(extra)?,
            verdict: Verdict::Inconclusive,
            ladder: Vec::new(),
            checks: Vec::new(),
            diverged_paths: 0,
            metadata,
        })
    }

    fn rung_cfg(&self, dt: f64, base_dt: f64) -> SchemeConfig {
        let mut c = self.cfg.clone();
        c.dt = dt;
        c.base_dt = Some(base_dt);
        c.record_states = false;
        c
    }
}

pub fn describe_noise(op: &NoiseOperator) -> Value {
    let kind = match &op.kind {
        NoiseKind::Zero => json!({"kind": "zero"}),
        NoiseKind::Additive { g } => json!({
            "kind": "additive",
            "g": g.iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>(),
        }),
        NoiseKind::LinearMultiplicative { mu } => json!({"kind": "linear_multiplicative", "mu": mu}),
    };
    json!({"operator": kind, "projection": op.projection_mode, "modulation": op.modulation})
}

fn min_dt(rungs: &[Rung]) -> f64 {
    rungs.iter().map(|r| r.dt).fold(f64::INFINITY, f64::min)
}

/// Runs `f(path_index)` for every path, in parallel, keeping path order.
fn paths<T, F>(n: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Splits path results into successes and a count of diverged paths;
/// other errors propagate.
fn split_diverged<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let mut ok = Vec::with_capacity(results.len());
    let mut diverged = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::Diverged { .. }) | Err(Error::DivergedEnergy(_)) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((ok, diverged))
}

fn stability_check(name: &str, ratios: &[Estimate], factor: f64) -> Option<Check> {
    if ratios.len() < 2 {
        return None;
    }
    let max = ratios.iter().copied().max_by(|a, b| a.mean.total_cmp(&b.mean))?;
    let min = ratios.iter().copied().min_by(|a, b| a.mean.total_cmp(&b.mean))?;
    Some(Check::new(name, max, min.scaled(factor), true))
}

pub const ENERGY_APRIORI: &str = "apriori_energy_bound";
pub const INITIAL_DATA_CONTINUITY: &str = "initial_data_continuity";
pub const T_WEIGHTED_SUBGRADIENT: &str = "t_weighted_subgradient_integral";
pub const GALERKIN_CAUCHY: &str = "galerkin_cauchy";
pub const OU_EXACT_LAW: &str = "ou_exact_law";

/// `sup_t E(φ(Xⁿ_t) + ‖Xⁿ_t‖²_H) + E∫‖P_n Dφ(Xⁿ)‖²_H` against
/// `φ̃₁(X₀) + 1 + E∫‖B(Xⁿ)‖_{φ̃₁}` along a `(n, dt)` ladder; the empirical
/// constant is their ratio and must be stable (max/min ≤ 2).
pub fn energy_apriori(exp: &Experiment, x0: &Field, rungs: &[Rung]) -> Result<EstimatorReport> {
    let mut rep = exp.report("energy_apriori", ENERGY_APRIORI, json!({"rungs": rungs, "x0": x0.coeffs()}))?;
    let pot = exp.potential;
    let tag = pot.h_tag();
    let phi0 = pot.phi_tilde_1_value(x0);
    let base = min_dt(rungs);
    let mut ratios = Vec::new();
    for rung in rungs {
        let basis = SpectralBasis::new(rung.n_modes);
        let cfg = exp.rung_cfg(rung.dt, base);
        cfg.validate(pot, &basis)?;
        let noise = PreparedNoise::new(exp.noise, &basis, pot)?;
        let start = initial_state(x0, &basis, pot, &cfg)?;
        let results = paths(exp.n_paths, |i| {
            let mut path = BrownianPath::new(cfg.seed, i, cfg.base_dt());
            let mut nodes = Vec::with_capacity(cfg.n_steps() + 1);
            let mut grad_int = 0.0;
            let mut noise_int = 0.0;
            simulate_with(start.clone(), pot, &noise, &cfg, &mut path, |j, x| {
                let e = pot.phi_value(x) + x.norm_sq(tag);
                if !e.is_finite() {
                    return Err(Error::DivergedEnergy(format!("energy {e} at step {j}")));
                }
                nodes.push(e);
                if j < cfg.n_steps() {
                    grad_int += cfg.dt * pot.subgradient_norm_sq(x);
                    if !exp.noise.is_zero() {
                        noise_int += cfg.dt * a6_norm(exp.noise, x, j as f64 * cfg.dt, pot)?.norm;
                    }
                }
                Ok(())
            })?;
            Ok((nodes, grad_int, noise_int))
        });
        let (ok, diverged) = split_diverged(results)?;
        rep.diverged_paths += diverged;
        if ok.is_empty() {
            continue;
        }
        let n_nodes = ok[0].0.len();
        let node_means: Vec<f64> = (0..n_nodes)
            .map(|j| neumaier_sum(ok.iter().map(|p| p.0[j])) / ok.len() as f64)
            .collect();
        let jstar = (0..n_nodes)
            .max_by(|&a, &b| node_means[a].total_cmp(&node_means[b]))
            .unwrap_or(0);
        let lhs_samples: Vec<f64> = ok.iter().map(|p| p.0[jstar] + p.1).collect();
        let rhs_samples: Vec<f64> = ok.iter().map(|p| phi0 + 1.0 + p.2).collect();
        let lhs = Estimate::from_samples(&lhs_samples);
        let rhs = Estimate::from_samples(&rhs_samples);
        let ratio = lhs.ratio(rhs);
        ratios.push(ratio);
        rep.ladder.push(LadderRow {
            label: format!("n{}_dt{:e}", rung.n_modes, rung.dt),
            n_modes: rung.n_modes,
            dt: rung.dt,
            lhs,
            rhs,
            ratio,
        });
    }
    if let Some(last) = rep.ladder.last() {
        rep.lhs = last.lhs;
        rep.rhs = last.rhs;
    }
    if let Some(c) = stability_check("constant_ladder_max_over_2min", &ratios, 2.0) {
        rep.checks.push(c);
    }
    Ok(rep.finish())
}

/// `E sup_t ‖X^a_t − X^b_t‖²_H ≤ C ‖X^a_0 − X^b_0‖²_H` on coupled paths,
/// with `X^b_0 = x0_a + ε (x0_b − x0_a)/‖x0_b − x0_a‖_H` for each ε.
pub fn dep_ic_ratio(
    exp: &Experiment,
    basis: &Arc<SpectralBasis>,
    x0_a: &Field,
    x0_b: &Field,
    eps: &[f64],
) -> Result<EstimatorReport> {
    let pot = exp.potential;
    let tag = pot.h_tag();
    let mut rep = exp.report(
        "dep_ic_ratio",
        INITIAL_DATA_CONTINUITY,
        json!({"n_modes": basis.n_modes(), "x0_a": x0_a.coeffs(), "x0_b": x0_b.coeffs(), "eps": eps}),
    )?;
    let mut cfg = exp.cfg.clone();
    cfg.record_states = false;
    cfg.validate(pot, basis)?;
    let noise = PreparedNoise::new(exp.noise, basis, pot)?;
    let dir = x0_b - &x0_a.rebase(x0_b.basis());
    let dir_norm = dir.norm(tag);
    let start_a = initial_state(x0_a, basis, pot, &cfg)?;
    let arms: Vec<(f64, Field)> = if dir_norm == 0.0 {
        vec![(0.0, start_a.clone())]
    } else {
        eps.iter()
            .map(|&e| {
                let xb = &x0_a.rebase(x0_b.basis()) + &dir.scaled(e / dir_norm);
                initial_state(&xb, basis, pot, &cfg).map(|s| (e, s))
            })
            .collect::<Result<_>>()?
    };
    let results = paths(exp.n_paths, |i| {
        let mut path = BrownianPath::new(cfg.seed, i, cfg.base_dt());
        let mut a_states = Vec::with_capacity(cfg.n_steps() + 1);
        simulate_with(start_a.clone(), pot, &noise, &cfg, &mut path, |_, x| {
            a_states.push(x.clone());
            Ok(())
        })?;
        let consumed_a = path.consumed();
        let mut sups = Vec::with_capacity(arms.len());
        for (_, sb) in &arms {
            let mut pb = BrownianPath::new(cfg.seed, i, cfg.base_dt());
            let mut sup: f64 = 0.0;
            simulate_with(sb.clone(), pot, &noise, &cfg, &mut pb, |j, x| {
                sup = sup.max(a_states[j].distance_sq(x, tag));
                Ok(())
            })?;
            if pb.consumed() != consumed_a {
                return Err(Error::Estimator(format!(
                    "coupled arms consumed different increments on path {i}"
                )));
            }
            sups.push(sup);
        }
        Ok(sups)
    });
    let (ok, diverged) = split_diverged(results)?;
    rep.diverged_paths = diverged;
    let mut ratios = Vec::new();
    for (a, (e, sb)) in arms.iter().enumerate() {
        let samples: Vec<f64> = ok.iter().map(|s| s[a]).collect();
        let lhs = Estimate::from_samples(&samples);
        let den = Estimate::exact(start_a.distance_sq(sb, tag));
        let ratio = if den.mean > 0.0 { lhs.ratio(den) } else { Estimate::exact(0.0) };
        ratios.push(ratio);
        rep.ladder.push(LadderRow {
            label: format!("eps{e:e}"),
            n_modes: basis.n_modes(),
            dt: cfg.dt,
            lhs,
            rhs: den,
            ratio,
        });
    }
    if let Some(first) = rep.ladder.first() {
        rep.lhs = first.lhs;
        rep.rhs = first.rhs;
    }
    if dir_norm > 0.0 {
        if let Some(c) = stability_check("constant_ladder_max_over_2min", &ratios, 2.0) {
            rep.checks.push(c);
        }
        if exp.noise.is_zero() && pot.lambda_qc() == 0.0 {
            let max = ratios.iter().copied().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
            rep.checks.push(Check::new("contraction_constant_le_1", max, Estimate::exact(1.0), false));
        }
    }
    rep.metadata.insert("coupling".into(), json!("identical Brownian increments per path index"));
    Ok(rep.finish())
}

/// `E Σ_j dt t_j ‖∂φ(X_{t_j})‖²_H` along a `(n, dt)` ladder; stable when
/// successive relative changes are at most 20%.
pub fn regularity_integral(exp: &Experiment, x0: &Field, rungs: &[Rung]) -> Result<EstimatorReport> {
    let pot = exp.potential;
    let mut rep = exp.report(
        "regularity_integral",
        T_WEIGHTED_SUBGRADIENT,
        json!({"rungs": rungs, "x0": x0.coeffs()}),
    )?;
    let base = min_dt(rungs);
    let mut estimates = Vec::new();
    for rung in rungs {
        let basis = SpectralBasis::new(rung.n_modes);
        let cfg = exp.rung_cfg(rung.dt, base);
        cfg.validate(pot, &basis)?;
        let noise = PreparedNoise::new(exp.noise, &basis, pot)?;
        let start = initial_state(x0, &basis, pot, &cfg)?;
        let results = paths(exp.n_paths, |i| {
            let mut path = BrownianPath::new(cfg.seed, i, cfg.base_dt());
            let n_steps = cfg.n_steps();
            let mut integral = Vec::with_capacity(n_steps);
            let mut sup_terms = Vec::with_capacity(n_steps + 1);
            simulate_with(start.clone(), pot, &noise, &cfg, &mut path, |j, x| {
                let t = j as f64 * cfg.dt;
                let g = t * pot.subgradient_norm_sq(x);
                if !g.is_finite() {
                    return Err(Error::DivergedEnergy(format!("subgradient norm {g} at step {j}")));
                }
                sup_terms.push(g);
                if j < n_steps {
                    integral.push(cfg.dt * g);
                }
                Ok(())
            })?;
            Ok((neumaier_sum(integral), sup_terms))
        });
        let (ok, diverged) = split_diverged(results)?;
        rep.diverged_paths += diverged;
        if ok.is_empty() {
            continue;
        }
        let est = Estimate::from_samples(&ok.iter().map(|p| p.0).collect::<Vec<_>>());
        let n_nodes = ok[0].1.len();
        let sup = (0..n_nodes)
            .map(|j| neumaier_sum(ok.iter().map(|p| p.1[j])) / ok.len() as f64)
            .fold(0.0, f64::max);
        estimates.push(est);
        rep.ladder.push(LadderRow {
            label: format!("n{}_dt{:e}", rung.n_modes, rung.dt),
            n_modes: rung.n_modes,
            dt: rung.dt,
            lhs: est,
            rhs: Estimate::exact(sup),
            ratio: Estimate::exact(if sup > 0.0 { est.mean / sup } else { 0.0 }),
        });
    }
    rep.metadata.insert(
        "ladder_columns".into(),
        json!("lhs = E sum dt t |subgradient|^2, rhs = max_j t_j E|subgradient(X_j)|^2"),
    );
    if let Some(last) = rep.ladder.last() {
        rep.lhs = last.lhs;
        rep.rhs = last.rhs;
    }
    for w in estimates.windows(2) {
        let diff = Estimate {
            mean: (w[1].mean - w[0].mean).abs(),
            se: (w[0].se.powi(2) + w[1].se.powi(2)).sqrt(),
        };
        let tol = w[0].scaled(0.2);
        rep.checks.push(Check::new("successive_change_le_20pct", diff, tol, false));
    }
    for e in &estimates {
        if e.too_noisy() && e.mean != 0.0 {
            rep.checks.push(Check::new("relative_standard_error", *e, *e, true));
        }
    }
    Ok(rep.finish())
}

/// Rows `E sup_t ‖Xⁿ_t − X²ⁿ_t‖²_H` for each `n`; each must not exceed its
/// predecessor by more than 3 combined standard errors.
pub fn galerkin_cauchy(exp: &Experiment, x0: &Field, n_list: &[usize]) -> Result<EstimatorReport> {
    let pot = exp.potential;
    let tag = pot.h_tag();
    let mut rep = exp.report("galerkin_cauchy", GALERKIN_CAUCHY, json!({"n_list": n_list, "x0": x0.coeffs()}))?;
    let mut resolutions: Vec<usize> = n_list.iter().flat_map(|&n| [n, 2 * n]).collect();
    resolutions.sort_unstable();
    resolutions.dedup();
    let mut cfg = exp.cfg.clone();
    cfg.record_states = false;
    let mut prepared = Vec::new();
    for &n in &resolutions {
        let basis = SpectralBasis::new(n);
        cfg.validate(pot, &basis)?;
        let noise = PreparedNoise::new(exp.noise, &basis, pot)?;
        let start = initial_state(x0, &basis, pot, &cfg)?;
        prepared.push((basis, noise, start));
    }
    let finest = SpectralBasis::new(*resolutions.last().unwrap_or(&1));
    let results = paths(exp.n_paths, |i| {
        let mut runs = Vec::with_capacity(prepared.len());
        let mut consumed: Option<Vec<usize>> = None;
        for (_, noise, start) in &prepared {
            let mut path = BrownianPath::new(cfg.seed, i, cfg.base_dt());
            let mut states = Vec::with_capacity(cfg.n_steps() + 1);
            simulate_with(start.clone(), pot, noise, &cfg, &mut path, |_, x| {
                states.push(x.rebase(&finest));
                Ok(())
            })?;
            let c = path.consumed();
            if let Some(prev) = &consumed {
                if *prev != c {
                    return Err(Error::Estimator(format!(
                        "resolutions consumed different increments on path {i}"
                    )));
                }
            }
            consumed = Some(c);
            runs.push(states);
        }
        let sups: Vec<f64> = n_list
            .iter()
            .map(|&n| {
                let a = &runs[resolutions.binary_search(&n).unwrap()];
                let b = &runs[resolutions.binary_search(&(2 * n)).unwrap()];
                a.iter().zip(b).map(|(x, y)| x.distance_sq(y, tag)).fold(0.0, f64::max)
            })
            .collect();
        Ok(sups)
    });
    let (ok, diverged) = split_diverged(results)?;
    rep.diverged_paths = diverged;
    let mut rows = Vec::new();
    for (a, &n) in n_list.iter().enumerate() {
        let est = Estimate::from_samples(&ok.iter().map(|s| s[a]).collect::<Vec<_>>());
        rows.push(est);
        rep.ladder.push(LadderRow {
            label: format!("n{n}_vs_{}", 2 * n),
            n_modes: n,
            dt: cfg.dt,
            lhs: est,
            rhs: Estimate::exact(0.0),
            ratio: Estimate::exact(0.0),
        });
    }
    for w in rows.windows(2) {
        rep.checks.push(Check::new("non_increasing_in_n", w[1], w[0], false));
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        rep.lhs = *last;
        rep.rhs = *first;
    }
    rep.metadata.insert("coupling".into(), json!("identical Brownian increments per path index"));
    Ok(rep.finish())
}

/// Per-mode terminal mean and variance against the exact
/// Ornstein–Uhlenbeck law of the linear heat equation with additive noise.
pub fn ou_exact_check(exp: &Experiment, basis: &Arc<SpectralBasis>, x0: &Field) -> Result<EstimatorReport> {
    let pot = exp.potential;
    let is_heat = matches!(pot.params(), FamilyParams::ReactionDiffusion(r) if r.reactions.is_empty())
        && pot.family() == Family::ReactionDiffusion;
    if !is_heat {
        return Err(Error::Estimator("the exact OU law needs the linear heat equation (no reaction terms)".into()));
    }
    if !exp.noise.is_state_independent() {
        return Err(Error::Estimator("the exact OU law needs additive noise".into()));
    }
    let mut rep = exp.report(
        "ou_exact_check",
        OU_EXACT_LAW,
        json!({"n_modes": basis.n_modes(), "x0": x0.coeffs()}),
    )?;
    let mut cfg = exp.cfg.clone();
    cfg.record_states = false;
    cfg.validate(pot, basis)?;
    let noise = PreparedNoise::new(exp.noise, basis, pot)?;
    let start = initial_state(x0, basis, pot, &cfg)?;
    let n = basis.n_modes();
    let t_end = cfg.n_steps() as f64 * cfg.dt;
    let results = paths(exp.n_paths, |i| {
        let mut path = BrownianPath::new(cfg.seed, i, cfg.base_dt());
        let x = simulate_with(start.clone(), pot, &noise, &cfg, &mut path, |_, _| Ok(()))?;
        Ok(x.into_coeffs())
    });
    let (ok, diverged) = split_diverged(results)?;
    rep.diverged_paths = diverged;
    let g: Vec<Field> = (1..=noise.n_modes())
        .map(|k| noise.projected_mode(&start, k))
        .collect::<Result<_>>()?;
    for k in 0..n {
        let lam = basis.eigenvalues()[k];
        let mean_exact = start.coeffs()[k] * (-lam * t_end).exp();
        let gk2: f64 = g.iter().map(|f| f.coeffs()[k] * f.coeffs()[k]).sum();
        let var_exact = gk2 * (1.0 - (-2.0 * lam * t_end).exp()) / (2.0 * lam);
        let samples: Vec<f64> = ok.iter().map(|c| c[k]).collect();
        let mean = Estimate::from_samples(&samples);
        let var = Estimate::variance_of(&samples);
        if mean_exact == 0.0 && var_exact == 0.0 && mean.mean == 0.0 && var.mean == 0.0 {
            continue;
        }
        let label = format!("mode{}", k + 1);
        let dev = Estimate {
            mean: (mean.mean - mean_exact).abs(),
            se: mean.se,
        };
        rep.checks.push(Check::new(&format!("{label}_mean_within_3se"), dev, Estimate::exact(0.0), false));
        let var_dev = Estimate::exact((var.mean - var_exact).abs());
        let var_tol = Estimate::exact(0.1 * var_exact);
        rep.checks.push(Check::new(&format!("{label}_variance_within_10pct"), var_dev, var_tol, false));
        rep.ladder.push(LadderRow {
            label,
            n_modes: n,
            dt: cfg.dt,
            lhs: mean,
            rhs: Estimate::exact(mean_exact),
            ratio: var.ratio(Estimate::exact(var_exact)),
        });
    }
    if let Some(first) = rep.ladder.first() {
        rep.lhs = first.lhs;
        rep.rhs = first.rhs;
    }
    rep.metadata.insert(
        "ladder_columns".into(),
        json!("lhs = empirical terminal mean, rhs = exact mean, ratio = empirical / exact variance"),
    );
    Ok(rep.finish())
}
