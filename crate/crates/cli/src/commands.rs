use anyhow::{bail, Result};
use gradflow_core::estimators::{self, dep_ic_ratio, energy_apriori, galerkin_cauchy, ou_exact_check, regularity_integral};
use gradflow_core::integrator::{picard_solve, simulate_path};
use gradflow_core::noise::{a5_analytic_bound, a5_lipschitz_estimate, a6_norm, summability, PresetKind};
use gradflow_core::potentials::{check_a2_bound, check_coercivity, check_growth};
use gradflow_core::projections::{project_weighted, projection_study, write_study_csv, WeightedProjectionProblem};
use gradflow_core::rng::auxiliary_rng;
use gradflow_core::{EstimatorReport, Field, NoiseKind, PreparedNoise};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{sample_field, space_name, Experiment, NoisePreset, Purpose};
use crate::output::OutDir;

pub fn dispatch(purpose: Purpose, exp: &Experiment) -> Result<()> {
    let mut out = OutDir::create(&exp.run.out)?;
    let name = match purpose {
        Purpose::Simulate => {
            simulate(exp, &mut out)?;
            "simulate"
        }
        Purpose::Check => {
            check(exp, &mut out)?;
            "check"
        }
        Purpose::Estimate => {
            estimate(exp, &mut out)?;
            "estimate"
        }
        Purpose::ProjectionStudy => {
            study(exp, &mut out)?;
            "projection-study"
        }
    };
    let root = out.root().display().to_string();
    out.finish(name, &exp.table, exp.run.seed)?;
    println!("wrote {root}/manifest.json");
    Ok(())
}

fn simulate(exp: &Experiment, out: &mut OutDir) -> Result<()> {
    let cfg = exp.scheme.as_ref().expect("validated");
    let x0 = exp.x0.as_ref().expect("validated");
    let noise = PreparedNoise::new(&exp.noise, &exp.basis, &exp.potential)?;
    let runs: Vec<gradflow_core::Result<(Vec<u8>, Option<serde_json::Value>)>> = (0..exp.run.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let (sol, picard) = if exp.run.picard {
                let o = picard_solve(
                    x0,
                    &exp.basis,
                    &exp.potential,
                    &noise,
                    cfg,
                    i,
                    exp.run.picard_tol,
                    exp.run.picard_max,
                )?;
                let info = json!({
                    "path": i,
                    "iterations": o.iterations,
                    "distances": o.distances,
                    "ratios": o.ratios,
                    "subdivisions": o.subdivisions,
                });
                (o.path, Some(info))
            } else {
                (simulate_path(x0, &exp.basis, &exp.potential, &noise, cfg, i)?, None)
            };
            let mut bytes = Vec::new();
            sol.write_csv(&mut bytes, true)?;
            Ok((bytes, picard))
        })
        .collect();
    let mut picard = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        let (bytes, info) = r?;
        out.write(&format!("path_{i:04}.csv"), &bytes)?;
        picard.extend(info);
    }
    if exp.run.picard {
        out.write_json("picard.json", &picard)?;
    }
    println!("simulated {} path(s) on {} modes", exp.run.n_paths, exp.basis.n_modes());
    Ok(())
}

fn check(exp: &Experiment, out: &mut OutDir) -> Result<()> {
    let p = &exp.potential;
    let b = &exp.basis;
    let tag = p.h_tag();
    let n = exp.check.samples.max(1);
    let seed = exp.run.seed;
    let amplitude = |i: usize| [0.5, 1.0, 2.0, 4.0][i % 4];
    let meta = json!({
        "family": p.family(),
        "h_space": space_name(tag),
        "n_modes": b.n_modes(),
        "samples": n,
        "seed": seed,
    });

    out.write_json("growth.json", &json!({"meta": meta, "laws": check_growth(p)}))?;

    let mut rng = auxiliary_rng(seed, 0, 10);
    let (mut upper, mut lower) = (0.0f64, f64::INFINITY);
    for i in 0..n {
        let v = sample_field(b, &mut rng).scaled(amplitude(i));
        let phi = p.phi_value(&v);
        let tilde = p.phi_tilde_value(&v);
        upper = upper.max(phi / (tilde + 0.5 * v.norm_sq(tag) + 1.0));
        if tilde > 0.0 {
            lower = lower.min((phi + 1.0) / tilde);
        }
    }
    out.write_json(
        "a1_sandwich.json",
        &json!({
            "meta": meta,
            "upper_constant": upper,
            "lower_constant": lower,
            "form": "lower·phi~(v) − 1 ≤ phi(v) ≤ upper·(phi~(v) + ½‖v‖²_H + 1)",
        }),
    )?;

    let mut rng = auxiliary_rng(seed, 0, 11);
    let mut a2 = 0.0f64;
    for i in 0..n {
        let v = sample_field(b, &mut rng).scaled(amplitude(i));
        let ws: Vec<Field> = (0..3).map(|_| sample_field(b, &mut rng)).collect();
        a2 = a2.max(check_a2_bound(p, &v, &ws).constant);
    }
    out.write_json("a2_second_derivative.json", &json!({"meta": meta, "constant": a2}))?;

    let mut rng = auxiliary_rng(seed, 0, 12);
    let mut quotient = f64::INFINITY;
    for i in 0..n {
        let u = sample_field(b, &mut rng).scaled(amplitude(i));
        let v = sample_field(b, &mut rng).scaled(amplitude(i));
        let d = &u - &v;
        let q = (&p.subgradient(&u) - &p.subgradient(&v)).inner(&d, tag) / d.norm_sq(tag);
        quotient = quotient.min(q);
    }
    out.write_json(
        "a3_lambda_monotonicity.json",
        &json!({
            "meta": meta,
            "lambda_qc": p.lambda_qc(),
            "min_quotient": quotient,
            "holds": quotient >= -p.lambda_qc() - 1e-8,
        }),
    )?;

    let mut rng = auxiliary_rng(seed, 0, 13);
    let (mut a4, mut a4p) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let v = sample_field(b, &mut rng).scaled(amplitude(i));
        let r = check_coercivity(p, &v, exp.check.c1);
        a4 = a4.max(r.bound_a4);
        a4p = a4p.max(r.bound_a4prime);
    }
    out.write_json(
        "a4_coercivity.json",
        &json!({"meta": meta, "c1": exp.check.c1, "max_bound_a4": a4, "max_bound_a4prime": a4p}),
    )?;

    let mut rng = auxiliary_rng(seed, 0, 14);
    let a5 = a5_lipschitz_estimate(&exp.noise, b, tag, n, &mut rng);
    out.write_json(
        "a5_lipschitz.json",
        &json!({"meta": meta, "constant": a5, "analytic_bound": a5_analytic_bound(&exp.noise, tag)}),
    )?;

    let mut rng = auxiliary_rng(seed, 0, 15);
    let mut a6 = 0.0f64;
    for i in 0..n {
        let v = sample_field(b, &mut rng).scaled(amplitude(i));
        a6 = a6.max(a6_norm(&exp.noise, &v, 0.0, p)?.ratio);
    }
    let summ = match (&exp.noise.kind, noise_preset(exp)) {
        (NoiseKind::Zero, _) | (_, None) => serde_json::Value::Null,
        (_, Some((kind, decay))) => json!(summability(p, kind, decay, exp.noise.n_modes())),
    };
    out.write_json("a6_weighted_norm.json", &json!({"meta": meta, "max_ratio": a6, "summability": summ}))?;

    let mut rng = auxiliary_rng(seed, 0, 16);
    let half = (b.n_modes() / 2).max(1);
    let mut ratio = 0.0f64;
    for i in 0..n {
        let h = sample_field(b, &mut rng).scaled(amplitude(i));
        let proj = project_weighted(&WeightedProjectionProblem::new(&h, half, p))?;
        let total = p.phi_tilde_1_value(&h);
        if total > 0.0 {
            ratio = ratio.max(p.phi_tilde_1_value(&proj) / total);
        }
    }
    out.write_json(
        "projection_bound.json",
        &json!({
            "meta": meta,
            "n": half,
            "max_ratio": ratio,
            "bound": 2f64.powf(p.max_degree()),
        }),
    )?;

    if exp.projection_study.is_some() && exp.x0.is_some() {
        study(exp, out)?;
    }
    println!("checked assumptions on {} samples", n);
    Ok(())
}

fn noise_preset(exp: &Experiment) -> Option<(PresetKind, f64)> {
    let s = &exp.noise_section;
    match s.preset {
        NoisePreset::Zero => None,
        NoisePreset::AdditivePowerlaw => Some((PresetKind::Additive, s.decay)),
        NoisePreset::MultiplicativePowerlaw => Some((PresetKind::Multiplicative, s.decay)),
    }
}

fn study(exp: &Experiment, out: &mut OutDir) -> Result<()> {
    let x0 = exp.x0.as_ref().expect("validated");
    let n_list = &exp.projection_study.as_ref().expect("validated").n_list;
    let rows = projection_study(x0, n_list, &exp.potential)?;
    let mut bytes = Vec::new();
    write_study_csv(&rows, &mut bytes)?;
    out.write("projection_study.csv", &bytes)?;
    for r in &rows {
        println!("n = {:>4}  err = {:.6e}  phi_proj = {:.6e}  ratio = {:.4}", r.n, r.err, r.phi_proj, r.ratio);
    }
    Ok(())
}

fn estimate(exp: &Experiment, out: &mut OutDir) -> Result<()> {
    if exp.estimate.estimators.is_empty() {
        println!("no estimators selected");
        return Ok(());
    }
    let cfg = exp.scheme.as_ref().expect("validated");
    let x0 = exp.x0.as_ref().expect("validated");
    let setup = estimators::Experiment {
        potential: &exp.potential,
        noise: &exp.noise,
        cfg,
        n_paths: exp.estimate.n_paths,
    };
    for name in &exp.estimate.estimators {
        let rep: EstimatorReport = match name.as_str() {
            "ou_exact_check" => ou_exact_check(&setup, &exp.basis, x0)?,
            "energy_apriori" => energy_apriori(&setup, x0, &exp.rungs())?,
            "regularity_integral" => regularity_integral(&setup, x0, &exp.rungs())?,
            "galerkin_cauchy" => galerkin_cauchy(&setup, x0, &exp.n_list())?,
            "dep_ic_ratio" => {
                let dir = match &exp.estimate.direction {
                    Some(c) => Field::from_coeffs(x0.basis(), c)?,
                    None => Field::basis_vector(x0.basis(), 1)?,
                };
                let xb = x0 + &dir;
                dep_ic_ratio(&setup, &exp.basis, x0, &xb, &exp.estimate.eps)?
            }
            other => bail!("unknown estimator {other}"),
        };
        out.write(&format!("{name}.json"), rep.to_json()?.as_bytes())?;
        out.write(&format!("{name}.txt"), rep.to_text().as_bytes())?;
        let mut csv = Vec::new();
        rep.write_ladder_csv(&mut csv)?;
        out.write(&format!("{name}_ladder.csv"), &csv)?;
        print!("{}", rep.to_text());
    }
    Ok(())
}
