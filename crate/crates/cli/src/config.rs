//! Experiment configuration: TOML sections, dotted-key overrides and
//! validation into ready-to-run library objects.

use std::sync::Arc;

use anyhow::{Context, Result};
use gradflow_core::noise::{summability, PresetKind};
use gradflow_core::potentials::{PLaplaceParams, PorousMediumParams, ReactionParams, ScalarLaw};
use gradflow_core::rng::auxiliary_rng;
use gradflow_core::{
    Error, Field, InitialProjection, NoiseOperator, Potential, ProjectionMode, Rung, Scheme, SchemeConfig, SpaceTag,
    SpectralBasis,
};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

const SECTIONS: &[&str] = &[
    "equation",
    "basis",
    "noise",
    "scheme",
    "initial",
    "estimate",
    "check",
    "projection_study",
    "run",
];

/// Stream tag separating the sign draws of rough initial data from every
/// other use of the master seed.
const INITIAL_SIGN_TAG: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PorousMedium,
    ReactionDiffusion,
    PLaplace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSection {
    pub family: FamilyName,
    /// Porous-medium exponent.
    pub p: Option<f64>,
    /// p-Laplace exponent.
    pub m: Option<f64>,
    /// Polynomial coefficients of `Φ`, lowest degree first, replacing the
    /// power law.
    pub phi: Option<Vec<f64>>,
    /// Reaction polynomials `f_i`, lowest degree first.
    pub reactions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub n_modes: usize,
    pub n_quad: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    Zero,
    AdditivePowerlaw,
    MultiplicativePowerlaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub preset: NoisePreset,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "two")]
    pub decay: f64,
    /// Retained noise modes; defaults to the Galerkin dimension.
    pub modes: Option<usize>,
    #[serde(default)]
    pub projection: ProjectionMode,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            preset: NoisePreset::Zero,
            amplitude: 1.0,
            decay: 2.0,
            modes: None,
            projection: ProjectionMode::Weighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProjectionName {
    Orthogonal,
    Weighted,
    Levelset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "proximal")]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "newton_max")]
    pub newton_max: usize,
    #[serde(default = "half")]
    pub cfl_safety: f64,
    pub base_dt: Option<f64>,
    #[serde(default = "weighted")]
    pub initial_projection: InitialProjectionName,
    /// Level of the level-set projection.
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Explicit coefficients.
    List,
    /// `amplitude · k^{−decay}`, optionally with alternating signs.
    Powerlaw,
    /// `amplitude · σ_k k^{−decay}` with seeded random signs `σ_k`.
    Rough,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub coeffs: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "two")]
    pub decay: f64,
    #[serde(default)]
    pub alternating: bool,
    /// Number of modes the data are specified on; defaults to the Galerkin
    /// dimension (or the list length).
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungSpec {
    pub n_modes: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default)]
    pub estimators: Vec<String>,
    #[serde(default = "n_paths")]
    pub n_paths: usize,
    /// `(n, dt)` ladder; defaults to `(n, dt), (2n, dt/4), (4n, dt/16)`.
    pub rungs: Option<Vec<RungSpec>>,
    /// Resolutions `n` compared against `2n`; defaults to `[n, 2n]`.
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "eps")]
    pub eps: Vec<f64>,
    /// Perturbation direction for the continuity estimator; defaults to `e_1`.
    pub direction: Option<Vec<f64>>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            estimators: Vec::new(),
            n_paths: n_paths(),
            rungs: None,
            n_list: None,
            eps: eps(),
            direction: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "samples")]
    pub samples: usize,
    /// `C₁` in the strengthened coercivity ratio.
    #[serde(default = "one")]
    pub c1: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            samples: samples(),
            c1: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionStudySection {
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default = "out_dir")]
    pub out: String,
    /// Paths written by `simulate`.
    #[serde(default = "one_usize")]
    pub n_paths: usize,
    /// Solve multiplicative noise by fixed-point iteration in `simulate`.
    #[serde(default)]
    pub picard: bool,
    #[serde(default = "picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "newton_max")]
    pub picard_max: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            out: out_dir(),
            n_paths: 1,
            picard: false,
            picard_tol: picard_tol(),
            picard_max: newton_max(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn one_usize() -> usize {
    1
}
fn proximal() -> Scheme {
    Scheme::ProximalEm
}
fn weighted() -> InitialProjectionName {
    InitialProjectionName::Weighted
}
fn newton_tol() -> f64 {
    1e-10
}
fn newton_max() -> usize {
    100
}
fn picard_tol() -> f64 {
    1e-12
}
fn n_paths() -> usize {
    1000
}
fn eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn samples() -> usize {
    100
}
fn out_dir() -> String {
    "out".into()
}

/// Command-line overrides, applied before validation.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
    /// `section.key=value` pairs; values parse as TOML, falling back to a
    /// plain string.
    pub set: Vec<String>,
}

/// Which sections a subcommand needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Simulate,
    Check,
    Estimate,
    ProjectionStudy,
}

/// A validated experiment.
pub struct Experiment {
    /// Effective configuration after overrides.
    pub table: Table,
    pub potential: Potential,
    pub basis: Arc<SpectralBasis>,
    pub noise: NoiseOperator,
    pub noise_section: NoiseSection,
    pub scheme: Option<SchemeConfig>,
    pub x0: Option<Field>,
    pub estimate: EstimateSection,
    pub check: CheckSection,
    pub projection_study: Option<ProjectionStudySection>,
    pub run: RunSection,
}

impl Experiment {
    pub fn rungs(&self) -> Vec<Rung> {
        let cfg = self.scheme.as_ref().expect("scheme validated");
        match &self.estimate.rungs {
            Some(r) => r.iter().map(|r| Rung::new(r.n_modes, r.dt)).collect(),
            None => {
                let n = self.basis.n_modes();
                vec![
                    Rung::new(n, cfg.dt),
                    Rung::new(2 * n, cfg.dt / 4.0),
                    Rung::new(4 * n, cfg.dt / 16.0),
                ]
            }
        }
    }

    pub fn n_list(&self) -> Vec<usize> {
        let n = self.basis.n_modes();
        self.estimate.n_list.clone().unwrap_or_else(|| vec![n, 2 * n])
    }
}

pub fn read_table(path: &str) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let table: Table = toml::from_str(&text).with_context(|| format!("parsing {path}"))?;
    Ok(table)
}

pub fn apply_overrides(table: &mut Table, o: &Overrides) -> Result<()> {
    for kv in &o.set {
        let (key, raw) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {kv:?}"))?;
        let value = parse_value(raw.trim());
        set_dotted(table, key.trim(), value)?;
    }
    if let Some(s) = o.seed {
        set_dotted(table, "run.seed", Value::Integer(s as i64))?;
    }
    if let Some(w) = o.workers {
        set_dotted(table, "run.workers", Value::Integer(w as i64))?;
    }
    if let Some(out) = &o.out {
        set_dotted(table, "run.out", Value::String(out.clone()))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).context("empty override key")?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("override {key}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn section<T: DeserializeOwned>(table: &Table, name: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = table.get(name)?;
    match T::deserialize(v.clone()) {
        Ok(s) => Some(s),
        Err(e) => {
            errs.push(format!("[{name}]: {}", e.message().trim()));
            None
        }
    }
}

fn required<T: DeserializeOwned>(table: &Table, name: &str, errs: &mut Vec<String>) -> Option<T> {
    if !table.contains_key(name) {
        errs.push(format!("missing section [{name}]"));
        return None;
    }
    section(table, name, errs)
}

pub fn build_potential(eq: &EquationSection) -> gradflow_core::Result<Potential> {
    let reactions = |default: Vec<ScalarLaw>| -> Vec<ScalarLaw> {
        eq.reactions
            .as_ref()
            .map(|r| r.iter().map(|c| ScalarLaw::polynomial(c)).collect())
            .unwrap_or(default)
    };
    match eq.family {
        FamilyName::PorousMedium => {
            let p = eq.p.unwrap_or(2.0);
            let mut params = PorousMediumParams::power_law(p);
            if let Some(c) = &eq.phi {
                params.phi = ScalarLaw::polynomial(c);
            }
            Potential::porous_medium_with(params)
        }
        FamilyName::ReactionDiffusion => {
            Potential::reaction_diffusion(ReactionParams::new(reactions(ReactionParams::default().reactions)))
        }
        FamilyName::PLaplace => {
            let mut params = PLaplaceParams::standard(eq.m.unwrap_or(3.0)).with_reactions(reactions(Vec::new()));
            if let Some(c) = &eq.phi {
                params.phi = ScalarLaw::polynomial(c);
            }
            Potential::p_laplace(params)
        }
    }
}

fn noise_operator(
    s: &NoiseSection,
    basis: &Arc<SpectralBasis>,
    potential: &Potential,
    errs: &mut Vec<String>,
) -> Option<NoiseOperator> {
    let modes = s.modes.unwrap_or(basis.n_modes());
    if modes == 0 && s.preset != NoisePreset::Zero {
        errs.push("[noise] modes must be positive".into());
        return None;
    }
    let kind = match s.preset {
        NoisePreset::Zero => return Some(NoiseOperator::zero()),
        NoisePreset::AdditivePowerlaw => PresetKind::Additive,
        NoisePreset::MultiplicativePowerlaw => PresetKind::Multiplicative,
    };
    let rep = summability(potential, kind, s.decay, modes);
    if !rep.satisfied {
        errs.push(format!(
            "[noise] decay {} fails the summability condition of the {:?} family (series exponents {:?} must exceed 1)",
            s.decay,
            potential.family(),
            rep.series_exponents
        ));
    }
    let noise_basis = if modes > basis.n_modes() { SpectralBasis::new(modes) } else { basis.clone() };
    let op = match kind {
        PresetKind::Additive => match NoiseOperator::additive_powerlaw(&noise_basis, s.amplitude, s.decay, modes) {
            Ok(op) => op,
            Err(e) => {
                errs.push(format!("[noise] {e}"));
                return None;
            }
        },
        PresetKind::Multiplicative => NoiseOperator::multiplicative_powerlaw(s.amplitude, s.decay, modes),
    };
    Some(op.with_projection(s.projection))
}

fn scheme_config(s: &SchemeSection, seed: u64, errs: &mut Vec<String>) -> Option<SchemeConfig> {
    let initial = match s.initial_projection {
        InitialProjectionName::Orthogonal => InitialProjection::Orthogonal,
        InitialProjectionName::Weighted => InitialProjection::Weighted,
        InitialProjectionName::Levelset => match s.level {
            Some(level) => InitialProjection::Levelset { level },
            None => {
                errs.push("[scheme] initial_projection = \"levelset\" needs a level".into());
                return None;
            }
        },
    };
    let mut cfg = SchemeConfig::new(s.scheme, s.dt, s.t_end).with_seed(seed).with_initial(initial);
    cfg.newton_tol = s.newton_tol;
    cfg.newton_max = s.newton_max;
    cfg.cfl_safety = s.cfl_safety;
    cfg.base_dt = s.base_dt;
    Some(cfg)
}

fn initial_field(s: &InitialSection, n_modes: usize, seed: u64, errs: &mut Vec<String>) -> Option<Field> {
    let modes = s
        .modes
        .unwrap_or_else(|| s.coeffs.as_ref().map_or(n_modes, |c| c.len().max(n_modes)));
    if modes == 0 {
        errs.push("[initial] modes must be positive".into());
        return None;
    }
    let basis = SpectralBasis::new(modes);
    match s.kind {
        InitialKind::List => {
            let Some(c) = &s.coeffs else {
                errs.push("[initial] kind = \"list\" needs coeffs".into());
                return None;
            };
            match Field::from_coeffs(&basis, c) {
                Ok(f) => Some(f),
                Err(e) => {
                    errs.push(format!("[initial] {e}"));
                    None
                }
            }
        }
        InitialKind::Powerlaw => Some(Field::from_fn(&basis, |k| {
            let sign = if s.alternating && k % 2 == 0 { -1.0 } else { 1.0 };
            sign * s.amplitude * (k as f64).powf(-s.decay)
        })),
        InitialKind::Rough => {
            let mut rng = auxiliary_rng(seed, 0, INITIAL_SIGN_TAG);
            Some(Field::from_fn(&basis, |k| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * s.amplitude * (k as f64).powf(-s.decay)
            }))
        }
    }
}

fn validation_messages(e: Error) -> Vec<String> {
    match e {
        Error::Validation(v) => v,
        other => vec![other.to_string()],
    }
}

const ESTIMATORS: &[&str] = &[
    "ou_exact_check",
    "energy_apriori",
    "dep_ic_ratio",
    "regularity_integral",
    "galerkin_cauchy",
];

/// Parses and cross-checks every section; all problems are reported in a
/// single [`Error::Validation`].
pub fn validate(table: Table, purpose: Purpose) -> std::result::Result<Experiment, Error> {
    let mut errs = Vec::new();
    for key in table.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errs.push(format!("unknown section [{key}]"));
        }
    }
    let eq: Option<EquationSection> = required(&table, "equation", &mut errs);
    let basis_s: Option<BasisSection> = required(&table, "basis", &mut errs);
    let noise_s: NoiseSection = section(&table, "noise", &mut errs).unwrap_or_default();
    let needs_scheme = matches!(purpose, Purpose::Simulate | Purpose::Estimate);
    let scheme_s: Option<SchemeSection> = if needs_scheme {
        required(&table, "scheme", &mut errs)
    } else {
        section(&table, "scheme", &mut errs)
    };
    let needs_initial = matches!(purpose, Purpose::Simulate | Purpose::ProjectionStudy);
    let initial_s: Option<InitialSection> = if needs_initial {
        required(&table, "initial", &mut errs)
    } else {
        section(&table, "initial", &mut errs)
    };
    let estimate: EstimateSection = section(&table, "estimate", &mut errs).unwrap_or_default();
    let check: CheckSection = section(&table, "check", &mut errs).unwrap_or_default();
    let projection_study: Option<ProjectionStudySection> = if purpose == Purpose::ProjectionStudy {
        required(&table, "projection_study", &mut errs)
    } else {
        section(&table, "projection_study", &mut errs)
    };
    let run: RunSection = section(&table, "run", &mut errs).unwrap_or_default();

    let potential = eq.as_ref().and_then(|e| match build_potential(e) {
        Ok(p) => Some(p),
        Err(err) => {
            errs.push(format!("[equation] {err}"));
            None
        }
    });
    let basis = basis_s.as_ref().and_then(|b| {
        let r = match b.n_quad {
            Some(q) => SpectralBasis::with_quadrature(b.n_modes, q),
            None if b.n_modes == 0 => Err(Error::Domain("n_modes must be positive".into())),
            None => Ok(SpectralBasis::new(b.n_modes)),
        };
        r.map_err(|e| errs.push(format!("[basis] {e}"))).ok()
    });
    let noise = match (&potential, &basis) {
        (Some(p), Some(b)) => noise_operator(&noise_s, b, p, &mut errs),
        _ => None,
    };
    let scheme = scheme_s.as_ref().and_then(|s| scheme_config(s, run.seed, &mut errs));
    if let (Some(cfg), Some(p), Some(b)) = (&scheme, &potential, &basis) {
        if let Err(e) = cfg.validate(p, b) {
            errs.extend(validation_messages(e).into_iter().map(|m| format!("[scheme] {m}")));
        }
    }
    let x0 = match (&initial_s, &basis) {
        (Some(s), Some(b)) => initial_field(s, b.n_modes(), run.seed, &mut errs),
        _ => None,
    };
    if run.workers == Some(0) {
        errs.push("[run] workers must be positive".into());
    }
    if purpose == Purpose::Simulate && run.picard && noise_s.preset != NoisePreset::MultiplicativePowerlaw {
        errs.push("[run] picard = true needs multiplicative noise".into());
    }
    if purpose == Purpose::Estimate {
        for name in &estimate.estimators {
            if !ESTIMATORS.contains(&name.as_str()) {
                errs.push(format!("[estimate] unknown estimator {name:?} (known: {})", ESTIMATORS.join(", ")));
            }
        }
        let needs_x0 = !estimate.estimators.is_empty();
        if needs_x0 && initial_s.is_none() {
            errs.push("missing section [initial]".into());
        }
        if let (Some(cfg), Some(p)) = (&scheme, &potential) {
            if let Some(rungs) = &estimate.rungs {
                for r in rungs {
                    let mut c = cfg.clone();
                    c.dt = r.dt;
                    c.base_dt = None;
                    if r.n_modes == 0 {
                        errs.push("[estimate] rung n_modes must be positive".into());
                    } else if let Err(e) = c.validate(p, &SpectralBasis::new(r.n_modes)) {
                        errs.extend(
                            validation_messages(e)
                                .into_iter()
                                .map(|m| format!("[estimate] rung (n = {}, dt = {}): {m}", r.n_modes, r.dt)),
                        );
                    }
                }
            }
        }
    }
    if let Some(ps) = &projection_study {
        if ps.n_list.is_empty() || ps.n_list.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("[projection_study] n_list must be non-empty and strictly increasing".into());
        }
        if let Some(x) = &x0 {
            if ps.n_list.last().is_some_and(|&n| n > x.n_modes()) {
                errs.push(format!(
                    "[projection_study] n_list exceeds the {} modes of the initial data",
                    x.n_modes()
                ));
            }
        }
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    Ok(Experiment {
        table,
        potential: potential.expect("validated"),
        basis: basis.expect("validated"),
        noise: noise.expect("validated"),
        noise_section: noise_s,
        scheme,
        x0,
        estimate,
        check,
        projection_study,
        run,
    })
}

/// Random test field with coefficients uniform in `[−1, 1]/k`.
pub fn sample_field<R: Rng>(basis: &Arc<SpectralBasis>, rng: &mut R) -> Field {
    Field::from_fn(basis, |k| rng.random_range(-1.0..1.0) / k as f64)
}

pub fn space_name(tag: SpaceTag) -> &'static str {
    match tag {
        SpaceTag::L2 => "L2",
        SpaceTag::Hminus1 => "H^-1",
        SpaceTag::H1zero => "H^1_0",
    }
}
