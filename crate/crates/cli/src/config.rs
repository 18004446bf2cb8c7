//! Experiment configuration: parsing, validation, defaults and the config hash.

use std::path::Path;

use freeconv::ensembles::{derive_seed, EntryDistribution};
use freeconv::freeprob::{operator_norm_bound, FreeModel, SpectralParameter};
use freeconv::linalg::{c, CMatrix, C64};
use freeconv::montecarlo::Ensemble;
use freeconv::ncpoly::{parse, CoefficientPencil, NCPolynomial};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub const EXPERIMENTS: [&str; 10] = [
    "solve",
    "density",
    "norm-predict",
    "converge",
    "master-check-iid",
    "master-check-wishart",
    "correction-check",
    "variance-check",
    "wishart-ibp",
    "containment",
];

/// A complex number: a bare real or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(self) -> C64 {
        match self {
            ComplexSpec::Real(x) => c(x, 0.0),
            ComplexSpec::Pair([re, im]) => c(re, im),
        }
    }

    fn normalized(self) -> Self {
        let z = self.value();
        ComplexSpec::Pair([z.re, z.im])
    }
}

/// Row-major matrix of complex entries.
pub type MatrixSpec = Vec<Vec<ComplexSpec>>;

fn matrix(spec: &MatrixSpec, field: &str) -> Result<CMatrix> {
    let rows = spec.len();
    let cols = spec.first().map_or(0, Vec::len);
    if rows == 0 || spec.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("`{field}` must be a non-empty rectangular matrix")));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| spec[i][j].value()))
}

fn normalize_matrix(spec: &mut MatrixSpec) {
    for z in spec.iter_mut().flatten() {
        *z = z.normalized();
    }
}

/// A scalar (taken as `z·1_m`) or a full `m x m` spectral parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Scalar(ComplexSpec),
    Matrix(MatrixSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PencilSpec {
    pub a0: MatrixSpec,
    #[serde(default)]
    pub generators: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub text: String,
    pub generators: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.points).map(|i| self.start + i as f64 * step).collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }
}

/// One case of the Wishart integration-by-parts check. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbpCase {
    pub n: usize,
    pub p: usize,
    /// `zero`, `trace` (Φ(Y) = Tr(Y E_jk)) or `resolvent` (Φ(Y) = (z − Y)⁻¹_jk).
    pub phi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ComplexSpec>,
    /// `H = E_jk + E_kj`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_n2: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_n1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ibp_sigmas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_pass_rate: Option<f64>,
}

/// Default tolerances: `(key, value, used by)`.
pub const DEFAULT_TOLERANCES: [(&str, &str, &str); 9] = [
    ("solver_tol", "1e-10", "solve, density, norm-predict"),
    ("residual_max", "1e-10", "solve"),
    ("mass_error", "0.02", "density"),
    ("slope_n2", "[-2.6, -1.4]", "master-check-iid, master-check-wishart, variance-check"),
    ("slope_n1", "[-1.6, -0.6]", "master-check-iid (κ4 ≠ 0)"),
    ("norm_deviation", "0.15", "converge"),
    ("ibp_sigmas", "4", "wishart-ibp"),
    ("epsilon", "0.2", "containment"),
    ("min_pass_rate", "0.95", "containment"),
];

impl Tolerances {
    fn fill(&mut self, keys: &[&str]) -> Result<()> {
        let present = field_names(&*self)?;
        if let Some(extra) = present.iter().find(|k| !keys.contains(&k.as_str())) {
            return Err(CliError::Config(format!("tolerance `tolerances.{extra}` is not used by this experiment")));
        }
        for key in keys {
            match *key {
                "solver_tol" => fill(&mut self.solver_tol, 1e-10),
                "residual_max" => fill(&mut self.residual_max, 1e-10),
                "mass_error" => fill(&mut self.mass_error, 0.02),
                "slope_n2" => fill(&mut self.slope_n2, [-2.6, -1.4]),
                "slope_n1" => fill(&mut self.slope_n1, [-1.6, -0.6]),
                "norm_deviation" => fill(&mut self.norm_deviation, 0.15),
                "ibp_sigmas" => fill(&mut self.ibp_sigmas, 4.0),
                "epsilon" => fill(&mut self.epsilon, 0.2),
                "min_pass_rate" => fill(&mut self.min_pass_rate, 0.95),
                other => unreachable!("unknown tolerance {other}"),
            }
        }
        Ok(())
    }
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pencil: Option<PencilSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<PolynomialSpec>,
    /// `semicircular` or `marchenko_pastur:<alpha>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// `gaussian`, `uniform` or `exp_power:<alpha>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_levels: Option<Vec<f64>>,
    /// 1-based generator indices of a word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<Vec<usize>>,
    /// 1-based entry of `Hn(λ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<IbpCase>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn field_names<T: Serialize>(value: &T) -> Result<Vec<String>> {
    match serde_json::to_value(value).map_err(|e| CliError::Config(e.to_string()))? {
        Value::Object(map) => Ok(map.keys().cloned().collect()),
        _ => Ok(Vec::new()),
    }
}

/// Fields each experiment reads, besides `experiment`, `output` and `seed`.
fn allowed_fields(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "solve" => &["pencil", "model", "lambda", "tolerances"],
        "density" => &["pencil", "model", "grid", "y_levels", "tolerances"],
        "norm-predict" => &["polynomial", "model", "tolerances"],
        "converge" => &["polynomial", "model", "distribution", "n_values", "seeds", "tolerances"],
        "master-check-iid" => &["pencil", "distribution", "lambda", "n_values", "replicas", "tolerances"],
        "master-check-wishart" => &["pencil", "model", "lambda", "n_values", "replicas", "tolerances"],
        "correction-check" => &["pencil", "distribution", "lambda", "n_values", "replicas"],
        "variance-check" => &[
            "word", "pencil", "lambda", "entry", "model", "distribution", "n_values", "replicas", "tolerances",
        ],
        "wishart-ibp" => &["cases", "replicas", "tolerances"],
        "containment" => &["pencil", "model", "distribution", "n_values", "seeds", "tolerances"],
        _ => &[],
    }
}

fn tolerance_keys(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "solve" => &["solver_tol", "residual_max"],
        "density" => &["solver_tol", "mass_error"],
        "norm-predict" => &["solver_tol"],
        "converge" => &["norm_deviation"],
        "master-check-iid" => &["slope_n2", "slope_n1"],
        "master-check-wishart" | "variance-check" => &["slope_n2"],
        "wishart-ibp" => &["ibp_sigmas"],
        "containment" => &["epsilon", "min_pass_rate"],
        _ => &[],
    }
}

pub fn check_experiment(name: &str) -> Result<()> {
    if EXPERIMENTS.contains(&name) {
        Ok(())
    } else {
        Err(CliError::UnknownExperiment {
            name: name.to_string(),
            valid: EXPERIMENTS.join(", "),
        })
    }
}

fn is_stochastic(experiment: &str) -> bool {
    !matches!(experiment, "solve" | "density" | "norm-predict")
}

fn missing(field: &str, experiment: &str) -> CliError {
    CliError::Config(format!("missing field `{field}` (required by {experiment})"))
}

fn invalid(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid `{field}`: {why}"))
}

pub fn parse_model(text: &str) -> Result<FreeModel> {
    let t = text.trim();
    if t == "semicircular" {
        return Ok(FreeModel::Semicircular);
    }
    let alpha = t
        .strip_prefix("marchenko_pastur:")
        .and_then(|a| a.trim().parse::<f64>().ok())
        .ok_or_else(|| invalid("model", format!("`{t}` (expected semicircular or marchenko_pastur:<alpha>)")))?;
    FreeModel::marchenko_pastur(alpha).map_err(|e| invalid("model", e))
}

/// A validated configuration with every field the experiment reads filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: String,
    pub config: Config,
    pub hash: String,
}

impl Resolved {
    pub fn tol(&self) -> &Tolerances {
        self.config.tolerances.as_ref().expect("resolved tolerances")
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    pub fn pencil(&self) -> Result<CoefficientPencil> {
        let spec = self.config.pencil.as_ref().ok_or_else(|| missing("pencil", &self.experiment))?;
        let a0 = matrix(&spec.a0, "pencil.a0")?;
        let rest = spec
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| matrix(g, &format!("pencil.generators[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        CoefficientPencil::new(a0, rest).map_err(|e| invalid("pencil", e))
    }

    pub fn polynomial(&self) -> Result<NCPolynomial> {
        let spec = self.config.polynomial.as_ref().ok_or_else(|| missing("polynomial", &self.experiment))?;
        parse(&spec.text, spec.generators).map_err(|e| invalid("polynomial", e))
    }

    pub fn model(&self) -> Result<FreeModel> {
        parse_model(self.config.model.as_deref().unwrap_or("semicircular"))
    }

    pub fn distribution(&self) -> Result<EntryDistribution> {
        self.config
            .distribution
            .as_deref()
            .unwrap_or("gaussian")
            .parse()
            .map_err(|e| invalid("distribution", e))
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        match self.model()? {
            FreeModel::Semicircular => Ok(Ensemble::Wigner(self.distribution()?)),
            FreeModel::MarchenkoPastur { alpha } => Ok(Ensemble::Wishart { alpha }),
        }
    }

    pub fn lambda(&self, m: usize) -> Result<SpectralParameter> {
        let spec = self.config.lambda.as_ref().ok_or_else(|| missing("lambda", &self.experiment))?;
        let out = match spec {
            LambdaSpec::Scalar(z) => SpectralParameter::scalar(z.value(), m),
            LambdaSpec::Matrix(mat) => {
                let l = matrix(mat, "lambda")?;
                if l.shape() != (m, m) {
                    return Err(invalid("lambda", format!("expected a {m}x{m} matrix, got {:?}", l.shape())));
                }
                SpectralParameter::new(l)
            }
        };
        out.map_err(|e| invalid("lambda", e))
    }

    pub fn n_values(&self) -> &[usize] {
        self.config.n_values.as_deref().unwrap_or(&[])
    }

    pub fn replicas(&self) -> usize {
        self.config.replicas.unwrap_or(0)
    }

    pub fn seeds(&self) -> &[u64] {
        self.config.seeds.as_deref().unwrap_or(&[])
    }
}

/// Validates `cfg` for `experiment`, fills defaults and computes the hash.
pub fn resolve(mut cfg: Config, experiment: &str, seed_override: Option<u64>) -> Result<Resolved> {
    check_experiment(experiment)?;
    if let Some(named) = &cfg.experiment {
        if named != experiment {
            return Err(invalid("experiment", format!("config is for `{named}` but `{experiment}` was requested")));
        }
    }
    cfg.experiment = Some(experiment.to_string());
    if seed_override.is_some() {
        cfg.seed = seed_override;
    }
    let allowed = allowed_fields(experiment);
    for key in field_names(&cfg)? {
        if !matches!(key.as_str(), "experiment" | "output" | "seed") && !allowed.contains(&key.as_str()) {
            return Err(CliError::Config(format!("field `{key}` is not used by {experiment}")));
        }
    }
    if cfg.tolerances.is_some() && tolerance_keys(experiment).is_empty() {
        return Err(CliError::Config(format!("field `tolerances` is not used by {experiment}")));
    }

    let need = |present: bool, field: &str| if present { Ok(()) } else { Err(missing(field, experiment)) };
    let uses_model = allowed.contains(&"model");
    if uses_model {
        let default = if experiment == "master-check-wishart" { "marchenko_pastur:1" } else { "semicircular" };
        fill(&mut cfg.model, default.to_string());
        let model = parse_model(cfg.model.as_deref().unwrap())?;
        if experiment == "master-check-wishart" && model == FreeModel::Semicircular {
            return Err(invalid("model", "master-check-wishart needs marchenko_pastur:<alpha>"));
        }
        if let FreeModel::MarchenkoPastur { alpha } = model {
            cfg.model = Some(format!("marchenko_pastur:{alpha}"));
            if cfg.distribution.is_some() {
                return Err(CliError::Config(
                    "field `distribution` is not used with a marchenko_pastur model (entries are complex Gaussian)".into(),
                ));
            }
        } else {
            cfg.model = Some("semicircular".into());
        }
    }
    let wigner = allowed.contains(&"distribution") && cfg.model.as_deref().is_none_or(|m| m == "semicircular");
    if wigner {
        fill(&mut cfg.distribution, "gaussian".to_string());
        let d: EntryDistribution = cfg.distribution.as_deref().unwrap().parse().map_err(|e| invalid("distribution", e))?;
        cfg.distribution = Some(d.to_string());
    }

    match experiment {
        "solve" => {
            need(cfg.pencil.is_some(), "pencil")?;
            need(cfg.lambda.is_some(), "lambda")?;
        }
        "density" => {
            need(cfg.pencil.is_some(), "pencil")?;
        }
        "norm-predict" => need(cfg.polynomial.is_some(), "polynomial")?,
        "converge" => {
            need(cfg.polynomial.is_some(), "polynomial")?;
            need(cfg.n_values.is_some(), "n_values")?;
        }
        "master-check-iid" | "correction-check" => {
            need(cfg.pencil.is_some(), "pencil")?;
            need(cfg.n_values.is_some(), "n_values")?;
            fill(&mut cfg.lambda, LambdaSpec::Scalar(ComplexSpec::Pair([0.0, 2.0])));
            fill(&mut cfg.replicas, 400);
        }
        "master-check-wishart" => {
            need(cfg.pencil.is_some(), "pencil")?;
            need(cfg.n_values.is_some(), "n_values")?;
            fill(&mut cfg.lambda, LambdaSpec::Scalar(ComplexSpec::Pair([2.0, 4.0])));
            fill(&mut cfg.replicas, 400);
        }
        "variance-check" => {
            need(cfg.n_values.is_some(), "n_values")?;
            match (cfg.word.is_some(), cfg.pencil.is_some()) {
                (true, true) => return Err(CliError::Config("give either `word` or `pencil`, not both".into())),
                (false, false) => return Err(missing("word` or `pencil", experiment)),
                (true, false) => {
                    if cfg.lambda.is_some() || cfg.entry.is_some() {
                        return Err(CliError::Config("`lambda` and `entry` apply only with `pencil`".into()));
                    }
                }
                (false, true) => {
                    fill(&mut cfg.lambda, LambdaSpec::Scalar(ComplexSpec::Pair([0.0, 2.0])));
                    fill(&mut cfg.entry, [1, 1]);
                }
            }
            fill(&mut cfg.replicas, 100);
        }
        "wishart-ibp" => {
            need(cfg.cases.is_some(), "cases")?;
            fill(&mut cfg.replicas, 100_000);
            for case in cfg.cases.as_mut().unwrap() {
                match case.phi.as_str() {
                    "zero" => {
                        if case.index.is_some() || case.z.is_some() {
                            return Err(invalid("cases.phi", "`zero` takes no index or z"));
                        }
                    }
                    "trace" => {
                        fill(&mut case.index, [1, 1]);
                        if case.z.is_some() {
                            return Err(invalid("cases.z", "z applies only to `resolvent`"));
                        }
                    }
                    "resolvent" => {
                        fill(&mut case.index, [1, 1]);
                        fill(&mut case.z, ComplexSpec::Pair([0.0, 3.0]));
                    }
                    other => return Err(invalid("cases.phi", format!("`{other}` (expected zero, trace or resolvent)"))),
                }
                fill(&mut case.direction, [1, 1]);
                case.z = case.z.map(ComplexSpec::normalized);
            }
        }
        "containment" => {
            need(cfg.pencil.is_some(), "pencil")?;
            need(cfg.n_values.is_some(), "n_values")?;
        }
        _ => unreachable!(),
    }

    if matches!(experiment, "converge" | "containment") {
        let base = cfg.seed.unwrap_or(0);
        fill(&mut cfg.seeds, (0..20).map(|i| derive_seed(base, i)).collect());
        cfg.seed = None;
    } else if is_stochastic(experiment) {
        fill(&mut cfg.seed, 0);
    } else {
        cfg.seed = None;
    }

    if let Some(n) = &cfg.n_values {
        if n.is_empty() || n.contains(&0) || n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_values", "must be non-empty, positive and strictly increasing"));
        }
    }
    if cfg.seeds.as_ref().is_some_and(Vec::is_empty) {
        return Err(invalid("seeds", "must not be empty"));
    }
    if let Some(p) = &mut cfg.pencil {
        normalize_matrix(&mut p.a0);
        p.generators.iter_mut().for_each(normalize_matrix);
    }
    match &mut cfg.lambda {
        Some(LambdaSpec::Scalar(z)) => *z = z.normalized(),
        Some(LambdaSpec::Matrix(mat)) => normalize_matrix(mat),
        None => {}
    }
    let mut tol = cfg.tolerances.take().unwrap_or_default();
    tol.fill(tolerance_keys(experiment))?;
    cfg.tolerances = Some(tol);

    let mut resolved = Resolved {
        experiment: experiment.to_string(),
        hash: String::new(),
        config: cfg,
    };
    // parse everything once so errors surface before any computation
    validate(&resolved)?;
    if experiment == "density" {
        let grid = match resolved.config.grid {
            Some(g) => g,
            None => default_grid(&resolved.pencil()?, resolved.model()?),
        };
        let h = grid.step();
        resolved.config.grid = Some(grid);
        fill(&mut resolved.config.y_levels, vec![2.0 * h, h]);
    }
    let hash = config_hash(&resolved.config)?;
    Ok(Resolved { hash, ..resolved })
}

fn validate(r: &Resolved) -> Result<()> {
    let cfg = &r.config;
    let m = if cfg.pencil.is_some() { Some(r.pencil()?.m()) } else { None };
    if cfg.polynomial.is_some() {
        r.polynomial()?;
    }
    if cfg.lambda.is_some() {
        r.lambda(m.unwrap_or(1))?;
    }
    if cfg.model.is_some() {
        r.model()?;
    }
    if let Some(g) = &cfg.grid {
        if g.points < 2 || !(g.stop > g.start) {
            return Err(invalid("grid", "need points >= 2 and stop > start"));
        }
    }
    if let Some(y) = &cfg.y_levels {
        if y.is_empty() || y.iter().any(|v| !(*v > 0.0)) || y.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("y_levels", "must be positive and strictly decreasing"));
        }
    }
    if let Some(w) = &cfg.word {
        if w.contains(&0) {
            return Err(invalid("word", "generator indices are 1-based"));
        }
    }
    if let (Some([i, j]), Some(m)) = (cfg.entry, m) {
        if i == 0 || j == 0 || i > m || j > m {
            return Err(invalid("entry", format!("({i}, {j}) outside a {m}x{m} matrix (1-based)")));
        }
    }
    if r.experiment == "master-check-wishart" || r.experiment == "containment" || r.experiment == "converge" {
        r.ensemble()?;
    }
    if let Some(cases) = &cfg.cases {
        if cases.is_empty() {
            return Err(invalid("cases", "must not be empty"));
        }
        for case in cases {
            for (name, idx) in [("cases.index", case.index), ("cases.direction", case.direction)] {
                if let Some([j, k]) = idx {
                    if j == 0 || k == 0 || j > case.n || k > case.n {
                        return Err(invalid(name, format!("({j}, {k}) outside {0}x{0} (1-based)", case.n)));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Default density grid: step 0.01 over `±(1.05‖s‖ + 0.1)`, with `y` levels `2h, h`.
pub fn default_grid(pencil: &CoefficientPencil, model: FreeModel) -> GridSpec {
    let half = ((operator_norm_bound(pencil, model) * 1.05 + 0.1) * 100.0).ceil();
    GridSpec {
        start: -half / 100.0,
        stop: half / 100.0,
        points: 2 * half as usize + 1,
    }
}

/// SHA-256 of the canonical (sorted-key, compact) JSON of the resolved config.
pub fn config_hash(cfg: &Config) -> Result<String> {
    let mut semantic = cfg.clone();
    semantic.output = None;
    let value = serde_json::to_value(&semantic).map_err(|e| CliError::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&value).map_err(|e| CliError::Config(e.to_string()))?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
