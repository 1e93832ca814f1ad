//! Experiment configuration, orchestration and CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{norm2, DenseMatrix};
use crate::problems::{
    find_optimum, gaussian_vec, make_diag_quadratic, make_logistic, make_sign_labels,
    make_spiked_covariance, rng_from_seed, sym_eigvals, warm_start, ObjectiveInstance,
    DEFAULT_MAX_ITER,
};
use crate::rate::{optimal_rate_k2, rate_report, CycleParams, Regime, MAX_CYCLE};
use crate::solvers::{
    empirical_rate_window, run_cheby_semi_iterative, run_cyclic_cheby2, run_hbk, Metric, RunTrace,
};
use crate::spectrum::{gap_params, two_interval_fit, GapParams, SpectrumSet};
use crate::tuning::{tune_general, tune_k2, tune_phb};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "CYCLIC_MOMENTUM_SEED";

/// Failures of the experiment layer, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: file not found")]
    MissingFile { path: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl BenchError {
    /// 2 for bad input, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Parse { .. } | BenchError::Validation(_) => 2,
            BenchError::MissingFile { .. } | BenchError::Io(_) => 4,
            BenchError::Core(e) if e.is_numerical() => 3,
            BenchError::Core(_) => 2,
        }
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;

fn default_dim() -> usize {
    200
}
fn default_reg_scale() -> f64 {
    1e-3
}
fn default_warm_start() -> usize {
    100
}
fn default_t() -> usize {
    2000
}
fn default_burn_in() -> usize {
    200
}
fn default_jobs() -> usize {
    1
}
fn default_lp_points() -> usize {
    2000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_grid() -> usize {
    200
}

/// Spiked covariance data for a synthetic logistic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    /// Number of features (columns).
    pub features: usize,
    /// Number of samples (rows).
    pub samples: usize,
    #[serde(default = "default_spikes")]
    pub spikes: usize,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_spikes() -> usize {
    3
}
fn default_factor() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Diagonal quadratic: either a spectrum (endpoints plus uniform draws) or an eigenvalue CSV.
    Quadratic {
        #[serde(default)]
        spectrum: Option<SpectrumSet>,
        #[serde(default)]
        eigs_csv: Option<PathBuf>,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Regularized logistic regression on CSV data or synthetic spiked data.
    Logistic {
        #[serde(default)]
        matrix_csv: Option<PathBuf>,
        #[serde(default)]
        labels_csv: Option<PathBuf>,
        #[serde(default)]
        synthetic: Option<SyntheticData>,
        #[serde(default = "default_reg_scale")]
        reg_scale: f64,
        #[serde(default = "default_warm_start")]
        warm_start: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl ProblemConfig {
    pub fn seed(&self) -> u64 {
        match self {
            ProblemConfig::Quadratic { seed, .. } | ProblemConfig::Logistic { seed, .. } => *seed,
        }
    }

    fn set_seed(&mut self, s: u64) {
        match self {
            ProblemConfig::Quadratic { seed, .. } | ProblemConfig::Logistic { seed, .. } => *seed = s,
        }
    }
}

/// Sweep of the two-step rate factor over an `(h_0, h_1)` grid at fixed momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Momentum; defaults to the optimal two-step momentum of the spectrum.
    #[serde(default)]
    pub m: Option<f64>,
    /// Largest step on each axis; defaults to `2(1+m)/L_1`.
    #[serde(default)]
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub methods: Vec<String>,
    #[serde(rename = "K", default)]
    pub k: Vec<usize>,
    #[serde(rename = "T", default = "default_t")]
    pub t: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_lp_points")]
    pub lp_points: usize,
    #[serde(default)]
    pub heatmap: Option<HeatmapConfig>,
}

/// A concrete method after expanding `hbk` over the configured K values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Gd,
    Phb,
    /// Closed-form alternating step-sizes.
    Hb2,
    /// Cycle of length K from the general pipeline.
    HbK(usize),
    Cheby,
    Cheby2,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Gd => "gd".into(),
            Method::Phb => "phb".into(),
            Method::Hb2 => "hb2".into(),
            Method::HbK(k) => format!("hb{k}"),
            Method::Cheby => "cheby".into(),
            Method::Cheby2 => "cheby2".into(),
        }
    }
}

impl ExperimentConfig {
    /// Methods in configuration order, with `hbk` expanded over `K`.
    pub fn expanded_methods(&self) -> BenchResult<Vec<Method>> {
        let mut out = Vec::new();
        for raw in &self.methods {
            let name = raw.to_ascii_lowercase();
            let ms = match name.as_str() {
                "gd" => vec![Method::Gd],
                "phb" => vec![Method::Phb],
                "hb2" => vec![Method::Hb2],
                "cheby" => vec![Method::Cheby],
                "cheby2" => vec![Method::Cheby2],
                "hbk" => {
                    if self.k.is_empty() {
                        return Err(BenchError::Validation("method hbk needs a non-empty K list".into()));
                    }
                    self.k.iter().map(|&k| Method::HbK(k)).collect()
                }
                other => match other.strip_prefix("hb").and_then(|s| s.parse::<usize>().ok()) {
                    Some(k) => vec![Method::HbK(k)],
                    None => return Err(BenchError::Validation(format!("unknown method {raw:?}"))),
                },
            };
            for m in ms {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> BenchResult<()> {
        if self.methods.is_empty() {
            return Err(BenchError::Validation("methods must not be empty".into()));
        }
        if self.t == 0 {
            return Err(BenchError::Validation("T must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(BenchError::Validation("jobs must be positive".into()));
        }
        let methods = self.expanded_methods()?;
        for m in &methods {
            if let Method::HbK(k) = m {
                if *k == 0 || *k > MAX_CYCLE {
                    return Err(BenchError::Validation(format!("K must lie in 1..={MAX_CYCLE}, got {k}")));
                }
                if self.lp_points < 4 * (k + 1) {
                    return Err(BenchError::Validation(format!(
                        "lp_points must be at least {} for K = {k}",
                        4 * (k + 1)
                    )));
                }
            }
        }
        for k in &self.k {
            if *k == 0 || *k > MAX_CYCLE {
                return Err(BenchError::Validation(format!("K must lie in 1..={MAX_CYCLE}, got {k}")));
            }
        }
        match &self.problem {
            ProblemConfig::Quadratic {
                spectrum,
                eigs_csv,
                dim,
                ..
            } => match (spectrum, eigs_csv) {
                (Some(s), None) => {
                    if *dim < 2 * s.len() {
                        return Err(BenchError::Validation(format!(
                            "dim must be at least {} to hold every interval endpoint",
                            2 * s.len()
                        )));
                    }
                    let needs_pair = methods.iter().any(|m| matches!(m, Method::Hb2 | Method::Cheby2));
                    if needs_pair {
                        gap_params(s).map_err(|e| BenchError::Validation(e.to_string()))?;
                    }
                }
                (None, Some(_)) => {}
                _ => {
                    return Err(BenchError::Validation(
                        "quadratic problem needs exactly one of spectrum or eigs_csv".into(),
                    ))
                }
            },
            ProblemConfig::Logistic {
                matrix_csv,
                labels_csv,
                synthetic,
                reg_scale,
                ..
            } => {
                if !(*reg_scale > 0.0 && reg_scale.is_finite()) {
                    return Err(BenchError::Validation("reg_scale must be positive".into()));
                }
                match (matrix_csv, labels_csv, synthetic) {
                    (Some(_), Some(_), None) => {}
                    (None, None, Some(s)) => {
                        if s.features == 0 || s.samples == 0 || s.spikes > s.features {
                            return Err(BenchError::Validation(
                                "synthetic data needs positive sizes and spikes <= features".into(),
                            ));
                        }
                    }
                    _ => {
                        return Err(BenchError::Validation(
                            "logistic problem needs matrix_csv and labels_csv, or synthetic".into(),
                        ))
                    }
                }
            }
        }
        if let Some(h) = &self.heatmap {
            if h.grid < 2 {
                return Err(BenchError::Validation("heatmap grid must be at least 2".into()));
            }
            if h.m.is_some_and(|m| !(0.0..1.0).contains(&m) || m == 0.0) {
                return Err(BenchError::Validation("heatmap momentum must lie in (0, 1)".into()));
            }
            if h.h_max.is_some_and(|v| !(v > 0.0)) {
                return Err(BenchError::Validation("heatmap h_max must be positive".into()));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses a configuration, resolving relative paths against the file's
/// directory and honoring the seed override in the environment.
pub fn parse_config(path: &Path) -> BenchResult<ExperimentConfig> {
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_config_with_seed(path, env_seed.as_deref())
}

/// [`parse_config`] with an explicit seed override instead of the environment.
pub fn parse_config_with_seed(path: &Path, seed_override: Option<&str>) -> BenchResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => BenchError::MissingFile {
            path: path.display().to_string(),
        },
        _ => BenchError::Io(e.to_string()),
    })?;
    let mut cfg = parse_config_str(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(s) = seed_override {
        let seed = s
            .trim()
            .parse::<u64>()
            .map_err(|_| BenchError::Validation(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
        cfg.problem.set_seed(seed);
    }
    match &mut cfg.problem {
        ProblemConfig::Quadratic { eigs_csv: Some(p), .. } => {
            *p = resolve(base, p);
            check_exists(p)?;
        }
        ProblemConfig::Logistic {
            matrix_csv: Some(a),
            labels_csv: Some(b),
            ..
        } => {
            *a = resolve(base, a);
            *b = resolve(base, b);
            check_exists(a)?;
            check_exists(b)?;
        }
        _ => {}
    }
    cfg.output_dir = resolve(base, &cfg.output_dir);
    cfg.validate()?;
    Ok(cfg)
}

fn check_exists(p: &Path) -> BenchResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(BenchError::MissingFile {
            path: p.display().to_string(),
        })
    }
}

/// Parses configuration text; `origin` labels diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> BenchResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // invalid spectra surface as semantic errors rather than syntax errors
        if e.classify() == serde_json::error::Category::Data && message.contains("spectrum") {
            BenchError::Validation(message)
        } else {
            BenchError::Parse {
                path: origin.into(),
                line: e.line(),
                column: e.column(),
                message,
            }
        }
    })?;
    Ok(cfg)
}

/// Headerless numeric CSV as rows.
pub fn read_csv_rows(path: &Path) -> BenchResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => BenchError::MissingFile {
                path: path.display().to_string(),
            },
            _ => BenchError::Io(e.to_string()),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>().map_err(|_| BenchError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    column: j + 1,
                    message: format!("not a number: {s:?}"),
                })
            })
            .collect::<BenchResult<Vec<f64>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// One-column headerless CSV (also accepts a single row).
pub fn read_vector_csv(path: &Path) -> BenchResult<Vec<f64>> {
    let rows = read_csv_rows(path)?;
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().unwrap_or_default());
    }
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> BenchResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for x in v {
        w.write_record([x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// The problem instance with its spectrum and starting point.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub objective: ObjectiveInstance,
    /// Support used for tuning.
    pub spectrum: SpectrumSet,
    /// Hessian eigenvalues (at the optimum for logistic problems).
    pub eigenvalues: Vec<f64>,
    pub x0: Vec<f64>,
    /// `‖∇f‖` of the located optimum, for non-quadratic problems.
    pub optimum_grad_norm: Option<f64>,
}

/// `dim` eigenvalues: every interval endpoint, then seeded uniform draws over the set.
pub fn spectrum_eigenvalues(spec: &SpectrumSet, dim: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut eigs: Vec<f64> = spec.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
    eigs.dedup();
    let total: f64 = spec.intervals().iter().map(|(a, b)| b - a).sum();
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    while eigs.len() < dim {
        let mut u = rng.random_range(0.0..total);
        let mut value = spec.l();
        for &(a, b) in spec.intervals() {
            if u <= b - a {
                value = a + u;
                break;
            }
            u -= b - a;
        }
        eigs.push(value);
    }
    eigs.truncate(dim);
    eigs
}

/// Seeded starting point `x* + u` with `u` a uniformly random unit vector.
pub fn random_unit_offset(x_star: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed.wrapping_add(1));
    let u = gaussian_vec(&mut rng, x_star.len());
    let n = norm2(&u);
    x_star.iter().zip(&u).map(|(a, b)| a + b / n).collect()
}

pub fn prepare_problem(cfg: &ProblemConfig) -> BenchResult<PreparedProblem> {
    match cfg {
        ProblemConfig::Quadratic {
            spectrum,
            eigs_csv,
            dim,
            seed,
        } => {
            let (spec, eigs) = match (spectrum, eigs_csv) {
                (Some(s), _) => (s.clone(), spectrum_eigenvalues(s, *dim, *seed)),
                (None, Some(p)) => {
                    let eigs = read_vector_csv(p)?;
                    (two_interval_fit(&eigs)?, eigs)
                }
                (None, None) => return Err(BenchError::Validation("quadratic problem has no spectrum".into())),
            };
            let obj = make_diag_quadratic(&eigs, *seed)?;
            let x0 = random_unit_offset(obj.x_star().expect("quadratic"), *seed);
            let mut sorted = eigs;
            sorted.sort_by(f64::total_cmp);
            Ok(PreparedProblem {
                objective: obj,
                spectrum: spec,
                eigenvalues: sorted,
                x0,
                optimum_grad_norm: None,
            })
        }
        ProblemConfig::Logistic {
            matrix_csv,
            labels_csv,
            synthetic,
            reg_scale,
            warm_start: ws,
            seed,
        } => {
            let (a, b) = match (matrix_csv, labels_csv, synthetic) {
                (Some(ap), Some(bp), _) => {
                    let a = DenseMatrix::from_rows(&read_csv_rows(ap)?)?;
                    (a, read_vector_csv(bp)?)
                }
                (_, _, Some(s)) => {
                    let a = make_spiked_covariance(s.features, s.samples, s.spikes, s.factor, *seed)?;
                    let b = make_sign_labels(&a, seed.wrapping_add(17));
                    (a, b)
                }
                _ => return Err(BenchError::Validation("logistic problem has no data".into())),
            };
            let obj = make_logistic(a, b, *reg_scale)?;
            let x_opt = find_optimum(&obj, 1e-10, DEFAULT_MAX_ITER)?;
            let eigs = sym_eigvals(&obj.hessian(&x_opt)?)?;
            let spec = two_interval_fit(&eigs)?;
            let x0 = warm_start(&obj, &vec![0.0; obj.dim], *ws)?;
            let gn = norm2(&obj.gradient(&x_opt)?);
            Ok(PreparedProblem {
                objective: obj,
                spectrum: spec,
                eigenvalues: eigs,
                x0,
                optimum_grad_norm: Some(gn),
            })
        }
    }
}

/// Parameters a method will run with, and its theoretical rate factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPlan {
    pub method: String,
    pub k: usize,
    /// Momentum; the stationary limit for the non-stationary methods.
    pub m: f64,
    /// Step-sizes; the stationary limit for the non-stationary methods.
    pub h: Vec<f64>,
    pub sigma_star: Option<f64>,
    pub regime: Option<Regime>,
    pub rate_theory: f64,
}

pub fn plan_method(method: &Method, spec: &SpectrumSet, lp_points: usize) -> crate::Result<MethodPlan> {
    let (mu, l) = (spec.mu(), spec.l());
    let from_params = |p: CycleParams| -> crate::Result<MethodPlan> {
        let rep = rate_report(&p, spec)?;
        Ok(MethodPlan {
            method: method.name(),
            k: p.k(),
            m: p.m,
            h: p.h,
            sigma_star: Some(rep.sigma_star),
            regime: Some(rep.regime),
            rate_theory: rep.rate_factor,
        })
    };
    match method {
        Method::Gd => from_params(CycleParams::new(vec![2.0 / (l + mu)], 0.0)?),
        Method::Phb => from_params(tune_phb(mu, l)?),
        Method::Hb2 => from_params(tune_k2(spec)?),
        Method::HbK(k) => {
            let g = tune_general(spec, *k, lp_points)?;
            Ok(MethodPlan {
                method: method.name(),
                k: *k,
                m: g.params.m,
                h: g.params.h,
                sigma_star: Some(g.report.sigma_star),
                regime: Some(g.report.regime),
                rate_theory: g.report.rate_factor,
            })
        }
        Method::Cheby => {
            let p = tune_phb(mu, l)?;
            let sk = (mu / l).sqrt();
            Ok(MethodPlan {
                method: method.name(),
                k: 1,
                m: p.m,
                h: p.h,
                sigma_star: None,
                regime: None,
                rate_theory: (1.0 - sk) / (1.0 + sk),
            })
        }
        Method::Cheby2 => {
            let p = tune_k2(spec)?;
            let (rate, _) = optimal_rate_k2(&gap_params(spec)?, None)?;
            Ok(MethodPlan {
                method: method.name(),
                k: 2,
                m: p.m,
                h: p.h,
                sigma_star: None,
                regime: None,
                rate_theory: rate,
            })
        }
    }
}

pub fn run_method(
    method: &Method,
    plan: &MethodPlan,
    prob: &PreparedProblem,
    t: usize,
) -> crate::Result<RunTrace> {
    let obj = &prob.objective;
    match method {
        Method::Cheby => run_cheby_semi_iterative(obj, prob.spectrum.mu(), prob.spectrum.l(), &prob.x0, t),
        Method::Cheby2 => run_cyclic_cheby2(obj, &prob.spectrum, &prob.x0, t),
        _ => run_hbk(obj, &CycleParams::new(plan.h.clone(), plan.m)?, &prob.x0, t),
    }
}

/// Index past which a gradient-norm trace sits at the floating-point floor:
/// the first `t` whose value is within a factor 100 of the trace minimum.
pub fn precision_floor_index(trace: &RunTrace) -> usize {
    let min = trace.log_values.iter().copied().fold(f64::INFINITY, f64::min);
    trace
        .log_values
        .iter()
        .position(|v| *v <= min + 100f64.ln())
        .unwrap_or(trace.len())
}

/// Empirical rate over `[burn_in, end)`; gradient-norm traces stop at their precision floor.
///
/// When the floor arrives before `burn_in + 10`, the window starts at 0 instead.
pub fn measured_rate(trace: &RunTrace, burn_in: usize) -> Option<f64> {
    if trace.diverged {
        return None;
    }
    let end = match trace.metric {
        Metric::Distance => trace.len(),
        Metric::GradNorm => precision_floor_index(trace),
    };
    let start = if end > burn_in + 10 { burn_in } else { 0 };
    empirical_rate_window(trace, start, end).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: f64,
    pub h_list: String,
    pub sigma_star: String,
    pub regime: String,
    pub rate_theory: f64,
    pub rate_empirical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub h0: f64,
    pub h1: f64,
    pub rate: f64,
}

/// Rate factor of the two-step cycle `(h0, h1; m)` on a `grid × grid` mesh of `(0, h_max]²`.
pub fn heatmap(spec: &SpectrumSet, m: f64, h_max: f64, grid: usize) -> crate::Result<Vec<HeatCell>> {
    let step = h_max / grid as f64;
    (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid, idx % grid);
            let (h0, h1) = ((i + 1) as f64 * step, (j + 1) as f64 * step);
            let rep = rate_report(&CycleParams::new(vec![h0, h1], m)?, spec)?;
            Ok(HeatCell { h0, h1, rate: rep.rate_factor })
        })
        .collect()
}

/// Default sweep momentum and range for a spectrum.
pub fn heatmap_defaults(spec: &SpectrumSet) -> crate::Result<(f64, f64)> {
    let p = tune_k2(spec)?;
    let gp = gap_params(spec)?;
    Ok((p.m, 2.0 * (1.0 + p.m) / gp.inner.0))
}

/// Formats `exp(log_value)` in scientific notation without underflow.
pub fn format_log_value(lv: f64) -> String {
    if lv == f64::NEG_INFINITY {
        return "0".into();
    }
    if lv > -700.0 {
        return format!("{:.12e}", lv.exp());
    }
    let e10 = lv / std::f64::consts::LN_10;
    let mut k = e10.floor();
    let mut mant = 10f64.powf(e10 - k);
    if mant >= 9.999_999_999_999_5 {
        mant = 1.0;
        k += 1.0;
    }
    format!("{mant:.12}e{}", k as i64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> BenchResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "metric"])?;
    for (t, lv) in trace.log_values.iter().enumerate() {
        w.write_record([t.to_string(), format_log_value(*lv)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_heatmap_csv(path: &Path, cells: &[HeatCell]) -> BenchResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-width histogram `(bin_lo, bin_hi, count)`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumReport<'a> {
    spectrum: &'a SpectrumSet,
    gap: Option<GapParams>,
    optimum_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub error: String,
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<(String, RunTrace)>,
    pub failures: Vec<Failure>,
}

/// Runs every configured method and writes traces, summary, spectrum files,
/// the optional heatmap and a failure manifest into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> BenchResult<ExperimentOutcome> {
    cfg.validate()?;
    let methods = cfg.expanded_methods()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| BenchError::Io(e.to_string()))?;
    let prob = prepare_problem(&cfg.problem)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let out = &cfg.output_dir;
    let mut files = Vec::new();

    let results: Vec<(Method, crate::Result<(MethodPlan, RunTrace)>)> = pool.install(|| {
        methods
            .par_iter()
            .map(|m| {
                let r = plan_method(m, &prob.spectrum, cfg.lp_points)
                    .and_then(|plan| run_method(m, &plan, &prob, cfg.t).map(|tr| (plan, tr)));
                (m.clone(), r)
            })
            .collect()
    });

    let mut summary = Vec::new();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (m, r) in results {
        match r {
            Ok((plan, trace)) => {
                let path = out.join(format!("trace_{}.csv", m.name()));
                write_trace_csv(&path, &trace)?;
                files.push(path);
                summary.push(SummaryRow {
                    method: plan.method.clone(),
                    k: plan.k,
                    m: plan.m,
                    h_list: plan.h.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(";"),
                    sigma_star: fmt_opt(plan.sigma_star),
                    regime: plan.regime.map(|r| r.to_string()).unwrap_or_default(),
                    rate_theory: plan.rate_theory,
                    rate_empirical: fmt_opt(measured_rate(&trace, cfg.burn_in)),
                });
                if trace.diverged {
                    failures.push(Failure {
                        method: m.name(),
                        error: "run diverged".into(),
                    });
                }
                traces.push((m.name(), trace));
            }
            Err(e) => {
                log::warn!("method {} failed: {e}", m.name());
                failures.push(Failure {
                    method: m.name(),
                    error: e.to_string(),
                });
            }
        }
    }

    let path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for row in &summary {
        w.serialize(row)?;
    }
    if summary.is_empty() {
        w.write_record([
            "method", "K", "m", "h_list", "sigma_star", "regime", "rate_theory", "rate_empirical",
        ])?;
    }
    w.flush()?;
    files.push(path);

    let path = out.join("eigenvalues.csv");
    write_vector_csv(&path, &prob.eigenvalues)?;
    files.push(path);

    let path = out.join("histogram.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (a, b, c) in histogram(&prob.eigenvalues, 50) {
        w.write_record([a.to_string(), b.to_string(), c.to_string()])?;
    }
    w.flush()?;
    files.push(path);

    let path = out.join("spectrum.json");
    let report = SpectrumReport {
        spectrum: &prob.spectrum,
        gap: gap_params(&prob.spectrum).ok(),
        optimum_grad_norm: prob.optimum_grad_norm,
    };
    fs::write(&path, serde_json::to_string_pretty(&report).map_err(|e| BenchError::Io(e.to_string()))?)?;
    files.push(path);

    if let Some(h) = &cfg.heatmap {
        let sweep = heatmap_defaults(&prob.spectrum).and_then(|(m0, hmax0)| {
            let m = h.m.unwrap_or(m0);
            let h_max = h.h_max.unwrap_or(hmax0);
            pool.install(|| heatmap(&prob.spectrum, m, h_max, h.grid))
        });
        match sweep {
            Ok(cells) => {
                let path = out.join("heatmap.csv");
                write_heatmap_csv(&path, &cells)?;
                files.push(path);
            }
            Err(e) => failures.push(Failure {
                method: "heatmap".into(),
                error: e.to_string(),
            }),
        }
    }

    let path = out.join("failures.json");
    fs::write(&path, serde_json::to_string_pretty(&failures).map_err(|e| BenchError::Io(e.to_string()))?)?;
    files.push(path);

    Ok(ExperimentOutcome {
        files,
        summary,
        traces,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"type": "quadratic", "spectrum": [[1, 2], [8, 9]], "dim": 40, "seed": 3},
        "methods": ["phb", "hb2"],
        "T": 2000
    }"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = parse_config_str(MINIMAL, "inline").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.expanded_methods().unwrap(), vec![Method::Phb, Method::Hb2]);
        assert_eq!(cfg.burn_in, 200);
    }

    #[test]
    fn negative_eigenvalue_is_a_validation_error() {
        let text = MINIMAL.replace("[[1, 2], [8, 9]]", "[[-1, 2], [8, 9]]");
        assert!(matches!(parse_config_str(&text, "inline"), Err(BenchError::Validation(_))));
    }

    #[test]
    fn unequal_intervals_rejected_for_two_step_methods() {
        let text = MINIMAL.replace("[8, 9]", "[8, 9.5]");
        let cfg = parse_config_str(&text, "inline").unwrap();
        assert!(matches!(cfg.validate(), Err(BenchError::Validation(_))));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_config_str("{\n  \"methods\": [,]\n}", "cfg.json").unwrap_err();
        match err {
            BenchError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_config_str("{", "x").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn missing_csv_is_reported_at_parse_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        fs::write(
            &p,
            r#"{"problem": {"type": "quadratic", "eigs_csv": "nope.csv"}, "methods": ["phb"]}"#,
        )
        .unwrap();
        let err = parse_config_with_seed(&p, None).unwrap_err();
        assert!(matches!(err, BenchError::MissingFile { .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn seed_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        fs::write(&p, MINIMAL).unwrap();
        let cfg = parse_config_with_seed(&p, Some("99")).unwrap();
        assert_eq!(cfg.problem.seed(), 99);
        assert!(parse_config_with_seed(&p, Some("x")).is_err());
    }

    #[test]
    fn unknown_method_rejected() {
        let text = MINIMAL.replace("\"hb2\"", "\"adam\"");
        let cfg = parse_config_str(&text, "inline").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn log_value_formatting() {
        assert_eq!(format_log_value(0.0), "1.000000000000e0");
        assert_eq!(format_log_value(f64::NEG_INFINITY), "0");
        assert_eq!(format_log_value(-1000.0 * std::f64::consts::LN_10), "1.000000000000e-1000");
        let s = format_log_value(-800.0);
        assert!(s.ends_with("e-348"), "{s}");
    }

    #[test]
    fn eigenvalue_generation_covers_endpoints() {
        let spec = SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap();
        let e = spectrum_eigenvalues(&spec, 200, 1);
        assert_eq!(e.len(), 200);
        assert_eq!(&e[..4], &[1.0, 2.0, 8.0, 9.0]);
        assert!(e.iter().all(|x| spec.contains(*x)));
    }

    #[test]
    fn experiment_writes_reproducible_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{
            "problem": {"type": "quadratic", "spectrum": [[1, 2], [8, 9]], "dim": 30, "seed": 5},
            "methods": ["gd", "phb", "hb2", "hb3", "cheby", "cheby2"],
            "T": 400, "burn_in": 100, "jobs": 3, "lp_points": 400,
            "heatmap": {"grid": 12}
        }"#;
        let mut cfg = parse_config_str(text, "inline").unwrap();
        cfg.output_dir = dir.path().join("a");
        let a = run_experiment(&cfg).unwrap();
        // the optimal cubic link polynomial of this set has no real 3-cycle
        assert_eq!(a.failures.len(), 1, "{:?}", a.failures);
        assert_eq!(a.failures[0].method, "hb3");
        assert!(a.failures[0].error.contains("no step-size cycle"));
        assert_eq!(a.summary.len(), 5);
        assert!(cfg.output_dir.join("trace_cheby2.csv").is_file());
        cfg.output_dir = dir.path().join("b");
        cfg.jobs = 1;
        let b = run_experiment(&cfg).unwrap();
        for (fa, fb) in a.files.iter().zip(&b.files) {
            assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
        }
        let hb2 = a.summary.iter().find(|r| r.method == "hb2").unwrap();
        let rate: f64 = hb2.rate_empirical.parse().unwrap();
        assert!((rate - 1.0 / 7f64.sqrt()).abs() < 0.02);
        let phb = a.summary.iter().find(|r| r.method == "phb").unwrap();
        let rate: f64 = phb.rate_empirical.parse().unwrap();
        assert!((rate - 0.5).abs() < 0.02);
        // theory column is a pure recomputation
        let spec = SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap();
        let p = CycleParams::new(vec![4.0 / 7.0, 1.0 / 7.0], 1.0 / 7.0).unwrap();
        assert!((hb2.rate_theory - rate_report(&p, &spec).unwrap().rate_factor).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[1.0, 1.5, 2.0, 9.0], 4);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 4);
        assert_eq!(h[3].2, 1);
    }
}
