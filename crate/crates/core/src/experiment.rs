//! Replicated simulation studies: configuration, per-replicate fitting and
//! selection, aggregation, and the study's output files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineSpec;
use crate::datagen::{simulate_dataset, CovariateDesign, DatagenError, ReplicateSeedPlan, SimulationScenario, TruncationLaw};
use crate::domain::{Dataset, RegressionCoefficients, Transition};
use crate::estimation::{bernstein_supports, bic_degree_select, fit_unpenalized, BaselineMode, BicSelection, EstimationError, FitConfig, FitResult};
use crate::likelihood::{LikelihoodOptions, TruncationConvention};
use crate::metrics::{aggregate, AggregateReport, GroupLayout, ReplicateMetrics};
use crate::quadrature::QuadratureRule;
use crate::selection::{default_lambda_grid, gcv_select, log_grid, PenaltyConfig, PenaltyKind, SelectionProblem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Bar,
    Lasso,
    Alasso,
    Oracle,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bar => "BAR",
            Method::Lasso => "LASSO",
            Method::Alasso => "ALASSO",
            Method::Oracle => "Oracle",
        }
    }

    pub fn penalty(self) -> Option<PenaltyKind> {
        match self {
            Method::Bar => Some(PenaltyKind::Bar),
            Method::Lasso => Some(PenaltyKind::Lasso),
            Method::Alasso => Some(PenaltyKind::Alasso),
            Method::Oracle => None,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bar" => Ok(Method::Bar),
            "lasso" => Ok(Method::Lasso),
            "alasso" => Ok(Method::Alasso),
            "oracle" => Ok(Method::Oracle),
            other => Err(format!("unknown method '{other}' (expected bar, lasso, alasso or oracle)")),
        }
    }
}

pub fn parse_truncation(s: &str) -> Result<TruncationConvention, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gap" => Ok(TruncationConvention::GapTime),
        "calendar" => Ok(TruncationConvention::CalendarTime),
        "first-event" => Ok(TruncationConvention::FirstEvent),
        other => Err(format!("unknown truncation convention '{other}' (expected gap, calendar or first-event)")),
    }
}

/// Parses `m1,m2,m3`.
pub fn parse_degrees(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("degrees '{s}' must have three comma-separated entries"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("degree '{p}' is not a nonnegative integer"))?;
    }
    Ok(out)
}

/// Parses `m1,m2,m3;m1,m2,m3;...`.
pub fn parse_candidates(s: &str) -> Result<Vec<[usize; 3]>, String> {
    let c: Vec<[usize; 3]> = s.split(';').filter(|t| !t.trim().is_empty()).map(parse_degrees).collect::<Result<_, _>>()?;
    if c.is_empty() {
        return Err("candidate list is empty".into());
    }
    Ok(c)
}

pub const DEFAULT_CANDIDATES: [[usize; 3]; 5] = [[2, 2, 3], [3, 3, 3], [4, 4, 4], [5, 5, 6], [6, 6, 6]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DegreeChoice {
    Fixed([usize; 3]),
    Bic(Vec<[usize; 3]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    Weibull,
    Bernstein,
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weibull" => Ok(BaselineKind::Weibull),
            "bernstein" => Ok(BaselineKind::Bernstein),
            other => Err(format!("unknown baseline '{other}' (expected weibull or bernstein)")),
        }
    }
}

/// How the unpenalized model is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub baseline: BaselineKind,
    pub degrees: DegreeChoice,
    pub truncation: TruncationConvention,
}

impl FitSettings {
    pub fn weibull() -> Self {
        Self {
            baseline: BaselineKind::Weibull,
            degrees: DegreeChoice::Fixed([0; 3]),
            truncation: TruncationConvention::GapTime,
        }
    }

    pub fn bernstein(degrees: [usize; 3]) -> Self {
        Self {
            baseline: BaselineKind::Bernstein,
            degrees: DegreeChoice::Fixed(degrees),
            truncation: TruncationConvention::GapTime,
        }
    }

    pub fn likelihood(&self) -> LikelihoodOptions {
        LikelihoodOptions {
            truncation: self.truncation,
            ..Default::default()
        }
    }

    fn config(&self, mode: BaselineMode) -> FitConfig {
        let mut c = FitConfig::new(mode);
        c.likelihood = self.likelihood();
        c
    }

    /// Fits the full model; with BIC degrees also returns the table.
    pub fn fit(&self, data: &Dataset) -> Result<(FitResult, Option<BicSelection>), EstimationError> {
        match (&self.baseline, &self.degrees) {
            (BaselineKind::Weibull, _) => Ok((fit_unpenalized(data, &self.config(BaselineMode::Weibull))?, None)),
            (BaselineKind::Bernstein, DegreeChoice::Fixed(d)) => {
                Ok((fit_unpenalized(data, &self.config(BaselineMode::Bernstein { degrees: *d }))?, None))
            }
            (BaselineKind::Bernstein, DegreeChoice::Bic(c)) => {
                let sel = bic_degree_select(data, c, &self.config(BaselineMode::Bernstein { degrees: c[0] }))?;
                Ok((sel.best_fit.clone(), Some(sel)))
            }
        }
    }

    /// Refit on a column subset, reusing degrees chosen for the full model.
    pub fn refit(&self, data: &Dataset, degrees: Option<[usize; 3]>) -> Result<FitResult, EstimationError> {
        let mode = match (self.baseline, degrees, &self.degrees) {
            (BaselineKind::Weibull, _, _) => BaselineMode::Weibull,
            (BaselineKind::Bernstein, Some(d), _) => BaselineMode::Bernstein { degrees: d },
            (BaselineKind::Bernstein, None, DegreeChoice::Fixed(d)) => BaselineMode::Bernstein { degrees: *d },
            (BaselineKind::Bernstein, None, DegreeChoice::Bic(c)) => BaselineMode::Bernstein { degrees: c[0] },
        };
        fit_unpenalized(data, &self.config(mode))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        log_grid(self.min, self.max, self.count)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.min > 0.0) || !(self.max >= self.min) || !self.max.is_finite() || self.count == 0 {
            return Err(format!(
                "λ grid needs 0 < min <= max and count >= 1 (got {}, {}, {})",
                self.min, self.max, self.count
            ));
        }
        Ok(())
    }
}

/// Default grid: 30 points over `[1e-3, 1e2] * n / 100`.
pub fn default_grid(n: usize) -> Vec<f64> {
    default_lambda_grid(n, 30)
}

/// Per-column sample standard deviations (1 for constant columns), stacked.
pub fn column_scales(data: &Dataset) -> Vec<f64> {
    let n = data.len() as f64;
    let mut out = Vec::with_capacity(data.p());
    for k in 0..3 {
        for j in 0..data.dims()[k] {
            let col: Vec<f64> = data.records().iter().map(|r| r.covariates(k)[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = if n > 1.0 {
                col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            out.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
    }
    out
}

/// Flat key-value study configuration (TOML syntax, no tables).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub design: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub censoring: f64,
    #[serde(default = "default_true")]
    pub truncation: bool,
    pub methods: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    pub degrees: Option<String>,
    pub candidates: Option<String>,
    pub likelihood_truncation: Option<String>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_count: Option<usize>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn default_true() -> bool {
    true
}

fn default_baseline() -> String {
    "bernstein".into()
}

fn default_curve_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: SimulationScenario,
    pub censoring_target: f64,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub fit: FitSettings,
    pub lambdas: Vec<f64>,
    pub standardize: bool,
    pub curve_points: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_file(f: ExperimentFile) -> Result<Self, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        let methods: Vec<Method> = f.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>().map_err(invalid)?;
        if methods.is_empty() {
            return Err(invalid("methods must be nonempty".into()));
        }
        if f.replications < 1 {
            return Err(invalid("replications must be at least 1".into()));
        }
        if !(f.censoring > 0.0 && f.censoring < 1.0) {
            return Err(invalid(format!("censoring target {} must lie in (0, 1)", f.censoring)));
        }
        let mut scenario = match f.design.trim().to_ascii_lowercase().as_str() {
            "ar1" => {
                let mut s = SimulationScenario::diverging(f.n, f.seed);
                if let Some(rho) = f.rho {
                    s.design = CovariateDesign::Ar1 { d: s.design.dim(), rho };
                }
                s
            }
            "grouped" => SimulationScenario::grouped(f.n, f.rho.unwrap_or(0.8), f.seed),
            other => return Err(invalid(format!("unknown design '{other}' (expected ar1 or grouped)"))),
        };
        scenario.validate()?;
        scenario = scenario.calibrated(f.censoring)?;
        if !f.truncation {
            scenario.truncation = TruncationLaw::None;
        }
        let baseline: BaselineKind = f.baseline.parse().map_err(invalid)?;
        let degrees = match (f.degrees.as_deref().map(str::trim), &f.candidates) {
            (Some("bic"), Some(c)) => DegreeChoice::Bic(parse_candidates(c).map_err(invalid)?),
            (Some("bic"), None) => DegreeChoice::Bic(DEFAULT_CANDIDATES.to_vec()),
            (Some(d), _) => DegreeChoice::Fixed(parse_degrees(d).map_err(invalid)?),
            (None, _) => DegreeChoice::Fixed([2, 2, 3]),
        };
        let truncation = match &f.likelihood_truncation {
            Some(s) => parse_truncation(s).map_err(invalid)?,
            None => TruncationConvention::GapTime,
        };
        let lambdas = match (f.lambda_min, f.lambda_max, f.lambda_count) {
            (None, None, None) => default_grid(f.n),
            (lo, hi, count) => {
                let d = default_grid(f.n);
                let g = LambdaGrid {
                    min: lo.unwrap_or(d[0]),
                    max: hi.unwrap_or(d[d.len() - 1]),
                    count: count.unwrap_or(30),
                };
                g.validate().map_err(invalid)?;
                g.values()
            }
        };
        if f.curve_points < 2 {
            return Err(invalid("curve_points must be at least 2".into()));
        }
        Ok(Self {
            scenario,
            censoring_target: f.censoring,
            methods,
            replications: f.replications,
            fit: FitSettings {
                baseline,
                degrees,
                truncation,
            },
            lambdas,
            standardize: f.standardize,
            curve_points: f.curve_points,
        })
    }

    pub fn layout(&self) -> Option<GroupLayout> {
        matches!(self.scenario.design, CovariateDesign::Grouped { .. }).then(GroupLayout::grouped_design)
    }

    /// Scenario of replicate `index`, seeded from the master seed.
    pub fn replicate_scenario(&self, index: usize) -> SimulationScenario {
        let mut s = self.scenario.clone();
        s.seed = ReplicateSeedPlan::new(self.scenario.seed).child_seed(index as u64);
        s
    }
}

/// Estimates of one replicate that feed the curve file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateSuccess {
    pub metrics: Vec<ReplicateMetrics>,
    pub baseline: BaselineSpec,
    pub supports: [f64; 3],
    pub censoring_rate: f64,
    pub degrees: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<ReplicateSuccess, String>,
}

/// Penalized (or oracle) estimate of the stacked coefficients for one method.
pub fn estimate_method(
    method: Method,
    data: &Dataset,
    fit: &FitResult,
    settings: &FitSettings,
    lambdas: &[f64],
    degrees: Option<[usize; 3]>,
    true_support: Option<&[Vec<usize>; 3]>,
) -> Result<(Vec<f64>, Option<f64>), String> {
    match method.penalty() {
        Some(kind) => {
            let problem = SelectionProblem::new(data, fit, &settings.likelihood()).map_err(|e| e.to_string())?;
            let cfg = PenaltyConfig::new(kind, lambdas.to_vec());
            let sel = gcv_select(&problem, &cfg).map_err(|e| e.to_string())?;
            Ok((sel.best().beta.clone(), Some(sel.best_lambda)))
        }
        None => {
            let support = true_support.ok_or("oracle needs the true support")?;
            let reduced = data.select_columns(support).map_err(|e| e.to_string())?;
            let refit = settings.refit(&reduced, degrees).map_err(|e| e.to_string())?;
            let mut full = RegressionCoefficients::zeros(data.dims());
            for k in 0..3 {
                for (pos, &j) in support[k].iter().enumerate() {
                    full.blocks[k][j] = refit.params.beta.blocks[k][pos];
                }
            }
            Ok((full.stacked(), None))
        }
    }
}

pub fn run_replicate(cfg: &ExperimentConfig, index: usize) -> Result<ReplicateSuccess, String> {
    let scenario = cfg.replicate_scenario(index);
    let data = simulate_dataset(&scenario).map_err(|e| e.to_string())?;
    let scales = if cfg.standardize { column_scales(&data) } else { vec![1.0; data.p()] };
    let work = if cfg.standardize { data.standardized() } else { data.clone() };
    let (fit, bic) = cfg.fit.fit(&work).map_err(|e| format!("unpenalized fit: {e}"))?;
    if !fit.converged {
        log::warn!("replicate {index}: unpenalized fit stopped with gradient norm {:.3e}", fit.gradient_norm);
    }
    let degrees = bic.as_ref().map(|b| b.degrees);
    let truth = scenario.beta.stacked();
    let support = scenario.true_support();
    let eps = PenaltyConfig::new(PenaltyKind::Bar, vec![1.0]).zero_threshold;
    let layout = cfg.layout();
    let mut metrics = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let (beta_std, lambda) = estimate_method(m, &work, &fit, &cfg.fit, &cfg.lambdas, degrees, Some(&support))
            .map_err(|e| format!("{}: {e}", m.label()))?;
        let beta: Vec<f64> = beta_std.iter().zip(&scales).map(|(b, s)| b / s).collect();
        let mut rm = ReplicateMetrics::evaluate(index, m.label(), &beta, &truth, &data, eps, layout.as_ref())
            .map_err(|e| e.to_string())?;
        rm.lambda = lambda;
        metrics.push(rm);
    }
    Ok(ReplicateSuccess {
        metrics,
        baseline: fit.params.nuisance.baseline.clone(),
        supports: bernstein_supports(&data, cfg.fit.truncation),
        censoring_rate: crate::datagen::censoring_rate(&data),
        degrees,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub transition: usize,
    pub t: f64,
    pub true_hazard: f64,
    pub est_hazard: f64,
    pub true_cumhaz: f64,
    pub est_cumhaz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub outcomes: Vec<ReplicateOutcome>,
    pub aggregates: Vec<AggregateReport>,
    pub curves: Vec<CurveRow>,
    pub failures: usize,
    pub replications: usize,
}

impl ExperimentResults {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / self.replications as f64
    }

    pub fn aggregate_for(&self, method: Method) -> Option<&AggregateReport> {
        self.aggregates.iter().find(|a| a.method == method.label())
    }
}

/// Runs all replicates on a pool of `jobs` threads (all cores when `None`)
/// and merges the results in replicate order.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResults, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| e.to_string())?;
    let plan = ReplicateSeedPlan::new(cfg.scenario.seed);
    let mut outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| ReplicateOutcome {
                index: i,
                seed: plan.child_seed(i as u64),
                result: run_replicate(cfg, i),
            })
            .collect()
    });
    outcomes.sort_by_key(|o| o.index);
    let mut failures = 0;
    for o in &outcomes {
        if let Err(e) = &o.result {
            failures += 1;
            log::warn!("replicate {} failed: {e}", o.index);
        }
    }
    let mut aggregates = Vec::new();
    for &m in &cfg.methods {
        let reps: Vec<ReplicateMetrics> = outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .filter_map(|s| s.metrics.iter().find(|r| r.method == m.label()).cloned())
            .collect();
        if let Ok(a) = aggregate(&reps) {
            aggregates.push(a);
        }
    }
    let curves = hazard_curves(cfg, &outcomes);
    Ok(ExperimentResults {
        outcomes,
        aggregates,
        curves,
        failures,
        replications: cfg.replications,
    })
}

/// Pointwise means of the estimated baseline curves over successful
/// replicates next to the true Weibull curves, on a uniform grid that stays
/// inside every replicate's support.
fn hazard_curves(cfg: &ExperimentConfig, outcomes: &[ReplicateOutcome]) -> Vec<CurveRow> {
    let ok: Vec<&ReplicateSuccess> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    if ok.is_empty() {
        return Vec::new();
    }
    let quad = QuadratureRule::default();
    let mut rows = Vec::new();
    for k in Transition::ALL {
        let upper = ok.iter().map(|s| s.supports[k.index()]).fold(f64::INFINITY, f64::min);
        let truth = cfg.scenario.weibull.transitions[k.index()];
        for i in 1..=cfg.curve_points {
            let t = upper * i as f64 / cfg.curve_points as f64;
            let (mut h, mut c, mut m) = (0.0, 0.0, 0usize);
            for s in &ok {
                if let (Ok(hv), Ok(cv)) = (s.baseline.hazard(k, t), s.baseline.cumulative_hazard(k, t, &quad)) {
                    h += hv;
                    c += cv;
                    m += 1;
                }
            }
            let (h, c) = if m > 0 { (h / m as f64, c / m as f64) } else { (f64::NAN, f64::NAN) };
            rows.push(CurveRow {
                transition: k.index() + 1,
                t,
                true_hazard: truth.hazard(t).unwrap_or(f64::NAN),
                est_hazard: h,
                true_cumhaz: truth.cumulative(t).unwrap_or(f64::NAN),
                est_cumhaz: c,
            });
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_replicates_csv<W: std::io::Write>(results: &ExperimentResults, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replicate", "seed", "method", "status", "tp", "fp", "mcv", "mse", "mse1", "mse2", "mse3", "ges", "lambda",
        "censoring_rate", "error",
    ])?;
    for o in &results.outcomes {
        match &o.result {
            Ok(s) => {
                for m in &s.metrics {
                    out.write_record([
                        o.index.to_string(),
                        o.seed.to_string(),
                        m.method.clone(),
                        "ok".into(),
                        m.tp.to_string(),
                        m.fp.to_string(),
                        m.mcv.to_string(),
                        m.mse.to_string(),
                        m.mse_per_transition[0].to_string(),
                        m.mse_per_transition[1].to_string(),
                        m.mse_per_transition[2].to_string(),
                        opt(m.ges),
                        opt(m.lambda),
                        s.censoring_rate.to_string(),
                        String::new(),
                    ])?;
                }
            }
            Err(e) => {
                let mut row = vec![o.index.to_string(), o.seed.to_string(), String::new(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(e.clone());
                out.write_record(&row)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: std::io::Write>(results: &ExperimentResults, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "replicates", "failures", "tp", "fp", "mcv", "mmse", "sd", "ges"])?;
    for a in &results.aggregates {
        out.write_record([
            a.method.clone(),
            a.replicates.to_string(),
            results.failures.to_string(),
            a.mean_tp.to_string(),
            a.mean_fp.to_string(),
            a.mean_mcv.to_string(),
            a.mmse.to_string(),
            a.sd_mse.to_string(),
            opt(a.mean_ges),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn summary_table(results: &ExperimentResults) -> String {
    let with_ges = results.aggregates.iter().any(|a| a.mean_ges.is_some());
    let mut s = String::new();
    let _ = write!(s, "{:<8} {:>7} {:>7} {:>7} {:>9} {:>9}", "Method", "TP", "FP", "MCV", "MMSE", "SD");
    if with_ges {
        let _ = write!(s, " {:>7}", "GES");
    }
    s.push('\n');
    for a in &results.aggregates {
        let _ = write!(
            s,
            "{:<8} {:>7.2} {:>7.2} {:>7.2} {:>9.4} {:>9.4}",
            a.method, a.mean_tp, a.mean_fp, a.mean_mcv, a.mmse, a.sd_mse
        );
        if let Some(g) = a.mean_ges {
            let _ = write!(s, " {:>7.3}", g);
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "failed replicates: {} of {} (excluded from the aggregates)",
        results.failures, results.replications
    );
    s
}

pub fn write_frequencies_csv<W: std::io::Write>(results: &ExperimentResults, dims: [usize; 3], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "transition", "covariate", "frequency"])?;
    for a in &results.aggregates {
        let mut pos = 0;
        for (k, d) in dims.iter().enumerate() {
            for j in 0..*d {
                out.write_record([
                    a.method.clone(),
                    (k + 1).to_string(),
                    (j + 1).to_string(),
                    a.selection_frequency[pos].to_string(),
                ])?;
                pos += 1;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_curves_csv<W: std::io::Write>(rows: &[CurveRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["transition", "t", "true_hazard", "est_hazard", "true_cumhaz", "est_cumhaz"])?;
    }
    out.flush()?;
    Ok(())
}
