//! Unpenalized maximum-likelihood fitting of all parameters, and BIC
//! selection of Bernstein degrees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineError, BaselineSpec, BernsteinBaseline, BernsteinBaselineSet, WeibullBaselineSet, WeibullParams};
use crate::domain::{validate_dataset, Dataset, ModelParameters, NuisanceParameters, RegressionCoefficients, Severity};
use crate::likelihood::{log_likelihood_full_grad, LikelihoodError, LikelihoodOptions, TruncationConvention};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("dataset has {n} records but the model has {params} parameters")]
    TooFewSubjects { n: usize, params: usize },
    #[error("dataset is invalid: {0}")]
    InvalidData(String),
    #[error("likelihood evaluation failed at the initial point: {0}")]
    Likelihood(#[from] LikelihoodError),
    #[error("baseline construction failed: {0}")]
    Baseline(#[from] BaselineError),
    #[error("no candidate degree triple could be fitted")]
    AllCandidatesFailed,
    #[error("empty candidate list")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMode {
    Weibull,
    Bernstein { degrees: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialValues {
    /// Zero coefficients, γ = 0.5 and crude event-rate baselines.
    CrudeRates,
    Given(ModelParameters),
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Max-norm of the log-likelihood gradient in working coordinates.
    pub gradient_tolerance: f64,
    /// Stop (unconverged) once steps stall below this max-norm.
    pub step_tolerance: f64,
    pub baseline: BaselineMode,
    pub likelihood: LikelihoodOptions,
    pub initial: InitialValues,
}

impl FitConfig {
    pub fn new(baseline: BaselineMode) -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-5,
            step_tolerance: 1e-12,
            baseline,
            likelihood: LikelihoodOptions::default(),
            initial: InitialValues::CrudeRates,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParameters,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Crude per-transition event rates used as starting hazards.
fn crude_rates(data: &Dataset) -> [f64; 3] {
    let mut events = [0.0f64; 3];
    let mut exposure = [0.0f64; 3];
    for r in data.records() {
        let healthy = r.y2 - r.l;
        exposure[0] += healthy;
        exposure[1] += healthy;
        if r.delta1 {
            events[0] += 1.0;
            exposure[2] += r.sojourn();
            if r.delta2 {
                events[2] += 1.0;
            }
        } else if r.delta2 {
            events[1] += 1.0;
        }
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let e = events[k].max(0.5);
        let x = if exposure[k] > 0.0 { exposure[k] } else { 1.0 };
        out[k] = e / x;
    }
    out
}

/// Bernstein supports `[0, u_j]`: transitions 1–2 cover every hazard and
/// cumulative-hazard argument, transition 3 the observed sojourns.
pub fn bernstein_supports(data: &Dataset, truncation: TruncationConvention) -> [f64; 3] {
    let mut upper = [0.0f64; 3];
    for r in data.records() {
        let healthy = match truncation {
            TruncationConvention::GapTime => (r.y2 - r.l).max(r.y1),
            TruncationConvention::CalendarTime => r.y2,
            TruncationConvention::FirstEvent => r.y1,
        };
        upper[0] = upper[0].max(healthy);
        upper[1] = upper[1].max(healthy);
        if r.delta1 {
            upper[2] = upper[2].max(r.sojourn());
        }
    }
    if !(upper[2] > 0.0) {
        upper[2] = upper[0].max(1.0);
    }
    for u in upper.iter_mut() {
        if !(*u > 0.0) {
            *u = 1.0;
        }
    }
    upper
}

pub fn initial_parameters(data: &Dataset, cfg: &FitConfig) -> Result<ModelParameters, EstimationError> {
    let rates = crude_rates(data);
    let baseline = match cfg.baseline {
        BaselineMode::Weibull => BaselineSpec::Weibull(WeibullBaselineSet {
            transitions: [0, 1, 2].map(|k| WeibullParams::new(0.0, rates[k].ln())),
        }),
        BaselineMode::Bernstein { degrees } => {
            let upper = bernstein_supports(data, cfg.likelihood.truncation);
            let mk = |k: usize| BernsteinBaseline::constant(degrees[k], rates[k].ln(), 0.0, upper[k]);
            BaselineSpec::Bernstein(BernsteinBaselineSet {
                transitions: [mk(0)?, mk(1)?, mk(2)?],
            })
        }
    };
    Ok(ModelParameters {
        beta: RegressionCoefficients::zeros(data.dims()),
        nuisance: NuisanceParameters::new(0.5, baseline).expect("0.5 is a valid frailty variance"),
    })
}

fn to_working(params: &ModelParameters) -> Vec<f64> {
    let mut theta = params.beta.stacked();
    theta.push(params.nuisance.gamma().ln());
    theta.extend(params.nuisance.baseline.params());
    theta
}

fn from_working(theta: &[f64], template: &ModelParameters) -> Option<ModelParameters> {
    let dims = template.beta.dims();
    let p: usize = dims.iter().sum();
    let beta = RegressionCoefficients::from_stacked(&theta[..p], dims).ok()?;
    let gamma = theta[p].exp();
    let baseline = template.nuisance.baseline.with_params(&theta[p + 1..]);
    let nuisance = NuisanceParameters::new(gamma, baseline).ok()?;
    Some(ModelParameters { beta, nuisance })
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest allowed step (max-norm, working coordinates) per iteration.
const MAX_STEP: f64 = 2.0;

/// Maximizes the log-likelihood over all parameters with BFGS and a
/// backtracking Armijo line search on the unconstrained working vector.
pub fn fit_unpenalized(data: &Dataset, cfg: &FitConfig) -> Result<FitResult, EstimationError> {
    let errors: Vec<String> = validate_dataset(data)
        .into_iter()
        .filter(|v| v.severity == Severity::Error)
        .map(|v| v.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(EstimationError::InvalidData(errors.join("; ")));
    }
    let template = match &cfg.initial {
        InitialValues::CrudeRates => initial_parameters(data, cfg)?,
        InitialValues::Given(p) => p.clone(),
    };
    let dim = data.p() + 1 + template.nuisance.baseline.total_param_count();
    if data.len() <= dim {
        return Err(EstimationError::TooFewSubjects {
            n: data.len(),
            params: dim,
        });
    }

    // negative log-likelihood and its gradient
    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let params = from_working(theta, &template)?;
        let (v, g) = log_likelihood_full_grad(&params, data, &cfg.likelihood).ok()?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((-v, g.into_iter().map(|x| -x).collect()))
    };

    let mut theta = to_working(&template);
    let (mut f, mut g) = match objective(&theta) {
        Some(fg) => fg,
        None => {
            let params = from_working(&theta, &template).expect("template is valid");
            log_likelihood_full_grad(&params, data, &cfg.likelihood)?;
            return Err(EstimationError::Likelihood(LikelihoodError::NonFiniteParameter));
        }
    };
    let n = theta.len();
    // inverse-Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut scaled = false;
    let mut iterations = 0;
    let mut converged = max_norm(&g) < cfg.gradient_tolerance;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let mut dir = mat_vec(&hinv, &g).into_iter().map(|x| -x).collect::<Vec<_>>();
        if dot(&dir, &g) >= 0.0 {
            hinv = identity(n);
            dir = g.iter().map(|x| -x).collect();
        }
        let dn = max_norm(&dir);
        if dn > MAX_STEP {
            dir.iter_mut().for_each(|d| *d *= MAX_STEP / dn);
        }
        let slope = dot(&dir, &g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            if let Some((ft, gt)) = objective(&trial) {
                if ft <= f + 1e-4 * t * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            if scaled {
                // restart from steepest descent once before giving up
                hinv = identity(n);
                scaled = false;
                continue;
            }
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let step_norm = max_norm(&s);
        theta = trial;
        f = ft;
        g = gt;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let scale = sy / dot(&y, &y);
                hinv = identity(n);
                hinv.iter_mut().for_each(|h| *h *= scale);
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        converged = max_norm(&g) < cfg.gradient_tolerance;
        if step_norm < cfg.step_tolerance {
            break;
        }
    }

    let params = from_working(&theta, &template).expect("accepted iterate is valid");
    Ok(FitResult {
        params,
        log_likelihood: -f,
        converged,
        iterations,
        gradient_norm: max_norm(&g),
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicRow {
    pub degrees: [usize; 3],
    pub bic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicSelection {
    pub degrees: [usize; 3],
    pub table: Vec<BicRow>,
    pub best_fit: FitResult,
}

/// `-2ℓ + log(n) {(p + 1) + Σ (m_j + 1)}`.
pub fn bic_value(log_likelihood: f64, n: usize, p: usize, degrees: [usize; 3]) -> f64 {
    let dof = (p + 1) as f64 + degrees.iter().map(|m| (m + 1) as f64).sum::<f64>();
    -2.0 * log_likelihood + (n as f64).ln() * dof
}

pub fn bic_degree_select(data: &Dataset, candidates: &[[usize; 3]], cfg: &FitConfig) -> Result<BicSelection, EstimationError> {
    if candidates.is_empty() {
        return Err(EstimationError::NoCandidates);
    }
    let fits: Vec<([usize; 3], Result<FitResult, EstimationError>)> = candidates
        .par_iter()
        .map(|&degrees| {
            let mut c = cfg.clone();
            c.baseline = BaselineMode::Bernstein { degrees };
            (degrees, fit_unpenalized(data, &c))
        })
        .collect();
    let mut table = Vec::with_capacity(fits.len());
    let mut best: Option<(f64, usize, usize)> = None;
    let mut best_fit = None;
    for (i, (degrees, fit)) in fits.into_iter().enumerate() {
        match fit {
            Ok(fit) => {
                let bic = bic_value(fit.log_likelihood, data.len(), data.p(), degrees);
                let total: usize = degrees.iter().sum();
                let better = match best {
                    None => true,
                    Some((b, t, _)) => bic < b || (bic == b && total < t),
                };
                if better {
                    best = Some((bic, total, i));
                    best_fit = Some(fit.clone());
                }
                table.push(BicRow {
                    degrees,
                    bic: Some(bic),
                    log_likelihood: Some(fit.log_likelihood),
                    converged: fit.converged,
                    error: None,
                });
            }
            Err(e) => table.push(BicRow {
                degrees,
                bic: None,
                log_likelihood: None,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let (_, _, idx) = best.ok_or(EstimationError::AllCandidatesFailed)?;
    Ok(BicSelection {
        degrees: table[idx].degrees,
        table,
        best_fit: best_fit.expect("best candidate has a fit"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bic_penalty_is_monotone_in_degrees() {
        let a = bic_value(-100.0, 200, 6, [2, 2, 3]);
        let b = bic_value(-100.0, 200, 6, [3, 3, 3]);
        assert!(a < b);
        let expected = 200.0 + (200f64).ln() * (7.0 + 3.0 + 3.0 + 4.0);
        assert!((a - expected).abs() < 1e-12);
    }

    fn simulated(n: usize, seed: u64) -> Dataset {
        let scn = crate::datagen::SimulationScenario::diverging(n, seed).calibrated(0.3).unwrap();
        crate::datagen::simulate_dataset(&scn).unwrap()
    }

    #[test]
    fn weibull_fit_recovers_truth_when_correctly_specified() {
        let mut scn = crate::datagen::SimulationScenario::diverging(1500, 11).calibrated(0.3).unwrap();
        scn.truncation = crate::datagen::TruncationLaw::None;
        let data = crate::datagen::simulate_dataset(&scn).unwrap();
        let mut cfg = FitConfig::new(BaselineMode::Weibull);
        cfg.likelihood.truncation = TruncationConvention::FirstEvent;
        let fit = fit_unpenalized(&data, &cfg).unwrap();
        assert!(fit.converged, "gradient {}", fit.gradient_norm);
        let truth = scn.beta.stacked();
        let est = fit.params.beta.stacked();
        let worst = truth.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.3, "max coefficient error {worst}");
        let g = fit.params.nuisance.gamma();
        assert!((g - 0.25).abs() < 0.1, "gamma {g}");
    }

    #[test]
    fn refit_from_optimum_stops_quickly() {
        let data = simulated(400, 12);
        let mut cfg = FitConfig::new(BaselineMode::Bernstein { degrees: [3, 3, 3] });
        let first = fit_unpenalized(&data, &cfg).unwrap();
        assert!(first.converged);
        cfg.initial = InitialValues::Given(first.params.clone());
        let again = fit_unpenalized(&data, &cfg).unwrap();
        assert!(again.iterations <= 2);
        assert!((again.log_likelihood - first.log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn fit_improves_on_start() {
        let data = simulated(300, 13);
        let cfg = FitConfig::new(BaselineMode::Weibull);
        let start = initial_parameters(&data, &cfg).unwrap();
        let l0 = crate::likelihood::log_likelihood_with(&start, &data, &cfg.likelihood).unwrap();
        let fit = fit_unpenalized(&data, &cfg).unwrap();
        assert!(fit.log_likelihood > l0);
    }

    #[test]
    fn too_few_subjects_rejected() {
        let data = simulated(10, 14);
        let err = fit_unpenalized(&data, &FitConfig::new(BaselineMode::Weibull)).unwrap_err();
        assert!(matches!(err, EstimationError::TooFewSubjects { .. }));
    }

    #[test]
    fn bfgs_update_satisfies_secant_condition() {
        let mut h = identity(3);
        let s = [0.3, -0.1, 0.2];
        let y = [0.5, 0.1, 0.4];
        let sy = dot(&s, &y);
        bfgs_update(&mut h, &s, &y, sy);
        let hy = mat_vec(&h, &y);
        for i in 0..3 {
            assert!((hy[i] - s[i]).abs() < 1e-14);
        }
    }
}
