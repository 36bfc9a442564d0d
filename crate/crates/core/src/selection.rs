//! Penalized variable selection on the quadratic surrogate of the
//! log-likelihood: broken adaptive ridge (BAR), LASSO and adaptive LASSO,
//! with the tuning parameter chosen by generalized cross-validation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Dataset;
use crate::estimation::FitResult;
use crate::likelihood::{pseudo_data, BetaLikelihood, LikelihoodError, LikelihoodOptions, PseudoData};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("invalid penalty configuration: {0}")]
    InvalidConfig(String),
    #[error("reduced ridge system is singular")]
    Singular,
    #[error("deflated information matrix is singular")]
    SingularDeflation,
    #[error("every λ on the grid failed: {0}")]
    AllLambdasFailed(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyKind {
    Bar,
    Lasso,
    Alasso,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Bar, PenaltyKind::Lasso, PenaltyKind::Alasso];

    pub fn label(self) -> &'static str {
        match self {
            PenaltyKind::Bar => "BAR",
            PenaltyKind::Lasso => "LASSO",
            PenaltyKind::Alasso => "ALASSO",
        }
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bar" => Ok(PenaltyKind::Bar),
            "lasso" => Ok(PenaltyKind::Lasso),
            "alasso" => Ok(PenaltyKind::Alasso),
            other => Err(format!("unknown penalty '{other}' (expected bar, lasso or alasso)")),
        }
    }
}

/// When the pseudo-data `(X, W)` is rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RefreshPolicy {
    /// Rebuild at every iterate.
    #[default]
    EveryIteration,
    /// Keep the expansion at the unpenalized estimate.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambdas: Vec<f64>,
    pub alasso_exponent: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub zero_threshold: f64,
    pub refresh: RefreshPolicy,
}

/// Cap on adaptive weights when an unpenalized coefficient underflows.
const MAX_WEIGHT: f64 = 1e12;

impl PenaltyConfig {
    pub fn new(kind: PenaltyKind, lambdas: Vec<f64>) -> Self {
        Self {
            kind,
            lambdas,
            alasso_exponent: 1.0,
            max_iterations: 500,
            tolerance: 1e-7,
            zero_threshold: 1e-6,
            refresh: RefreshPolicy::EveryIteration,
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |m: &str| Err(SelectionError::InvalidConfig(m.to_string()));
        if self.lambdas.is_empty() {
            return bad("λ grid is empty");
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("λ values must be finite and nonnegative");
        }
        if !(self.alasso_exponent > 0.0) {
            return bad("adaptive exponent must be positive");
        }
        if !(self.zero_threshold > 0.0) || !(self.tolerance > 0.0) {
            return bad("thresholds must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be positive");
        }
        Ok(())
    }
}

/// `count` log-spaced values over `[1e-3, 1e2] * n / 100`.
pub fn default_lambda_grid(n: usize, count: usize) -> Vec<f64> {
    let scale = n as f64 / 100.0;
    log_grid(1e-3 * scale, 1e2 * scale, count)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedEstimate {
    /// Stacked coefficient vector; exact zeros outside the support.
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized negative log-likelihood at the estimate.
    pub objective: f64,
    pub log_likelihood: f64,
}

/// Log-likelihood at fixed nuisance parameters together with the
/// unpenalized estimate the penalized solvers start from.
pub struct SelectionProblem<'a> {
    pub likelihood: BetaLikelihood<'a>,
    pub beta_tilde: Vec<f64>,
}

impl<'a> SelectionProblem<'a> {
    pub fn new(data: &'a Dataset, fit: &FitResult, opts: &LikelihoodOptions) -> Result<Self, SelectionError> {
        Ok(Self {
            likelihood: BetaLikelihood::new(data, &fit.params.nuisance, opts)?,
            beta_tilde: fit.params.beta.stacked(),
        })
    }

    pub fn n(&self) -> usize {
        self.likelihood.data().len()
    }

    pub fn p(&self) -> usize {
        self.beta_tilde.len()
    }

    /// Pseudo-data of the second-order expansion at `beta`, plus ℓ(beta).
    pub fn surrogate(&self, beta: &[f64]) -> Result<(PseudoData, f64), SelectionError> {
        let (ll, grad, hess) = self.likelihood.evaluate(beta, true)?;
        Ok((pseudo_data(beta, &grad, &hess)?, ll))
    }

    /// Negative Hessian `J = -H` at `beta`.
    pub fn information(&self, beta: &[f64]) -> Result<DMatrix<f64>, SelectionError> {
        Ok(-self.likelihood.hessian(beta)?)
    }

    pub fn adaptive_weights(&self, exponent: f64) -> Vec<f64> {
        self.beta_tilde
            .iter()
            .map(|b| (1.0 / b.abs().powf(exponent)).min(MAX_WEIGHT))
            .collect()
    }

    pub fn weights(&self, cfg: &PenaltyConfig) -> Vec<f64> {
        match cfg.kind {
            PenaltyKind::Alasso => self.adaptive_weights(cfg.alasso_exponent),
            _ => vec![1.0; self.p()],
        }
    }
}

fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    match m.clone().cholesky() {
        Some(c) => Some(c.solve(rhs)),
        None => m.lu().solve(rhs),
    }
}

/// One BAR update: coordinates with `|beta_prev| < eps0` stay at zero, the
/// rest solve `(XᵀX + λD) b = XᵀW` with `D = diag(1 / beta_prev²)`.
pub fn bar_step(beta_prev: &[f64], pd: &PseudoData, lambda: f64, eps0: f64) -> Result<Vec<f64>, SelectionError> {
    let active: Vec<usize> = (0..beta_prev.len()).filter(|&j| beta_prev[j].abs() >= eps0).collect();
    let mut out = vec![0.0; beta_prev.len()];
    if active.is_empty() {
        return Ok(out);
    }
    let gram = pd.gram();
    let xtw = pd.xtw();
    let q = active.len();
    let mut m = DMatrix::zeros(q, q);
    let mut rhs = DVector::zeros(q);
    for (a, &i) in active.iter().enumerate() {
        rhs[a] = xtw[i];
        for (b, &j) in active.iter().enumerate() {
            m[(a, b)] = gram[(i, j)];
        }
        m[(a, a)] += lambda / (beta_prev[i] * beta_prev[i]);
    }
    let sol = solve_spd(m, &rhs).ok_or(SelectionError::Singular)?;
    for (a, &i) in active.iter().enumerate() {
        let v = sol[a];
        if !v.is_finite() {
            return Err(SelectionError::Singular);
        }
        out[i] = if v.abs() < eps0 { 0.0 } else { v };
    }
    Ok(out)
}

fn support_of(beta: &[f64]) -> Vec<usize> {
    (0..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// BAR iterations from the unpenalized estimate until the sup-norm change
/// falls below the tolerance. Returns the estimate and the zero-set sizes
/// of all iterates.
pub fn bar_solve_traced(
    problem: &SelectionProblem,
    lambda: f64,
    cfg: &PenaltyConfig,
) -> Result<(PenalizedEstimate, Vec<usize>), SelectionError> {
    let eps0 = cfg.zero_threshold;
    let mut beta: Vec<f64> = problem
        .beta_tilde
        .iter()
        .map(|&b| if b.abs() < eps0 { 0.0 } else { b })
        .collect();
    let mut trace = vec![beta.iter().filter(|b| **b == 0.0).count()];
    let fixed = match cfg.refresh {
        RefreshPolicy::Fixed => Some(problem.surrogate(&problem.beta_tilde)?.0),
        RefreshPolicy::EveryIteration => None,
    };
    let mut prev = beta.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let next = match &fixed {
            Some(pd) => bar_step(&beta, pd, lambda, eps0)?,
            None => bar_step(&beta, &problem.surrogate(&beta)?.0, lambda, eps0)?,
        };
        let change = max_abs_diff(&next, &beta);
        prev = std::mem::replace(&mut beta, next);
        trace.push(beta.iter().filter(|b| **b == 0.0).count());
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let ll = problem.likelihood.log_likelihood(&beta)?;
    let penalty: f64 = beta
        .iter()
        .zip(&prev)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, r)| (b / r).powi(2))
        .sum();
    Ok((
        PenalizedEstimate {
            support: support_of(&beta),
            beta,
            lambda,
            iterations,
            converged,
            objective: -ll + lambda * penalty,
            log_likelihood: ll,
        },
        trace,
    ))
}

pub fn bar_solve(problem: &SelectionProblem, lambda: f64, cfg: &PenaltyConfig) -> Result<PenalizedEstimate, SelectionError> {
    Ok(bar_solve_traced(problem, lambda, cfg)?.0)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `½ bᵀG b − bᵀc + λ Σ w_j |b_j|`.
fn coordinate_descent(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, weights: &[f64], start: &[f64]) -> Vec<f64> {
    let p = start.len();
    let mut b = start.to_vec();
    // residual r = c - G b
    let mut r: Vec<f64> = (0..p).map(|i| c[i] - (0..p).map(|j| gram[(i, j)] * b[j]).sum::<f64>()).collect();
    let scale = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1.0);
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let z = r[j] + gjj * b[j];
            let new = soft_threshold(z, lambda * weights[j]) / gjj;
            let d = new - b[j];
            if d != 0.0 {
                for i in 0..p {
                    r[i] -= gram[(i, j)] * d;
                }
                b[j] = new;
                delta = delta.max(d.abs() * gjj.sqrt());
            }
        }
        if delta < 1e-13 * scale.sqrt() {
            break;
        }
    }
    b
}

fn l1_objective(problem: &SelectionProblem, beta: &[f64], lambda: f64, weights: &[f64]) -> Result<(f64, f64), SelectionError> {
    let ll = problem.likelihood.log_likelihood(beta)?;
    let pen: f64 = beta.iter().zip(weights).map(|(b, w)| w * b.abs()).sum();
    Ok((-ll + lambda * pen, ll))
}

/// Weighted-L1 penalized estimate (LASSO with unit weights, adaptive LASSO
/// with `1/|β̃|^ψ`) by coordinate descent on the refreshed surrogate, with
/// step halving whenever a full surrogate step increases the objective.
pub fn l1_solve(
    problem: &SelectionProblem,
    lambda: f64,
    cfg: &PenaltyConfig,
    weights: &[f64],
    start: &[f64],
) -> Result<PenalizedEstimate, SelectionError> {
    let mut beta = start.to_vec();
    let (mut obj, mut ll) = l1_objective(problem, &beta, lambda, weights)?;
    let fixed = match cfg.refresh {
        RefreshPolicy::Fixed => Some(problem.surrogate(&problem.beta_tilde)?.0),
        RefreshPolicy::EveryIteration => None,
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let pd = match &fixed {
            Some(pd) => pd.clone(),
            None => problem.surrogate(&beta)?.0,
        };
        let target = coordinate_descent(&pd.gram(), &pd.xtw(), lambda, weights, &beta);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = if t == 1.0 {
                target.clone()
            } else {
                beta.iter().zip(&target).map(|(b, s)| b + t * (s - b)).collect()
            };
            if let Ok((o, l)) = l1_objective(problem, &trial, lambda, weights) {
                if o <= obj + 1e-12 * obj.abs().max(1.0) {
                    accepted = Some((trial, o, l));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, o, l)) = accepted else {
            break;
        };
        let change = max_abs_diff(&next, &beta);
        beta = next;
        obj = o;
        ll = l;
        if change < cfg.tolerance.min(1e-9) {
            converged = true;
            break;
        }
    }
    Ok(PenalizedEstimate {
        support: support_of(&beta),
        beta,
        lambda,
        iterations,
        converged,
        objective: obj,
        log_likelihood: ll,
    })
}

/// Largest violation of the weighted-L1 optimality conditions of
/// `-ℓ(β) + λ Σ w_j |β_j|`.
pub fn kkt_residual(problem: &SelectionProblem, est: &PenalizedEstimate, weights: &[f64]) -> Result<f64, SelectionError> {
    let u = problem.likelihood.gradient(&est.beta)?;
    Ok(est
        .beta
        .iter()
        .zip(&u)
        .zip(weights)
        .map(|((b, g), w)| {
            let t = est.lambda * w;
            if *b == 0.0 {
                (g.abs() - t).max(0.0)
            } else {
                (g - t * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max))
}

/// Diagonal of `r(β̂)` on the support: `1/β̂²` for BAR (the curvature of
/// the ridge term the BAR update actually minimizes), `1/|β̂|` for LASSO,
/// `w/|β̂|` for adaptive LASSO.
pub fn deflation_diagonal(kind: PenaltyKind, beta: &[f64], weights: &[f64]) -> Vec<f64> {
    beta.iter()
        .zip(weights)
        .map(|(b, w)| match kind {
            PenaltyKind::Bar => 1.0 / (b * b),
            PenaltyKind::Lasso => 1.0 / b.abs(),
            PenaltyKind::Alasso => w / b.abs(),
        })
        .collect()
}

/// Effective number of parameters `tr[(J + λR)⁻¹ J]` on the nonzero
/// coordinates, with `J` the observed information.
pub fn effective_params(beta_hat: &[f64], information: &DMatrix<f64>, lambda: f64, r_diag: &[f64]) -> Result<f64, SelectionError> {
    let active = support_of(beta_hat);
    if active.is_empty() {
        return Ok(0.0);
    }
    let q = active.len();
    let j = DMatrix::from_fn(q, q, |a, b| information[(active[a], active[b])]);
    let mut m = j.clone();
    for (a, &i) in active.iter().enumerate() {
        m[(a, a)] += lambda * r_diag[i];
    }
    let sol = m.lu().solve(&j).ok_or(SelectionError::SingularDeflation)?;
    let s = sol.trace();
    if !s.is_finite() {
        return Err(SelectionError::SingularDeflation);
    }
    Ok(s)
}

/// `-ℓ / (n (1 - s/n)²)`; `None` outside the domain `s < n`.
pub fn gcv_value(log_likelihood: f64, n: usize, s: f64) -> Option<f64> {
    let n = n as f64;
    let denom = 1.0 - s / n;
    if s >= n || denom <= 0.0 {
        return None;
    }
    Some(-log_likelihood / (n * denom * denom))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub estimate: Option<PenalizedEstimate>,
    pub effective_params: Option<f64>,
    pub gcv: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcvSelection {
    pub kind: PenaltyKind,
    pub best_lambda: f64,
    pub best_index: usize,
    pub path: Vec<PathPoint>,
}

impl GcvSelection {
    pub fn best(&self) -> &PenalizedEstimate {
        self.path[self.best_index]
            .estimate
            .as_ref()
            .expect("best grid point has an estimate")
    }
}

fn score(problem: &SelectionProblem, cfg: &PenaltyConfig, weights: &[f64], est: &PenalizedEstimate) -> Result<(f64, Option<f64>), SelectionError> {
    let info = problem.information(&est.beta)?;
    let r = deflation_diagonal(cfg.kind, &est.beta, weights);
    let s = effective_params(&est.beta, &info, est.lambda, &r)?;
    Ok((s, gcv_value(est.log_likelihood, problem.n(), s)))
}

/// Solves over the λ grid (ascending) and returns the GCV minimizer, ties
/// going to the larger λ. BAR solves start from the unpenalized estimate at
/// every λ and run in parallel; L1 solves warm-start along the path.
pub fn gcv_select(problem: &SelectionProblem, cfg: &PenaltyConfig) -> Result<GcvSelection, SelectionError> {
    cfg.validate()?;
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let weights = problem.weights(cfg);
    let solved: Vec<Result<PenalizedEstimate, SelectionError>> = match cfg.kind {
        PenaltyKind::Bar => lambdas.par_iter().map(|&l| bar_solve(problem, l, cfg)).collect(),
        PenaltyKind::Lasso | PenaltyKind::Alasso => {
            let mut start = problem.beta_tilde.clone();
            lambdas
                .iter()
                .map(|&l| {
                    let r = l1_solve(problem, l, cfg, &weights, &start);
                    if let Ok(e) = &r {
                        start = e.beta.clone();
                    }
                    r
                })
                .collect()
        }
    };
    let path: Vec<PathPoint> = lambdas
        .iter()
        .zip(solved)
        .map(|(&lambda, r)| match r.and_then(|e| score(problem, cfg, &weights, &e).map(|sg| (e, sg))) {
            Ok((e, (s, gcv))) => PathPoint {
                lambda,
                estimate: Some(e),
                effective_params: Some(s),
                gcv,
                error: gcv.is_none().then(|| format!("effective parameters {s:.3} reach n")),
            },
            Err(err) => PathPoint {
                lambda,
                estimate: None,
                effective_params: None,
                gcv: None,
                error: Some(err.to_string()),
            },
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, pt) in path.iter().enumerate() {
        if let Some(g) = pt.gcv {
            if best.is_none_or(|(_, b)| g <= b) {
                best = Some((i, g));
            }
        }
    }
    let Some((best_index, _)) = best else {
        let reasons: Vec<String> = path.iter().filter_map(|p| p.error.clone()).collect();
        return Err(SelectionError::AllLambdasFailed(reasons.join("; ")));
    };
    Ok(GcvSelection {
        kind: cfg.kind,
        best_lambda: path[best_index].lambda,
        best_index,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{simulate_dataset, SimulationScenario};
    use crate::estimation::{fit_unpenalized, BaselineMode, FitConfig};
    use proptest::prelude::*;

    fn pd_from(x: DMatrix<f64>, w: Vec<f64>) -> PseudoData {
        PseudoData {
            x,
            w: DVector::from_vec(w),
            jitter: 0.0,
        }
    }

    #[test]
    fn scalar_bar_step() {
        let pd = pd_from(DMatrix::identity(1, 1), vec![1.5]);
        let b = bar_step(&[0.8], &pd, 0.3, 1e-6).unwrap();
        assert!((b[0] - 1.5 / (1.0 + 0.3 / 0.64)).abs() < 1e-15);
        let b = bar_step(&[0.8], &pd, 0.0, 1e-6).unwrap();
        assert!((b[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.0, 1.5, -0.2, 0.0, 0.0, 1.1]);
        let pd = pd_from(x, vec![1.0, -2.0, 0.5]);
        let b = bar_step(&[1.0, 1.0, 1.0], &pd, 1e12, 1e-20).unwrap();
        assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }

    #[test]
    fn frozen_coordinates_stay_zero() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.0, 1.0]);
        let pd = pd_from(x, vec![1.0, 3.0]);
        let b = bar_step(&[0.0, 1.0], &pd, 0.1, 1e-6).unwrap();
        assert_eq!(b[0], 0.0);
    }

    /// Iterated one-dimensional grid minimization of
    /// `½(w - β)² + ½λβ²/β̌²`, refined by zooming.
    fn brute_force_bar(w: f64, lambda: f64, start: f64) -> f64 {
        let mut check = start;
        for _ in 0..500 {
            let f = |b: f64| 0.5 * (w - b).powi(2) + 0.5 * lambda * b * b / (check * check);
            let (mut lo, mut hi) = (-2.0 * w.abs() - 1.0, 2.0 * w.abs() + 1.0);
            let mut best = 0.0;
            for _ in 0..12 {
                let step = (hi - lo) / 400.0;
                best = (0..=400)
                    .map(|i| lo + step * i as f64)
                    .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                    .unwrap();
                lo = best - 2.0 * step;
                hi = best + 2.0 * step;
            }
            if best.abs() < 1e-9 {
                return 0.0;
            }
            if (best - check).abs() < 1e-12 {
                return best;
            }
            check = best;
        }
        check
    }

    fn iterate_scalar(w: f64, lambda: f64, start: f64) -> f64 {
        let pd = pd_from(DMatrix::identity(1, 1), vec![w]);
        let mut b = vec![start];
        for _ in 0..10_000 {
            let next = bar_step(&b, &pd, lambda, 1e-9).unwrap();
            if (next[0] - b[0]).abs() < 1e-14 {
                return next[0];
            }
            b = next;
        }
        b[0]
    }

    #[test]
    fn scalar_fixed_point_matches_grid_minimization() {
        for (w, lambda) in [(2.0, 0.5), (-1.5, 0.3), (1.0, 0.2), (0.7, 0.2), (3.0, 1.0)] {
            let fixed = iterate_scalar(w, lambda, w);
            let brute = brute_force_bar(w, lambda, w);
            assert!((fixed - brute).abs() < 1e-6, "w={w} λ={lambda}: {fixed} vs {brute}");
            // nonzero fixed points solve β² − wβ + λ = 0 (larger root)
            let disc = w * w - 4.0 * lambda;
            let root = if disc > 0.0 { 0.5 * (w + w.signum() * disc.sqrt()) } else { 0.0 };
            assert!((fixed - root).abs() < 1e-6, "w={w} λ={lambda}: {fixed} vs root {root}");
        }
    }

    #[test]
    fn duplicate_columns_get_identical_estimates() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 0.2, 0.5, 0.5, -1.0, -0.3, -0.3, 0.7, 0.9, 0.9, 0.1]);
        let pd = pd_from(x, vec![1.0, 0.4, -0.8, 1.3]);
        let mut b = vec![0.9, 0.9, 0.5];
        // iterate to the convergence rule of bar_solve
        for _ in 0..500 {
            let next = bar_step(&b, &pd, 0.05, 1e-6).unwrap();
            let change = max_abs_diff(&next, &b);
            b = next;
            if change < 1e-9 {
                break;
            }
        }
        assert!(b[0] != 0.0 && (b[0] - b[1]).abs() < 1e-8, "{b:?}");
    }

    #[test]
    fn effective_params_examples() {
        let j = DMatrix::from_element(1, 1, 2.0);
        let s = effective_params(&[0.7], &j, 3.0, &[1.0]).unwrap();
        assert!((s - 2.0 / 5.0).abs() < 1e-15);
        let j = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let beta = [0.5, 0.0, -1.2];
        assert!((effective_params(&beta, &j, 0.0, &[1.0; 3]).unwrap() - 2.0).abs() < 1e-12);
        assert!(effective_params(&beta, &j, 1e12, &[1.0; 3]).unwrap() < 1e-9);
        assert_eq!(effective_params(&[0.0, 0.0], &j, 1.0, &[1.0; 2]).unwrap(), 0.0);
    }

    #[test]
    fn gcv_domain() {
        assert!(gcv_value(-100.0, 50, 50.0).is_none());
        assert!(gcv_value(-100.0, 50, 60.0).is_none());
        let g = gcv_value(-100.0, 50, 10.0).unwrap();
        assert!((g - 100.0 / (50.0 * 0.64)).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_scalar() {
        let g = DMatrix::identity(1, 1);
        let c = DVector::from_vec(vec![1.3]);
        assert!((coordinate_descent(&g, &c, 0.5, &[1.0], &[0.0])[0] - 0.8).abs() < 1e-15);
        assert_eq!(coordinate_descent(&g, &c, 2.0, &[1.0], &[0.3])[0], 0.0);
        assert!((coordinate_descent(&g, &c, 0.5, &[2.0], &[0.0])[0] - 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bar_step_on_orthonormal_design(w in -3.0f64..3.0, prev in 0.1f64..3.0, lambda in 0.0f64..5.0) {
            let pd = pd_from(DMatrix::identity(1, 1), vec![w]);
            let b = bar_step(&[prev], &pd, lambda, 1e-12).unwrap();
            let expected = w / (1.0 + lambda / (prev * prev));
            prop_assert!((b[0] - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }

    fn small_problem_data(seed: u64) -> (Dataset, FitResult) {
        let scn = SimulationScenario::diverging(200, seed).calibrated(0.5).unwrap();
        let data = simulate_dataset(&scn).unwrap();
        let fit = fit_unpenalized(&data, &FitConfig::new(BaselineMode::Weibull)).unwrap();
        (data, fit)
    }

    #[test]
    fn bar_at_zero_lambda_is_the_unpenalized_estimate() {
        let (data, fit) = small_problem_data(3);
        let problem = SelectionProblem::new(&data, &fit, &LikelihoodOptions::default()).unwrap();
        let cfg = PenaltyConfig::new(PenaltyKind::Bar, vec![0.0]);
        let est = bar_solve(&problem, 0.0, &cfg).unwrap();
        // one Newton step from a converged fit changes β by O(gradient tolerance)
        let (pd, _) = problem.surrogate(&problem.beta_tilde).unwrap();
        let newton = pd.minimizer().unwrap();
        let first = bar_step(&problem.beta_tilde, &pd, 0.0, 1e-6).unwrap();
        for j in 0..problem.p() {
            assert!((first[j] - newton[j]).abs() < 1e-8);
        }
        assert!(est.converged);
        assert_eq!(est.support.len(), problem.p());
    }

    #[test]
    fn bar_zero_set_is_monotone_and_sparse() {
        let (data, fit) = small_problem_data(4);
        let problem = SelectionProblem::new(&data, &fit, &LikelihoodOptions::default()).unwrap();
        let cfg = PenaltyConfig::new(PenaltyKind::Bar, vec![5.0]);
        let (est, trace) = bar_solve_traced(&problem, 5.0, &cfg).unwrap();
        assert!(trace.windows(2).all(|w| w[0] <= w[1]));
        assert!(est.converged);
        assert!(est.support.len() < problem.p());
        for (j, b) in est.beta.iter().enumerate() {
            assert_eq!(*b != 0.0, est.support.contains(&j));
            assert!(*b == 0.0 || b.abs() >= cfg.zero_threshold);
        }
    }

    #[test]
    fn lasso_satisfies_kkt_and_large_lambda_is_empty() {
        let (data, fit) = small_problem_data(5);
        let problem = SelectionProblem::new(&data, &fit, &LikelihoodOptions::default()).unwrap();
        let cfg = PenaltyConfig::new(PenaltyKind::Lasso, vec![4.0]);
        let w = vec![1.0; problem.p()];
        let est = l1_solve(&problem, 4.0, &cfg, &w, &problem.beta_tilde).unwrap();
        assert!(est.converged);
        let kkt = kkt_residual(&problem, &est, &w).unwrap();
        assert!(kkt < 1e-6, "KKT residual {kkt}");
        assert!(est.support.len() < problem.p());

        let u0 = problem.likelihood.gradient(&vec![0.0; problem.p()]).unwrap();
        let lmax = u0.iter().fold(0.0f64, |m, g| m.max(g.abs())) * 1.01;
        let est = l1_solve(&problem, lmax, &cfg, &w, &problem.beta_tilde).unwrap();
        assert!(est.support.is_empty(), "{:?}", est.beta);

        let est = l1_solve(&problem, 0.0, &cfg, &w, &problem.beta_tilde).unwrap();
        assert_eq!(est.support.len(), problem.p());
    }

    #[test]
    fn gcv_single_lambda_and_tie_breaking() {
        let (data, fit) = small_problem_data(6);
        let problem = SelectionProblem::new(&data, &fit, &LikelihoodOptions::default()).unwrap();
        let cfg = PenaltyConfig::new(PenaltyKind::Bar, vec![2.0]);
        let sel = gcv_select(&problem, &cfg).unwrap();
        assert_eq!(sel.best_lambda, 2.0);
        // two huge λ both give the empty model and identical GCV
        let cfg = PenaltyConfig::new(PenaltyKind::Bar, vec![1e9, 1e10]);
        let sel = gcv_select(&problem, &cfg).unwrap();
        assert_eq!(sel.best_lambda, 1e10);
    }

    #[test]
    fn alasso_weights_are_capped() {
        let (data, mut fit) = small_problem_data(7);
        fit.params.beta.blocks[0][0] = 0.0;
        let problem = SelectionProblem::new(&data, &fit, &LikelihoodOptions::default()).unwrap();
        let w = problem.adaptive_weights(1.0);
        assert_eq!(w[0], MAX_WEIGHT);
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(PenaltyConfig::new(PenaltyKind::Bar, vec![]).validate().is_err());
        assert!(PenaltyConfig::new(PenaltyKind::Bar, vec![-1.0]).validate().is_err());
        assert!(PenaltyConfig::new(PenaltyKind::Bar, default_lambda_grid(300, 30)).validate().is_ok());
        let g = default_lambda_grid(300, 30);
        assert!((g[0] - 3e-3).abs() < 1e-15 && (g[29] - 300.0).abs() < 1e-9);
    }
}
