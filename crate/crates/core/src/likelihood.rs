//! Gamma-frailty marginal log-likelihood of the semi-Markov illness-death
//! model, its derivatives, the quadratic-surrogate pseudo-data, and a
//! brute-force frailty-integration oracle.
//!
//! With `s = g1 + g2` and `a = δ1 + δ2` observed events, integrating
//! `ω^a exp(-ω s)` against a Gamma(1/γ, γ) density gives the per-record
//! contribution
//!
//! ```text
//! log f = log-hazard terms + linear predictors
//!         + [a = 2] log(1 + γ) - (1/γ + a) log(1 + γ s)
//! ```
//!
//! with hazard terms `λ01(y1) λ03(y2-y1)` (both observed), `λ01(y1)`
//! (illness then censored), `λ02(y1)` (death only), none otherwise.
//! `frailty_integral_oracle` integrates the frailty numerically and is the
//! arbiter for this form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::baselines::{BaselineError, BaselineSpec};
use crate::domain::{Dataset, ModelParameters, ObservationScenario, SubjectRecord, Transition};
use crate::quadrature::{adaptive_integrate, QuadratureError, QuadratureRule};

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("record {index}: {source}")]
    Baseline { index: usize, source: BaselineError },
    #[error("record {index}: both events observed with zero sojourn time")]
    DegenerateRecord { index: usize },
    #[error("non-finite parameter value")]
    NonFiniteParameter,
    #[error("coefficient vector has length {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("negated Hessian is not positive definite after jitter {jitter:e}")]
    Conditioning { jitter: f64 },
    #[error("frailty integral: {0}")]
    Integration(#[from] QuadratureError),
}

/// How the healthy-state exposure of a left-truncated subject enters `g2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TruncationConvention {
    /// `Λ(y2 - l)`: exposure measured from study entry.
    #[default]
    GapTime,
    /// `Λ(y2) - Λ(l)`: calendar-time truncation adjustment.
    CalendarTime,
    /// `Λ(y1) - Λ(l)`: healthy-state exposure runs from entry to the first
    /// transition, so subjects who become ill stop accruing illness and
    /// direct-death risk.
    FirstEvent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LikelihoodOptions {
    pub quadrature: QuadratureRule,
    pub truncation: TruncationConvention,
}

/// Cumulative transition intensities of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskTerms {
    pub g1: f64,
    pub g2: f64,
}

/// Baseline quantities of one record at fixed nuisance parameters.
#[derive(Debug, Clone, Copy)]
struct RecordBaseline {
    /// Λ01, Λ02 over the healthy exposure and Λ03 over the sojourn (0 if no illness).
    cum: [f64; 3],
    /// Sum of the log baseline hazards of the observed transitions.
    log_hazard: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn linear_predictors(rec: &SubjectRecord, beta: &[f64], offsets: [usize; 3], dims: [usize; 3]) -> [f64; 3] {
    let mut eta = [0.0; 3];
    for k in 0..3 {
        eta[k] = dot(rec.covariates(k), &beta[offsets[k]..offsets[k] + dims[k]]);
    }
    eta
}

/// Which linear predictors enter the log-likelihood linearly.
fn linear_mask(scenario: ObservationScenario) -> [f64; 3] {
    match scenario {
        ObservationScenario::BothObserved => [1.0, 0.0, 1.0],
        ObservationScenario::NonTerminalThenCensored => [1.0, 0.0, 0.0],
        ObservationScenario::TerminalOnly => [0.0, 1.0, 0.0],
        ObservationScenario::NoneObserved => [0.0; 3],
    }
}

/// Transitions whose baseline hazard is evaluated, with the evaluation time.
fn hazard_points(rec: &SubjectRecord) -> Vec<(Transition, f64)> {
    match rec.scenario() {
        ObservationScenario::BothObserved => vec![
            (Transition::Illness, rec.y1),
            (Transition::DeathAfterIllness, rec.sojourn()),
        ],
        ObservationScenario::NonTerminalThenCensored => vec![(Transition::Illness, rec.y1)],
        ObservationScenario::TerminalOnly => vec![(Transition::Death, rec.y1)],
        ObservationScenario::NoneObserved => vec![],
    }
}

fn check_degenerate(index: usize, rec: &SubjectRecord) -> Result<(), LikelihoodError> {
    if rec.delta1 && rec.delta2 && rec.y2 <= rec.y1 {
        return Err(LikelihoodError::DegenerateRecord { index });
    }
    Ok(())
}

fn exposure_cum(
    spec: &BaselineSpec,
    k: Transition,
    rec: &SubjectRecord,
    opts: &LikelihoodOptions,
) -> Result<f64, BaselineError> {
    let q = &opts.quadrature;
    match opts.truncation {
        TruncationConvention::GapTime => spec.cumulative_hazard(k, rec.y2 - rec.l, q),
        TruncationConvention::CalendarTime => {
            Ok(spec.cumulative_hazard(k, rec.y2, q)? - spec.cumulative_hazard(k, rec.l, q)?)
        }
        TruncationConvention::FirstEvent => {
            Ok(spec.cumulative_hazard(k, rec.y1, q)? - spec.cumulative_hazard(k, rec.l, q)?)
        }
    }
}

fn exposure_cum_grad(
    spec: &BaselineSpec,
    k: Transition,
    rec: &SubjectRecord,
    opts: &LikelihoodOptions,
) -> Result<(f64, Vec<f64>), BaselineError> {
    let q = &opts.quadrature;
    match opts.truncation {
        TruncationConvention::GapTime => spec.cumulative_hazard_grad(k, rec.y2 - rec.l, q),
        TruncationConvention::CalendarTime | TruncationConvention::FirstEvent => {
            let upper = if opts.truncation == TruncationConvention::FirstEvent { rec.y1 } else { rec.y2 };
            let (a, ga) = spec.cumulative_hazard_grad(k, upper, q)?;
            let (b, gb) = spec.cumulative_hazard_grad(k, rec.l, q)?;
            Ok((a - b, ga.iter().zip(&gb).map(|(x, y)| x - y).collect()))
        }
    }
}

fn record_baseline(
    index: usize,
    rec: &SubjectRecord,
    spec: &BaselineSpec,
    opts: &LikelihoodOptions,
) -> Result<RecordBaseline, LikelihoodError> {
    check_degenerate(index, rec)?;
    let wrap = |source| LikelihoodError::Baseline { index, source };
    let c1 = exposure_cum(spec, Transition::Illness, rec, opts).map_err(wrap)?;
    let c2 = exposure_cum(spec, Transition::Death, rec, opts).map_err(wrap)?;
    let c3 = if rec.delta1 {
        spec.cumulative_hazard(Transition::DeathAfterIllness, rec.sojourn(), &opts.quadrature)
            .map_err(wrap)?
    } else {
        0.0
    };
    let mut log_hazard = 0.0;
    for (k, t) in hazard_points(rec) {
        log_hazard += spec.log_hazard(k, t).map_err(wrap)?;
    }
    Ok(RecordBaseline {
        cum: [c1, c2, c3],
        log_hazard,
    })
}

/// Per-record value and derivatives with respect to the three linear predictors.
struct EtaDerivatives {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
}

fn record_kernel(rec: &SubjectRecord, base: &RecordBaseline, gamma: f64, eta: [f64; 3]) -> EtaDerivatives {
    let scenario = rec.scenario();
    let a = scenario.event_count() as f64;
    let c = 1.0 / gamma + a;
    let mut g = [0.0; 3];
    for k in 0..3 {
        g[k] = base.cum[k] * eta[k].exp();
    }
    let s = g[0] + g[1] + g[2];
    let denom = 1.0 + gamma * s;
    let mask = linear_mask(scenario);
    let mut value = base.log_hazard + dot(&mask, &eta) - c * (gamma * s).ln_1p();
    if scenario == ObservationScenario::BothObserved {
        value += gamma.ln_1p();
    }
    let first = c * gamma / denom;
    let second = c * gamma * gamma / (denom * denom);
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for k in 0..3 {
        grad[k] = mask[k] - first * g[k];
        for l in 0..3 {
            hess[k][l] = second * g[k] * g[l];
        }
        hess[k][k] -= first * g[k];
    }
    EtaDerivatives { value, grad, hess }
}

fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// The log-likelihood as a function of the stacked regression vector at
/// fixed nuisance parameters. Baseline quantities are computed once.
#[derive(Debug, Clone)]
pub struct BetaLikelihood<'a> {
    data: &'a Dataset,
    gamma: f64,
    terms: Vec<RecordBaseline>,
}

impl<'a> BetaLikelihood<'a> {
    pub fn new(
        data: &'a Dataset,
        nuisance: &crate::domain::NuisanceParameters,
        opts: &LikelihoodOptions,
    ) -> Result<Self, LikelihoodError> {
        let terms = data
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| record_baseline(i, r, &nuisance.baseline, opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            data,
            gamma: nuisance.gamma(),
            terms,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    fn check(&self, beta: &[f64]) -> Result<(), LikelihoodError> {
        if beta.len() != self.p() {
            return Err(LikelihoodError::DimensionMismatch {
                expected: self.p(),
                actual: beta.len(),
            });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(LikelihoodError::NonFiniteParameter);
        }
        Ok(())
    }

    fn kernels(&self, beta: &[f64]) -> impl Iterator<Item = (&SubjectRecord, EtaDerivatives)> + '_ {
        let dims = self.data.dims();
        let offsets = crate::domain::RegressionCoefficients::offsets(dims);
        let beta = beta.to_vec();
        self.data
            .records()
            .iter()
            .zip(&self.terms)
            .map(move |(r, t)| (r, record_kernel(r, t, self.gamma, linear_predictors(r, &beta, offsets, dims))))
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> Result<f64, LikelihoodError> {
        self.check(beta)?;
        let values: Vec<f64> = self.kernels(beta).map(|(_, k)| k.value).collect();
        Ok(pairwise_sum(&values))
    }

    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>, LikelihoodError> {
        Ok(self.evaluate(beta, false)?.1)
    }

    pub fn hessian(&self, beta: &[f64]) -> Result<DMatrix<f64>, LikelihoodError> {
        Ok(self.evaluate(beta, true)?.2)
    }

    /// Log-likelihood, gradient and (when requested) Hessian in one pass.
    pub fn evaluate(&self, beta: &[f64], with_hessian: bool) -> Result<(f64, Vec<f64>, DMatrix<f64>), LikelihoodError> {
        self.check(beta)?;
        let dims = self.data.dims();
        let offsets = crate::domain::RegressionCoefficients::offsets(dims);
        let p = self.p();
        let mut values = Vec::with_capacity(self.data.len());
        let mut grad = vec![0.0; p];
        let mut hess = DMatrix::zeros(if with_hessian { p } else { 0 }, if with_hessian { p } else { 0 });
        for (rec, kern) in self.kernels(beta) {
            values.push(kern.value);
            for k in 0..3 {
                let zk = rec.covariates(k);
                for (j, z) in zk.iter().enumerate() {
                    grad[offsets[k] + j] += kern.grad[k] * z;
                }
                if !with_hessian {
                    continue;
                }
                // lower triangle only, mirrored below
                for l in 0..=k {
                    let w = kern.hess[k][l];
                    if w == 0.0 {
                        continue;
                    }
                    let zl = rec.covariates(l);
                    for (i, zi) in zk.iter().enumerate() {
                        let row = offsets[k] + i;
                        let wz = w * zi;
                        for (j, zj) in zl.iter().enumerate() {
                            let col = offsets[l] + j;
                            if col <= row {
                                hess[(row, col)] += wz * zj;
                            }
                        }
                    }
                }
            }
        }
        if with_hessian {
            for r in 0..p {
                for c in 0..r {
                    hess[(c, r)] = hess[(r, c)];
                }
            }
        }
        Ok((pairwise_sum(&values), grad, hess))
    }
}

pub fn risk_terms(
    rec: &SubjectRecord,
    params: &ModelParameters,
    quad: &QuadratureRule,
) -> Result<RiskTerms, BaselineError> {
    risk_terms_with(
        rec,
        params,
        &LikelihoodOptions {
            quadrature: quad.clone(),
            truncation: TruncationConvention::GapTime,
        },
    )
}

pub fn risk_terms_with(
    rec: &SubjectRecord,
    params: &ModelParameters,
    opts: &LikelihoodOptions,
) -> Result<RiskTerms, BaselineError> {
    let spec = &params.nuisance.baseline;
    let b = &params.beta.blocks;
    let g1 = if rec.delta1 {
        spec.cumulative_hazard(Transition::DeathAfterIllness, rec.sojourn(), &opts.quadrature)?
            * dot(&b[2], &rec.z3).exp()
    } else {
        0.0
    };
    let g2 = exposure_cum(spec, Transition::Illness, rec, opts)? * dot(&b[0], &rec.z1).exp()
        + exposure_cum(spec, Transition::Death, rec, opts)? * dot(&b[1], &rec.z2).exp();
    Ok(RiskTerms { g1, g2 })
}

fn opts_from_quad(quad: &QuadratureRule) -> LikelihoodOptions {
    LikelihoodOptions {
        quadrature: quad.clone(),
        truncation: TruncationConvention::GapTime,
    }
}

pub fn log_likelihood(params: &ModelParameters, data: &Dataset, quad: &QuadratureRule) -> Result<f64, LikelihoodError> {
    log_likelihood_with(params, data, &opts_from_quad(quad))
}

pub fn log_likelihood_with(params: &ModelParameters, data: &Dataset, opts: &LikelihoodOptions) -> Result<f64, LikelihoodError> {
    if !params.beta.is_finite() {
        return Err(LikelihoodError::NonFiniteParameter);
    }
    BetaLikelihood::new(data, &params.nuisance, opts)?.log_likelihood(&params.beta.stacked())
}

pub fn gradient_beta(params: &ModelParameters, data: &Dataset, quad: &QuadratureRule) -> Result<Vec<f64>, LikelihoodError> {
    BetaLikelihood::new(data, &params.nuisance, &opts_from_quad(quad))?.gradient(&params.beta.stacked())
}

pub fn hessian_beta(params: &ModelParameters, data: &Dataset, quad: &QuadratureRule) -> Result<DMatrix<f64>, LikelihoodError> {
    BetaLikelihood::new(data, &params.nuisance, &opts_from_quad(quad))?.hessian(&params.beta.stacked())
}

/// Log-likelihood and its gradient in the full working parameter vector
/// `[beta (p), log gamma, baseline working parameters]`.
pub fn log_likelihood_full_grad(
    params: &ModelParameters,
    data: &Dataset,
    opts: &LikelihoodOptions,
) -> Result<(f64, Vec<f64>), LikelihoodError> {
    let p = data.p();
    let spec = &params.nuisance.baseline;
    let gamma = params.nuisance.gamma();
    let beta = params.beta.stacked();
    if beta.len() != p {
        return Err(LikelihoodError::DimensionMismatch {
            expected: p,
            actual: beta.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) || !gamma.is_finite() {
        return Err(LikelihoodError::NonFiniteParameter);
    }
    let dims = data.dims();
    let offsets = crate::domain::RegressionCoefficients::offsets(dims);
    let mut base_offsets = [0usize; 3];
    let mut acc = p + 1;
    for k in Transition::ALL {
        base_offsets[k.index()] = acc;
        acc += spec.param_count(k);
    }
    let mut grad = vec![0.0; acc];
    let mut values = Vec::with_capacity(data.len());
    let q = &opts.quadrature;

    for (index, rec) in data.records().iter().enumerate() {
        check_degenerate(index, rec)?;
        let wrap = |source| LikelihoodError::Baseline { index, source };
        let scenario = rec.scenario();
        let a = scenario.event_count() as f64;
        let c = 1.0 / gamma + a;
        let eta = linear_predictors(rec, &beta, offsets, dims);

        let (c1, gc1) = exposure_cum_grad(spec, Transition::Illness, rec, opts).map_err(wrap)?;
        let (c2, gc2) = exposure_cum_grad(spec, Transition::Death, rec, opts).map_err(wrap)?;
        let (c3, gc3) = if rec.delta1 {
            spec.cumulative_hazard_grad(Transition::DeathAfterIllness, rec.sojourn(), q)
                .map_err(wrap)?
        } else {
            (0.0, vec![0.0; spec.param_count(Transition::DeathAfterIllness)])
        };
        let cum = [c1, c2, c3];
        let cum_grads = [gc1, gc2, gc3];
        let mut log_hazard = 0.0;
        for (k, t) in hazard_points(rec) {
            let (v, gh) = spec.log_hazard_grad(k, t).map_err(wrap)?;
            log_hazard += v;
            for (j, gj) in gh.iter().enumerate() {
                grad[base_offsets[k.index()] + j] += gj;
            }
        }
        let base = RecordBaseline { cum, log_hazard };
        let kern = record_kernel(rec, &base, gamma, eta);
        values.push(kern.value);

        for k in 0..3 {
            for (j, z) in rec.covariates(k).iter().enumerate() {
                grad[offsets[k] + j] += kern.grad[k] * z;
            }
        }
        let s: f64 = (0..3).map(|k| cum[k] * eta[k].exp()).sum();
        let denom = 1.0 + gamma * s;
        // d log f / d cum_k
        for k in 0..3 {
            let w = -c * gamma * eta[k].exp() / denom;
            for (j, gj) in cum_grads[k].iter().enumerate() {
                grad[base_offsets[k] + j] += w * gj;
            }
        }
        // d log f / d log gamma
        let mut dlg = (gamma * s).ln_1p() / gamma - c * gamma * s / denom;
        if scenario == ObservationScenario::BothObserved {
            dlg += gamma / (1.0 + gamma);
        }
        grad[p] += dlg;
    }
    Ok((pairwise_sum(&values), grad))
}

/// `f_r` for one record by direct numerical integration of the conditional
/// likelihood against the gamma frailty density.
pub fn frailty_integral_oracle(
    params: &ModelParameters,
    rec: &SubjectRecord,
    quad: &QuadratureRule,
) -> Result<f64, LikelihoodError> {
    frailty_integral_oracle_with(params, rec, &opts_from_quad(quad))
}

pub fn frailty_integral_oracle_with(
    params: &ModelParameters,
    rec: &SubjectRecord,
    opts: &LikelihoodOptions,
) -> Result<f64, LikelihoodError> {
    let spec = &params.nuisance.baseline;
    let b = &params.beta.blocks;
    let wrap = |source| LikelihoodError::Baseline { index: 0, source };
    let terms = risk_terms_with(rec, params, opts).map_err(wrap)?;
    let s = terms.g1 + terms.g2;
    // conditional likelihood: omega^a * prod(hazards) * exp(-omega s)
    let mut hazard_product = 1.0;
    for (k, t) in hazard_points(rec) {
        hazard_product *= spec.hazard(k, t).map_err(wrap)? * dot(&b[k.index()], rec.covariates(k.index())).exp();
    }
    let a = rec.scenario().event_count() as f64;
    let gamma = params.nuisance.gamma();
    let shape = 1.0 / gamma;
    // integrate in v = ln(omega); log density of omega is
    // -shape ln(gamma) - lnΓ(shape) + (shape - 1) ln(omega) - omega/gamma
    let log_norm = -shape * gamma.ln() - ln_gamma(shape);
    let exponent = |v: f64| (shape + a) * v - v.exp() * (shape + s);
    let mode = ((shape + a) / (shape + s)).ln();
    let peak = exponent(mode);
    let sigma = 1.0 / (shape + a).sqrt();
    let left = mode - 40.0 * sigma.max(1.0 / (shape + a));
    let right = mode + (40.0 * sigma).min(8.0).max(8.0 * sigma);
    let integrand = |v: f64| (exponent(v) - peak).exp();
    let lo = adaptive_integrate(integrand, left, mode, 1e-14, 0.0, 2000)?;
    let hi = adaptive_integrate(integrand, mode, right, 1e-14, 0.0, 2000)?;
    Ok(hazard_product * (lo + hi) * (log_norm + peak).exp())
}

/// Upper-triangular `X` with `XᵀX = -H` (plus any jitter) and pseudo-response `W`.
#[derive(Debug, Clone)]
pub struct PseudoData {
    pub x: DMatrix<f64>,
    pub w: DVector<f64>,
    /// Diagonal jitter added to `-H` before factorization.
    pub jitter: f64,
}

impl PseudoData {
    pub fn gram(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.x
    }

    pub fn xtw(&self) -> DVector<f64> {
        self.x.transpose() * &self.w
    }

    /// Unpenalized minimizer of `½‖W − Xb‖²`.
    pub fn minimizer(&self) -> Option<DVector<f64>> {
        let rhs = self.xtw();
        self.gram().cholesky().map(|c| c.solve(&rhs))
    }
}

pub const MAX_JITTER_STEPS: i32 = 20;

/// Cholesky factor of a symmetric matrix with escalating diagonal jitter
/// `1e-10 * 2^k`. Returns the factor and the jitter used.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64), LikelihoodError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let mut jitter = 0.0;
    for k in 0..=MAX_JITTER_STEPS {
        jitter = 1e-10 * 2f64.powi(k);
        let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * jitter;
        if let Some(c) = shifted.cholesky() {
            return Ok((c, jitter));
        }
    }
    Err(LikelihoodError::Conditioning { jitter })
}

/// Builds the least-squares pseudo-data of the second-order expansion at
/// `beta`, so that `½‖W − Xb‖²` has gradient `-u + (-H)(b - beta)` and
/// its minimizer is the Newton step.
pub fn pseudo_data(beta: &[f64], u: &[f64], hessian: &DMatrix<f64>) -> Result<PseudoData, LikelihoodError> {
    let p = beta.len();
    if u.len() != p || hessian.nrows() != p || hessian.ncols() != p {
        return Err(LikelihoodError::DimensionMismatch {
            expected: p,
            actual: u.len(),
        });
    }
    let neg = -(hessian + hessian.transpose()) * 0.5;
    let (chol, jitter) = jittered_cholesky(&neg)?;
    let lower = chol.l();
    let info = &lower * lower.transpose();
    let rhs = &info * DVector::from_column_slice(beta) + DVector::from_column_slice(u);
    let w = lower
        .solve_lower_triangular(&rhs)
        .ok_or(LikelihoodError::Conditioning { jitter })?;
    Ok(PseudoData {
        x: lower.transpose(),
        w,
        jitter,
    })
}
