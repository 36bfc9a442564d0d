//! Transition-specific baseline hazards: parametric Weibull and the
//! Bernstein-polynomial sieve `exp(sum_k phi_k B_k(t; m, c, u))`.
//!
//! Every baseline exposes its parameters in unconstrained working
//! coordinates (Weibull on the log scale, Bernstein coefficients as-is)
//! together with gradients of the log-hazard and the cumulative hazard.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Transition;
use crate::quadrature::QuadratureRule;

/// Relative slack for evaluations just outside a Bernstein support.
const SUPPORT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("time {t} outside Bernstein support [{lower}, {upper}]")]
    OutsideSupport { t: f64, lower: f64, upper: f64 },
    #[error("basis index {k} exceeds degree {m}")]
    IndexAboveDegree { k: usize, m: usize },
    #[error("Weibull hazard is singular at t = 0 for shape {alpha} < 1")]
    Singularity { alpha: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("negative cumulative hazard {0}")]
    NegativeCumulative(f64),
    #[error("Bernstein support must satisfy lower < upper, got [{lower}, {upper}]")]
    InvalidSupport { lower: f64, upper: f64 },
    #[error("Bernstein baseline needs at least one coefficient")]
    NoCoefficients,
}

/// `C(m,k) s^k (1-s)^(m-k)` with `s = (t-c)/(u-c)`.
pub fn bernstein_basis(t: f64, k: usize, m: usize, c: f64, u: f64) -> Result<f64, BaselineError> {
    if k > m {
        return Err(BaselineError::IndexAboveDegree { k, m });
    }
    let s = unit_position(t, c, u)?;
    Ok(binomial(m, k) * s.powi(k as i32) * (1.0 - s).powi((m - k) as i32))
}

fn binomial(m: usize, k: usize) -> f64 {
    let k = k.min(m - k);
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

fn unit_position(t: f64, c: f64, u: f64) -> Result<f64, BaselineError> {
    if !(u > c) {
        return Err(BaselineError::InvalidSupport { lower: c, upper: u });
    }
    let slack = SUPPORT_SLACK * c.abs().max(u.abs()).max(1.0);
    if !(t >= c - slack && t <= u + slack) {
        return Err(BaselineError::OutsideSupport {
            t,
            lower: c,
            upper: u,
        });
    }
    let t = t.clamp(c, u);
    Ok((t - c) / (u - c))
}

/// Writes all `m + 1` basis values at `t` into `out`.
fn basis_values(t: f64, m: usize, c: f64, u: f64, out: &mut Vec<f64>) -> Result<(), BaselineError> {
    let s = unit_position(t, c, u)?;
    let r = 1.0 - s;
    out.clear();
    let mut binom = 1.0;
    for k in 0..=m {
        out.push(binom * s.powi(k as i32) * r.powi((m - k) as i32));
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    Ok(())
}

pub fn weibull_hazard(t: f64, alpha: f64, tau: f64) -> Result<f64, BaselineError> {
    if t < 0.0 {
        return Err(BaselineError::NegativeTime(t));
    }
    if t == 0.0 && alpha < 1.0 {
        return Err(BaselineError::Singularity { alpha });
    }
    Ok(alpha * tau * t.powf(alpha - 1.0))
}

/// Inverse of `Λ(t) = τ t^α`.
pub fn weibull_inverse_cumhaz(x: f64, alpha: f64, tau: f64) -> Result<f64, BaselineError> {
    if x < 0.0 {
        return Err(BaselineError::NegativeCumulative(x));
    }
    Ok((x / tau).powf(1.0 / alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub log_alpha: f64,
    pub log_tau: f64,
}

impl WeibullParams {
    pub fn new(log_alpha: f64, log_tau: f64) -> Self {
        Self { log_alpha, log_tau }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn hazard(&self, t: f64) -> Result<f64, BaselineError> {
        weibull_hazard(t, self.alpha(), self.tau())
    }

    pub fn cumulative(&self, t: f64) -> Result<f64, BaselineError> {
        if t < 0.0 {
            return Err(BaselineError::NegativeTime(t));
        }
        Ok(self.tau() * t.powf(self.alpha()))
    }

    pub fn inverse_cumulative(&self, x: f64) -> Result<f64, BaselineError> {
        weibull_inverse_cumhaz(x, self.alpha(), self.tau())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaselineSet {
    pub transitions: [WeibullParams; 3],
}

impl WeibullBaselineSet {
    /// Unit exponential hazards on every transition.
    pub fn unit() -> Self {
        Self {
            transitions: [WeibullParams::new(0.0, 0.0); 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBaseline {
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl BernsteinBaseline {
    pub fn new(coeffs: Vec<f64>, lower: f64, upper: f64) -> Result<Self, BaselineError> {
        if coeffs.is_empty() {
            return Err(BaselineError::NoCoefficients);
        }
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(BaselineError::InvalidSupport { lower, upper });
        }
        Ok(Self {
            coeffs,
            lower,
            upper,
        })
    }

    pub fn constant(degree: usize, value: f64, lower: f64, upper: f64) -> Result<Self, BaselineError> {
        Self::new(vec![value; degree + 1], lower, upper)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn log_hazard(&self, t: f64) -> Result<f64, BaselineError> {
        let mut b = Vec::with_capacity(self.coeffs.len());
        basis_values(t, self.degree(), self.lower, self.upper, &mut b)?;
        Ok(dot(&self.coeffs, &b))
    }

    /// Log-hazard together with its gradient in the coefficients (the basis values).
    pub fn log_hazard_grad(&self, t: f64) -> Result<(f64, Vec<f64>), BaselineError> {
        let mut b = Vec::with_capacity(self.coeffs.len());
        basis_values(t, self.degree(), self.lower, self.upper, &mut b)?;
        Ok((dot(&self.coeffs, &b), b))
    }

    /// `∫_c^t exp(sum φ_k B_k(v)) dv` by Gauss–Legendre quadrature.
    pub fn cumulative(&self, t: f64, quad: &QuadratureRule) -> Result<f64, BaselineError> {
        let t = self.check_upper(t)?;
        if t <= self.lower {
            return Ok(0.0);
        }
        let mut b = Vec::with_capacity(self.coeffs.len());
        let mut acc = 0.0;
        for (v, w) in quad.mapped(self.lower, t) {
            basis_values(v, self.degree(), self.lower, self.upper, &mut b)?;
            acc += w * dot(&self.coeffs, &b).exp();
        }
        Ok(acc)
    }

    /// Cumulative hazard and its gradient `∫ λ(v) B_k(v) dv` in the coefficients.
    pub fn cumulative_grad(&self, t: f64, quad: &QuadratureRule) -> Result<(f64, Vec<f64>), BaselineError> {
        let t = self.check_upper(t)?;
        let mut grad = vec![0.0; self.coeffs.len()];
        if t <= self.lower {
            return Ok((0.0, grad));
        }
        let mut b = Vec::with_capacity(self.coeffs.len());
        let mut acc = 0.0;
        for (v, w) in quad.mapped(self.lower, t) {
            basis_values(v, self.degree(), self.lower, self.upper, &mut b)?;
            let h = w * dot(&self.coeffs, &b).exp();
            acc += h;
            for (g, bk) in grad.iter_mut().zip(&b) {
                *g += h * bk;
            }
        }
        Ok((acc, grad))
    }

    fn check_upper(&self, t: f64) -> Result<f64, BaselineError> {
        unit_position(t, self.lower, self.upper).map(|_| t.clamp(self.lower, self.upper))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBaselineSet {
    pub transitions: [BernsteinBaseline; 3],
}

impl BernsteinBaselineSet {
    pub fn degrees(&self) -> [usize; 3] {
        [
            self.transitions[0].degree(),
            self.transitions[1].degree(),
            self.transitions[2].degree(),
        ]
    }
}

pub fn bernstein_log_hazard(t: f64, b: &BernsteinBaselineSet, j: Transition) -> Result<f64, BaselineError> {
    b.transitions[j.index()].log_hazard(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineSpec {
    Weibull(WeibullBaselineSet),
    Bernstein(BernsteinBaselineSet),
}

impl BaselineSpec {
    pub fn log_hazard(&self, k: Transition, t: f64) -> Result<f64, BaselineError> {
        match self {
            BaselineSpec::Weibull(w) => {
                let p = &w.transitions[k.index()];
                if t < 0.0 {
                    return Err(BaselineError::NegativeTime(t));
                }
                if t == 0.0 && p.alpha() < 1.0 {
                    return Err(BaselineError::Singularity { alpha: p.alpha() });
                }
                Ok(p.log_alpha + p.log_tau + (p.alpha() - 1.0) * t.ln())
            }
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].log_hazard(t),
        }
    }

    pub fn hazard(&self, k: Transition, t: f64) -> Result<f64, BaselineError> {
        match self {
            BaselineSpec::Weibull(w) => w.transitions[k.index()].hazard(t),
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].log_hazard(t).map(f64::exp),
        }
    }

    pub fn cumulative_hazard(&self, k: Transition, t: f64, quad: &QuadratureRule) -> Result<f64, BaselineError> {
        match self {
            BaselineSpec::Weibull(w) => w.transitions[k.index()].cumulative(t),
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].cumulative(t, quad),
        }
    }

    /// Number of working parameters of transition `k`.
    pub fn param_count(&self, k: Transition) -> usize {
        match self {
            BaselineSpec::Weibull(_) => 2,
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].coeffs.len(),
        }
    }

    pub fn total_param_count(&self) -> usize {
        Transition::ALL.iter().map(|&k| self.param_count(k)).sum()
    }

    /// Working parameters, transitions concatenated in order.
    pub fn params(&self) -> Vec<f64> {
        match self {
            BaselineSpec::Weibull(w) => w
                .transitions
                .iter()
                .flat_map(|p| [p.log_alpha, p.log_tau])
                .collect(),
            BaselineSpec::Bernstein(b) => b.transitions.iter().flat_map(|t| t.coeffs.clone()).collect(),
        }
    }

    /// Same structure with new working parameters (length must match `params()`).
    pub fn with_params(&self, theta: &[f64]) -> BaselineSpec {
        assert_eq!(theta.len(), self.total_param_count(), "baseline parameter length");
        match self {
            BaselineSpec::Weibull(_) => {
                let p = |k: usize| WeibullParams::new(theta[2 * k], theta[2 * k + 1]);
                BaselineSpec::Weibull(WeibullBaselineSet {
                    transitions: [p(0), p(1), p(2)],
                })
            }
            BaselineSpec::Bernstein(b) => {
                let mut offset = 0;
                let mut next = |t: &BernsteinBaseline| {
                    let len = t.coeffs.len();
                    let out = BernsteinBaseline {
                        coeffs: theta[offset..offset + len].to_vec(),
                        lower: t.lower,
                        upper: t.upper,
                    };
                    offset += len;
                    out
                };
                let t0 = next(&b.transitions[0]);
                let t1 = next(&b.transitions[1]);
                let t2 = next(&b.transitions[2]);
                BaselineSpec::Bernstein(BernsteinBaselineSet {
                    transitions: [t0, t1, t2],
                })
            }
        }
    }

    /// Log-hazard and its gradient in transition `k`'s working parameters.
    pub fn log_hazard_grad(&self, k: Transition, t: f64) -> Result<(f64, Vec<f64>), BaselineError> {
        match self {
            BaselineSpec::Weibull(w) => {
                let p = &w.transitions[k.index()];
                let v = self.log_hazard(k, t)?;
                let lt = if t > 0.0 { t.ln() } else { 0.0 };
                Ok((v, vec![1.0 + p.alpha() * lt, 1.0]))
            }
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].log_hazard_grad(t),
        }
    }

    /// Cumulative hazard and its gradient in transition `k`'s working parameters.
    pub fn cumulative_hazard_grad(
        &self,
        k: Transition,
        t: f64,
        quad: &QuadratureRule,
    ) -> Result<(f64, Vec<f64>), BaselineError> {
        match self {
            BaselineSpec::Weibull(w) => {
                let p = &w.transitions[k.index()];
                let v = p.cumulative(t)?;
                let lt = if t > 0.0 { t.ln() } else { 0.0 };
                Ok((v, vec![v * p.alpha() * lt, v]))
            }
            BaselineSpec::Bernstein(b) => b.transitions[k.index()].cumulative_grad(t, quad),
        }
    }
}

pub fn cumulative_hazard(
    t: f64,
    spec: &BaselineSpec,
    j: Transition,
    quad: &QuadratureRule,
) -> Result<f64, BaselineError> {
    spec.cumulative_hazard(j, t, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_bernstein(m: usize, upper: f64) -> BernsteinBaselineSet {
        let b = BernsteinBaseline::constant(m, 0.0, 0.0, upper).unwrap();
        BernsteinBaselineSet {
            transitions: [b.clone(), b.clone(), b],
        }
    }

    #[test]
    fn degree_zero_basis_is_one() {
        for t in [0.0, 0.3, 1.7, 2.0] {
            assert_eq!(bernstein_basis(t, 0, 0, 0.0, 2.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn endpoint_degeneracy_is_exact() {
        assert_eq!(bernstein_basis(1.0, 0, 3, 1.0, 4.0).unwrap(), 1.0);
        for k in 1..=3 {
            assert_eq!(bernstein_basis(1.0, k, 3, 1.0, 4.0).unwrap(), 0.0);
        }
        assert_eq!(bernstein_basis(4.0, 3, 3, 1.0, 4.0).unwrap(), 1.0);
        for k in 0..3 {
            assert_eq!(bernstein_basis(4.0, k, 3, 1.0, 4.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn basis_midpoint_value() {
        assert_eq!(bernstein_basis(0.5, 1, 2, 0.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(
            bernstein_basis(1.5, 0, 2, 0.0, 1.0),
            Err(BaselineError::OutsideSupport { .. })
        ));
        assert_eq!(
            bernstein_basis(0.5, 3, 2, 0.0, 1.0).unwrap_err(),
            BaselineError::IndexAboveDegree { k: 3, m: 2 }
        );
        // float noise just above the upper end is clamped
        assert_eq!(bernstein_basis(1.0 + 1e-12, 2, 2, 0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn bernstein_log_hazard_examples() {
        let zero = unit_bernstein(4, 3.0);
        for t in [0.0, 1.0, 2.9] {
            assert_eq!(bernstein_log_hazard(t, &zero, Transition::Death).unwrap(), 0.0);
        }
        let c0 = 0.7;
        let b = BernsteinBaseline::constant(5, c0, 0.0, 3.0).unwrap();
        let set = BernsteinBaselineSet {
            transitions: [b.clone(), b.clone(), b],
        };
        for t in [0.0, 0.4, 1.9, 3.0] {
            let v = bernstein_log_hazard(t, &set, Transition::Illness).unwrap();
            assert!((v - c0).abs() < 1e-14);
        }
        let bump = BernsteinBaseline::new(vec![0.0, 1.0, 0.0], 2.0, 6.0).unwrap();
        assert_eq!(bump.log_hazard(4.0).unwrap(), 0.5);
        assert!(bump.log_hazard(7.0).is_err());
    }

    #[test]
    fn weibull_hazard_examples() {
        assert_eq!(weibull_hazard(1.0, 1.0, 2.0).unwrap(), 2.0);
        let (a, tau) = (0.18f64.exp(), (-4.0f64).exp());
        assert!((weibull_hazard(1.0, a, tau).unwrap() - a * tau).abs() < 1e-16);
        assert_eq!(weibull_hazard(4.0, 2.0, 1.0).unwrap(), 8.0);
        assert_eq!(
            weibull_hazard(0.0, 0.5, 1.0).unwrap_err(),
            BaselineError::Singularity { alpha: 0.5 }
        );
        assert!(weibull_hazard(-1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn cumulative_hazard_examples() {
        let quad = QuadratureRule::default();
        let w = BaselineSpec::Weibull(WeibullBaselineSet {
            transitions: [WeibullParams::new(2f64.ln(), 3f64.ln()); 3],
        });
        let b = BaselineSpec::Bernstein(unit_bernstein(3, 10.0));
        for spec in [&w, &b] {
            assert_eq!(cumulative_hazard(0.0, spec, Transition::Illness, &quad).unwrap(), 0.0);
        }
        let v = cumulative_hazard(2.0, &w, Transition::Illness, &quad).unwrap();
        assert!((v - 12.0).abs() < 1e-12);
        let v = cumulative_hazard(7.0, &b, Transition::DeathAfterIllness, &quad).unwrap();
        assert!((v - 7.0).abs() < 1e-12);
        assert!(cumulative_hazard(10.5, &b, Transition::Illness, &quad).is_err());
    }

    #[test]
    fn inverse_cumhaz_examples() {
        assert_eq!(weibull_inverse_cumhaz(0.0, 1.3, 0.2).unwrap(), 0.0);
        assert!((weibull_inverse_cumhaz(12.0, 2.0, 3.0).unwrap() - 2.0).abs() < 1e-14);
        for a in [0.5, 1.0, 2.7] {
            assert!((weibull_inverse_cumhaz(0.37, a, 0.37).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!(weibull_inverse_cumhaz(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let quad = QuadratureRule::default();
        let bern = BaselineSpec::Bernstein(BernsteinBaselineSet {
            transitions: [
                BernsteinBaseline::new(vec![-1.0, 0.3, 0.8], 0.0, 5.0).unwrap(),
                BernsteinBaseline::new(vec![0.2, -0.4, 0.1], 0.0, 5.0).unwrap(),
                BernsteinBaseline::new(vec![-2.0, 0.0, 0.5, 1.0], 0.0, 4.0).unwrap(),
            ],
        });
        let weib = BaselineSpec::Weibull(WeibullBaselineSet {
            transitions: [
                WeibullParams::new(0.18, -4.0),
                WeibullParams::new(0.2, -4.0),
                WeibullParams::new(1.7, -11.0),
            ],
        });
        for spec in [&bern, &weib] {
            let theta = spec.params();
            let mut offset = 0;
            for k in Transition::ALL {
                let t = 3.1;
                let (_, g_haz) = spec.log_hazard_grad(k, t).unwrap();
                let (_, g_cum) = spec.cumulative_hazard_grad(k, t, &quad).unwrap();
                for j in 0..spec.param_count(k) {
                    let h = 1e-6;
                    let mut up = theta.clone();
                    up[offset + j] += h;
                    let mut dn = theta.clone();
                    dn[offset + j] -= h;
                    let (su, sd) = (spec.with_params(&up), spec.with_params(&dn));
                    let fd_haz = (su.log_hazard(k, t).unwrap() - sd.log_hazard(k, t).unwrap()) / (2.0 * h);
                    let fd_cum = (su.cumulative_hazard(k, t, &quad).unwrap()
                        - sd.cumulative_hazard(k, t, &quad).unwrap())
                        / (2.0 * h);
                    assert!((fd_haz - g_haz[j]).abs() < 1e-7 * (1.0 + fd_haz.abs()));
                    assert!((fd_cum - g_cum[j]).abs() < 1e-6 * (1.0 + fd_cum.abs()));
                }
                offset += spec.param_count(k);
            }
        }
    }

    #[test]
    fn quadrature_self_convergence() {
        let b = BernsteinBaseline::new(vec![-1.5, 0.8, -0.3, 1.2, 0.4, -0.7], 0.0, 8.0).unwrap();
        let q32 = QuadratureRule::default();
        let q64 = QuadratureRule::gauss_legendre(64).unwrap();
        for t in [0.5, 3.3, 8.0] {
            let a = b.cumulative(t, &q32).unwrap();
            let c = b.cumulative(t, &q64).unwrap();
            assert!((a - c).abs() / c < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(m in 0usize..=10, s in 0.0f64..=1.0, c in -5.0f64..5.0, w in 0.1f64..20.0) {
            let t = c + s * w;
            let total: f64 = (0..=m).map(|k| bernstein_basis(t, k, m, c, c + w).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cumulative_is_monotone(t1 in 0.0f64..10.0, dt in 0.0f64..5.0, phi in proptest::collection::vec(-2.0f64..2.0, 4)) {
            let quad = QuadratureRule::default();
            let b = BernsteinBaseline::new(phi, 0.0, 15.0).unwrap();
            prop_assert!(b.cumulative(t1 + dt, &quad).unwrap() >= b.cumulative(t1, &quad).unwrap());
            let w = WeibullParams::new(0.3, -1.0);
            prop_assert!(w.cumulative(t1 + dt).unwrap() >= w.cumulative(t1).unwrap());
        }

        #[test]
        fn weibull_round_trip(t in 1e-6f64..=100.0, la in -1.0f64..2.0, lt in -11.0f64..1.0) {
            let w = WeibullParams::new(la, lt);
            let back = w.inverse_cumulative(w.cumulative(t).unwrap()).unwrap();
            prop_assert!((back - t).abs() / t < 1e-10);
        }
    }
}
