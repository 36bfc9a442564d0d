//! Simulation of semi-competing risks data from a gamma-frailty Weibull
//! illness-death model with semi-Markov third transition, uniform
//! censoring and left truncation (truncated subjects are redrawn).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{WeibullBaselineSet, WeibullParams};
use crate::domain::{Dataset, DomainError, RegressionCoefficients, SubjectRecord};

/// Draws per requested subject before the truncation law is declared unusable.
const MAX_ATTEMPTS: usize = 100;
/// Subjects in the Monte Carlo pilot used by calibration helpers.
pub const PILOT_SIZE: usize = 5000;

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("left truncation rejected too many of {attempts} draws (acceptance below 1%)")]
    RejectionOverflow { attempts: usize },
    #[error("censoring target {target} unreachable: achievable rates lie in [{low}, {high}]")]
    Unreachable { target: f64, low: f64, high: f64 },
    #[error("censoring calibration did not reach {target} within 60 bisection steps (last rate {rate})")]
    BisectionFailed { target: f64, rate: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

pub fn derived_dims(n: usize) -> usize {
    (6.0 * (n as f64).powf(1.0 / 6.0)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovariateDesign {
    /// `d` standard normal columns with correlation `rho^|j - j'|`.
    Ar1 { d: usize, rho: f64 },
    /// Ten columns in groups {1,2} Gaussian, {3,4} Bernoulli, {5,6,7}
    /// Gaussian, {8,9,10} Bernoulli, within-group correlation `rho`.
    Grouped { rho: f64 },
}

impl CovariateDesign {
    pub fn dim(&self) -> usize {
        match self {
            CovariateDesign::Ar1 { d, .. } => *d,
            CovariateDesign::Grouped { .. } => 10,
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            CovariateDesign::Ar1 { rho, .. } | CovariateDesign::Grouped { rho } => *rho,
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match *self {
            CovariateDesign::Ar1 { d, rho } => gen_covariates_ar1(n, d, rho, rng),
            CovariateDesign::Grouped { rho } => gen_covariates_grouped(n, rho, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CensoringLaw {
    None,
    Fixed(f64),
    Uniform { c_max: f64 },
}

impl CensoringLaw {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            CensoringLaw::None => f64::INFINITY,
            CensoringLaw::Fixed(c) => c,
            CensoringLaw::Uniform { c_max } => c_max * u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruncationLaw {
    None,
    Uniform { l_max: f64 },
}

impl TruncationLaw {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            TruncationLaw::None => 0.0,
            TruncationLaw::Uniform { l_max } => l_max * u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub n: usize,
    pub beta: RegressionCoefficients,
    pub weibull: WeibullBaselineSet,
    pub gamma: f64,
    pub design: CovariateDesign,
    pub censoring: CensoringLaw,
    pub truncation: TruncationLaw,
    pub seed: u64,
}

/// Weibull truth of the diverging-dimension study.
pub fn reference_weibull() -> WeibullBaselineSet {
    WeibullBaselineSet {
        transitions: [
            WeibullParams::new(0.18, -4.0),
            WeibullParams::new(0.2, -4.0),
            WeibullParams::new(1.7, -11.0),
        ],
    }
}

fn padded(head: &[f64], d: usize) -> Vec<f64> {
    let mut v = head.to_vec();
    v.resize(d, 0.0);
    v.truncate(d);
    v
}

impl SimulationScenario {
    /// Diverging-dimension scenario: `d = floor(6 n^(1/6))` AR(1) covariates
    /// with ρ = 0.5, four nonzero effects per transition, γ = 0.25.
    /// Censoring and truncation are left open; see [`SimulationScenario::calibrated`].
    pub fn diverging(n: usize, seed: u64) -> Self {
        let d = derived_dims(n);
        Self {
            n,
            beta: RegressionCoefficients::new(
                padded(&[-0.8, 1.0, 1.0, 0.9], d),
                padded(&[1.0, 1.0, 1.0, 0.9], d),
                padded(&[-1.0, 1.0, 0.9, 1.0], d),
            ),
            weibull: reference_weibull(),
            gamma: 0.25,
            design: CovariateDesign::Ar1 { d, rho: 0.5 },
            censoring: CensoringLaw::None,
            truncation: TruncationLaw::None,
            seed,
        }
    }

    /// Grouped-covariate scenario with ten covariates per transition.
    pub fn grouped(n: usize, rho: f64, seed: u64) -> Self {
        let truth = vec![0.8, 0.8, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        Self {
            n,
            beta: RegressionCoefficients::new(truth.clone(), truth.clone(), truth),
            weibull: reference_weibull(),
            gamma: 0.25,
            design: CovariateDesign::Grouped { rho },
            censoring: CensoringLaw::None,
            truncation: TruncationLaw::None,
            seed,
        }
    }

    /// Sets left truncation to the default `Uniform(0, 0.2 * median first
    /// latent transition time)` and calibrates uniform censoring to `target`.
    pub fn calibrated(mut self, target_censoring: f64) -> Result<Self, DatagenError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ca11_b4a7_e000);
        let l_max = default_truncation_bound(&self, &mut rng)?;
        self.truncation = TruncationLaw::Uniform { l_max };
        let c_max = calibrate_censoring(&self, target_censoring, &mut rng)?;
        self.censoring = CensoringLaw::Uniform { c_max };
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidScenario(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        let rho = self.design.rho();
        if !(0.0..1.0).contains(&rho) {
            return bad(format!("rho must lie in [0, 1), got {rho}"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        let d = self.design.dim();
        if self.beta.dims() != [d; 3] {
            return bad(format!("true coefficients have dims {:?}, design has {d}", self.beta.dims()));
        }
        if !self.beta.is_finite() {
            return bad("true coefficients must be finite".into());
        }
        match self.censoring {
            CensoringLaw::Fixed(c) if c < 0.0 || !c.is_finite() => return bad("fixed censoring time must be finite and >= 0".into()),
            CensoringLaw::Uniform { c_max } if !(c_max > 0.0) => return bad("c_max must be positive".into()),
            _ => {}
        }
        if let TruncationLaw::Uniform { l_max } = self.truncation {
            if !(l_max >= 0.0) || !l_max.is_finite() {
                return bad("l_max must be finite and >= 0".into());
            }
        }
        Ok(())
    }

    pub fn true_support(&self) -> [Vec<usize>; 3] {
        self.beta
            .blocks
            .clone()
            .map(|b| b.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect())
    }
}

pub fn gen_covariates_ar1<R: Rng + ?Sized>(n: usize, d: usize, rho: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let innovation = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let mut row = Vec::with_capacity(d);
            let mut prev = 0.0;
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                prev = if j == 0 { e } else { rho * prev + innovation * e };
                row.push(prev);
            }
            row
        })
        .collect()
}

/// Column groups of the grouped design and whether each is Bernoulli.
pub const GROUPS: [(std::ops::Range<usize>, bool); 4] = [(0..2, false), (2..4, true), (4..7, false), (7..10, true)];

pub fn gen_covariates_grouped<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    (0..n)
        .map(|_| {
            let mut row = vec![0.0; 10];
            for (range, bernoulli) in GROUPS.iter().cloned() {
                let f: f64 = rng.sample(StandardNormal);
                for j in range {
                    let e: f64 = rng.sample(StandardNormal);
                    let x = shared * f + own * e;
                    row[j] = if bernoulli { f64::from(u8::from(x > 0.0)) } else { x };
                }
            }
            row
        })
        .collect()
}

/// Latent event times of one subject before censoring and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentTimes {
    pub omega: f64,
    /// First-transition draw before racing it against direct death.
    pub t1_latent: f64,
    /// Non-terminal event time, infinite when death comes first.
    pub t1: f64,
    /// Direct death time drawn from the second transition.
    pub t2_direct: f64,
    /// Terminal event time on the study scale (`t1 + t3` after illness).
    pub t2: f64,
}

fn draw_frailty<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    let shape = 1.0 / gamma;
    Gamma::new(shape, gamma).expect("positive gamma").sample(rng)
}

fn inverse_time(w: &WeibullParams, u: f64, rate: f64) -> f64 {
    let x = -(-u).ln_1p() / rate;
    if !x.is_finite() {
        return f64::INFINITY;
    }
    w.inverse_cumulative(x).unwrap_or(f64::INFINITY)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn draw_latent<R: Rng + ?Sized>(scn: &SimulationScenario, z: [&[f64]; 3], rng: &mut R) -> LatentTimes {
    let omega = draw_frailty(scn.gamma, rng);
    let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let rate = |k: usize| omega * dot(&scn.beta.blocks[k], z[k]).exp();
    let w = &scn.weibull.transitions;
    let t1 = inverse_time(&w[0], u[0], rate(0));
    let t2_direct = inverse_time(&w[1], u[1], rate(1));
    if t1 < t2_direct {
        let t3 = inverse_time(&w[2], u[2], rate(2));
        LatentTimes {
            omega,
            t1_latent: t1,
            t1,
            t2_direct,
            t2: t1 + t3,
        }
    } else {
        LatentTimes {
            omega,
            t1_latent: t1,
            t1: f64::INFINITY,
            t2_direct,
            t2: t2_direct,
        }
    }
}

/// Observed `(y1, δ1, y2, δ2)` from latent times and a censoring time.
fn observe(lat: &LatentTimes, c: f64) -> (f64, bool, f64, bool) {
    let y1 = lat.t1.min(lat.t2_direct).min(c);
    let delta1 = lat.t1.is_finite() && lat.t1 <= lat.t2_direct.min(c);
    let y2 = lat.t2.min(c);
    let delta2 = lat.t2 <= c;
    (y1, delta1, y2, delta2)
}

/// One draw of a subject with the given covariates; `None` when the draw
/// is left-truncated (`L >= Y1`) and the subject never enters the study.
pub fn simulate_subject<R: Rng + ?Sized>(
    scn: &SimulationScenario,
    z1: &[f64],
    z2: &[f64],
    z3: &[f64],
    rng: &mut R,
) -> Option<SubjectRecord> {
    let lat = draw_latent(scn, [z1, z2, z3], rng);
    let c = scn.censoring.draw(rng);
    let l = scn.truncation.draw(rng);
    let (y1, delta1, y2, delta2) = observe(&lat, c);
    if matches!(scn.truncation, TruncationLaw::Uniform { .. }) && l >= y1 {
        return None;
    }
    Some(SubjectRecord {
        l,
        y1,
        delta1,
        y2,
        delta2,
        z1: z1.to_vec(),
        z2: z2.to_vec(),
        z3: z3.to_vec(),
    })
}

/// Draws subjects (covariates and times) until `n` pass left truncation.
pub fn simulate_dataset(scn: &SimulationScenario) -> Result<Dataset, DatagenError> {
    scn.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let budget = MAX_ATTEMPTS * scn.n;
    let mut records = Vec::with_capacity(scn.n);
    let mut attempts = 0;
    while records.len() < scn.n {
        if attempts >= budget {
            return Err(DatagenError::RejectionOverflow { attempts });
        }
        attempts += 1;
        let row = scn.design.generate(1, &mut rng).pop().expect("one row");
        if let Some(r) = simulate_subject(scn, &row, &row, &row, &mut rng) {
            records.push(r);
        }
    }
    Ok(Dataset::new(records)?)
}

/// Latent draws plus uniform variates for censoring and truncation,
/// reused across calibration evaluations.
struct Pilot {
    latent: Vec<LatentTimes>,
    u_cens: Vec<f64>,
    trunc: Vec<f64>,
}

fn pilot<R: Rng + ?Sized>(scn: &SimulationScenario, rng: &mut R) -> Pilot {
    let z = scn.design.generate(PILOT_SIZE, rng);
    let mut latent = Vec::with_capacity(PILOT_SIZE);
    let mut u_cens = Vec::with_capacity(PILOT_SIZE);
    let mut trunc = Vec::with_capacity(PILOT_SIZE);
    for row in &z {
        latent.push(draw_latent(scn, [row, row, row], rng));
        u_cens.push(rng.random::<f64>());
        trunc.push(scn.truncation.draw(rng));
    }
    Pilot { latent, u_cens, trunc }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// `0.2 *` the median of the latent first transition time `min(T1, T2)`.
pub fn default_truncation_bound<R: Rng + ?Sized>(scn: &SimulationScenario, rng: &mut R) -> Result<f64, DatagenError> {
    scn.validate()?;
    let p = pilot(scn, rng);
    let mut first: Vec<f64> = p.latent.iter().map(|l| l.t1.min(l.t2_direct)).collect();
    Ok(0.2 * median(&mut first))
}

fn pilot_censoring_rate(p: &Pilot, c_max: f64, truncated: bool) -> f64 {
    let mut accepted = 0usize;
    let mut censored = 0usize;
    for ((lat, u), l) in p.latent.iter().zip(&p.u_cens).zip(&p.trunc) {
        let (y1, _, _, delta2) = observe(lat, c_max * u);
        if truncated && *l >= y1 {
            continue;
        }
        accepted += 1;
        if !delta2 {
            censored += 1;
        }
    }
    if accepted == 0 {
        1.0
    } else {
        censored as f64 / accepted as f64
    }
}

/// Bisection (log scale) on the uniform censoring bound until the pilot
/// censoring rate of the terminal event is within one point of `target`.
pub fn calibrate_censoring<R: Rng + ?Sized>(scn: &SimulationScenario, target: f64, rng: &mut R) -> Result<f64, DatagenError> {
    scn.validate()?;
    let p = pilot(scn, rng);
    let truncated = matches!(scn.truncation, TruncationLaw::Uniform { .. });
    let finite: Vec<f64> = p.latent.iter().map(|l| l.t2).filter(|t| t.is_finite()).collect();
    let max_t = finite.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let (mut lo, mut hi) = ((max_t * 1e-8).ln(), (max_t * 1e3).ln());
    let rate_lo = pilot_censoring_rate(&p, lo.exp(), truncated);
    let rate_hi = pilot_censoring_rate(&p, hi.exp(), truncated);
    if !(target > rate_hi && target < rate_lo) {
        return Err(DatagenError::Unreachable {
            target,
            low: rate_hi,
            high: rate_lo,
        });
    }
    let mut rate = f64::NAN;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        rate = pilot_censoring_rate(&p, mid.exp(), truncated);
        if (rate - target).abs() <= 0.01 {
            return Ok(mid.exp());
        }
        // larger bound -> less censoring
        if rate > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(DatagenError::BisectionFailed { target, rate })
}

/// Empirical fraction of records with a censored terminal event.
pub fn censoring_rate(data: &Dataset) -> f64 {
    let censored = data.records().iter().filter(|r| !r.delta2).count();
    censored as f64 / data.len() as f64
}

/// Counter-based child seeds for replicate `i` of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeedPlan {
    pub master: u64,
}

impl ReplicateSeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// SplitMix64 finalizer applied to `master + (i + 1) * φ`; injective in `i`.
    pub fn child_seed(&self, replicate: u64) -> u64 {
        let mut z = self
            .master
            .wrapping_add(replicate.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn col(m: &[Vec<f64>], j: usize) -> Vec<f64> {
        m.iter().map(|r| r[j]).collect()
    }

    #[test]
    fn derived_dims_examples() {
        assert_eq!(derived_dims(100), 12);
        assert_eq!(derived_dims(300), 15);
        assert_eq!(derived_dims(500), 16);
    }

    #[test]
    fn ar1_independent_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gen_covariates_ar1(5000, 5, 0.0, &mut rng);
        for i in 0..5 {
            for j in 0..i {
                assert!(corr(&col(&m, i), &col(&m, j)).abs() < 0.1);
            }
        }
    }

    #[test]
    fn ar1_lag_two_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = gen_covariates_ar1(5000, 4, 0.5, &mut rng);
        assert!((corr(&col(&m, 0), &col(&m, 2)) - 0.25).abs() < 0.05);
    }

    #[test]
    fn ar1_is_deterministic() {
        let a = gen_covariates_ar1(20, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = gen_covariates_ar1(20, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn grouped_design_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gen_covariates_grouped(5000, 0.0, &mut rng);
        for i in 0..10 {
            for j in 0..i {
                assert!(corr(&col(&m, i), &col(&m, j)).abs() < 0.1);
            }
        }
        let m = gen_covariates_grouped(5000, 0.95, &mut rng);
        assert!((corr(&col(&m, 0), &col(&m, 1)) - 0.95).abs() < 0.03);
        for j in [2, 3, 7, 8, 9] {
            let c = col(&m, j);
            assert!(c.iter().all(|&x| x == 0.0 || x == 1.0));
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            assert!((mean - 0.5).abs() < 0.03, "column {j} mean {mean}");
        }
    }

    #[test]
    fn competing_exponentials() {
        let mut scn = SimulationScenario::diverging(100, 0);
        scn.gamma = 1e-8;
        scn.beta = RegressionCoefficients::zeros([1, 1, 1]);
        scn.design = CovariateDesign::Ar1 { d: 1, rho: 0.0 };
        let (tau1, tau2) = (0.3f64, 0.7f64);
        scn.weibull = WeibullBaselineSet {
            transitions: [
                WeibullParams::new(0.0, tau1.ln()),
                WeibullParams::new(0.0, tau2.ln()),
                WeibullParams::new(0.0, 0.0),
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = [0.0];
        let wins = (0..10_000)
            .filter(|_| draw_latent(&scn, [&z, &z, &z], &mut rng).t1.is_finite())
            .count();
        let p = wins as f64 / 10_000.0;
        assert!((p - tau1 / (tau1 + tau2)).abs() < 0.02, "{p}");
    }

    #[test]
    fn immediate_censoring() {
        let mut scn = SimulationScenario::diverging(100, 0);
        scn.censoring = CensoringLaw::Fixed(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = vec![0.1; scn.design.dim()];
        for _ in 0..50 {
            let r = simulate_subject(&scn, &z, &z, &z, &mut rng).expect("no truncation");
            assert!(!r.delta1 && !r.delta2);
            assert_eq!((r.y1, r.y2), (0.0, 0.0));
        }
    }

    #[test]
    fn overflowing_truncation_is_an_error() {
        let mut scn = SimulationScenario::diverging(5, 0);
        scn.censoring = CensoringLaw::Fixed(1e-9);
        scn.truncation = TruncationLaw::Uniform { l_max: 1e6 };
        let err = simulate_dataset(&scn).unwrap_err();
        assert_eq!(err, DatagenError::RejectionOverflow { attempts: 5 * MAX_ATTEMPTS });
    }

    #[test]
    fn single_subject_dataset() {
        let scn = SimulationScenario::diverging(1, 3).calibrated(0.5).unwrap();
        let data = simulate_dataset(&scn).unwrap();
        assert_eq!(data.len(), 1);
        assert!(crate::domain::validate_dataset(&data).is_empty());
    }

    #[test]
    fn unreachable_target_is_flagged() {
        let scn = SimulationScenario::diverging(100, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            calibrate_censoring(&scn, 0.0, &mut rng),
            Err(DatagenError::Unreachable { .. })
        ));
    }

    #[test]
    fn child_seeds_are_distinct_and_stable() {
        let plan = ReplicateSeedPlan::new(42);
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| plan.child_seed(i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(plan.child_seed(17), ReplicateSeedPlan::new(42).child_seed(17));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut scn = SimulationScenario::diverging(100, 0);
        scn.gamma = 0.0;
        assert!(scn.validate().is_err());
        let mut scn = SimulationScenario::grouped(100, 1.0, 0);
        assert!(scn.validate().is_err());
        scn.design = CovariateDesign::Grouped { rho: 0.5 };
        assert!(scn.validate().is_ok());
    }
}
