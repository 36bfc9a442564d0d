//! Core data types for semi-competing risks data.
//!
//! Times are stored on the study-entry scale. The sojourn time `y2 - y1`
//! used by the semi-Markov third transition is always derived, never stored.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineSpec;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("dataset must contain at least one record")]
    Empty,
    #[error("record {index}: covariate block {block} has length {actual}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        block: usize,
        expected: usize,
        actual: usize,
    },
    #[error("stacked coefficient vector has length {actual}, expected {expected}")]
    StackedLength { expected: usize, actual: usize },
    #[error("frailty variance must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("column index {column} out of range for block {block} (dimension {dim})")]
    ColumnOutOfRange { block: usize, column: usize, dim: usize },
}

/// The three transitions of the illness-death model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// Healthy to non-terminal event.
    Illness,
    /// Healthy directly to terminal event.
    Death,
    /// Non-terminal event to terminal event (semi-Markov clock).
    DeathAfterIllness,
}

impl Transition {
    pub const ALL: [Transition; 3] = [
        Transition::Illness,
        Transition::Death,
        Transition::DeathAfterIllness,
    ];

    pub fn index(self) -> usize {
        match self {
            Transition::Illness => 0,
            Transition::Death => 1,
            Transition::DeathAfterIllness => 2,
        }
    }

    pub fn from_index(k: usize) -> Option<Self> {
        Self::ALL.get(k).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::Illness => "illness",
            Transition::Death => "death",
            Transition::DeathAfterIllness => "death_after_illness",
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One subject: truncation time, observed times, event indicators and the
/// transition-specific covariate vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub l: f64,
    pub y1: f64,
    pub delta1: bool,
    pub y2: f64,
    pub delta2: bool,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
}

impl SubjectRecord {
    pub fn covariates(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.z1,
            1 => &self.z2,
            _ => &self.z3,
        }
    }

    pub fn sojourn(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn scenario(&self) -> ObservationScenario {
        classify_scenario(self)
    }
}

/// Which of the four observation patterns a record falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationScenario {
    BothObserved,
    NonTerminalThenCensored,
    TerminalOnly,
    NoneObserved,
}

impl ObservationScenario {
    /// Number of observed events, i.e. the power of the frailty in the
    /// conditional likelihood.
    pub fn event_count(self) -> u32 {
        match self {
            ObservationScenario::BothObserved => 2,
            ObservationScenario::NonTerminalThenCensored | ObservationScenario::TerminalOnly => 1,
            ObservationScenario::NoneObserved => 0,
        }
    }
}

pub fn classify_scenario(rec: &SubjectRecord) -> ObservationScenario {
    match (rec.delta1, rec.delta2) {
        (true, true) => ObservationScenario::BothObserved,
        (true, false) => ObservationScenario::NonTerminalThenCensored,
        (false, true) => ObservationScenario::TerminalOnly,
        (false, false) => ObservationScenario::NoneObserved,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    dims: [usize; 3],
}

impl Dataset {
    /// Builds a dataset, taking the covariate dimensions from the first record.
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self, DomainError> {
        let first = records.first().ok_or(DomainError::Empty)?;
        let dims = [first.z1.len(), first.z2.len(), first.z3.len()];
        for (index, rec) in records.iter().enumerate() {
            for (block, &expected) in dims.iter().enumerate() {
                let actual = rec.covariates(block).len();
                if actual != expected {
                    return Err(DomainError::DimensionMismatch {
                        index,
                        block,
                        expected,
                        actual,
                    });
                }
            }
        }
        Ok(Self { records, dims })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Stacked regression dimension `d1 + d2 + d3`.
    pub fn p(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps only the listed covariate columns of each block.
    pub fn select_columns(&self, columns: &[Vec<usize>; 3]) -> Result<Dataset, DomainError> {
        for (block, cols) in columns.iter().enumerate() {
            if let Some(&column) = cols.iter().find(|&&c| c >= self.dims[block]) {
                return Err(DomainError::ColumnOutOfRange {
                    block,
                    column,
                    dim: self.dims[block],
                });
            }
        }
        let pick = |z: &[f64], cols: &[usize]| cols.iter().map(|&c| z[c]).collect::<Vec<_>>();
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                z1: pick(&r.z1, &columns[0]),
                z2: pick(&r.z2, &columns[1]),
                z3: pick(&r.z3, &columns[2]),
                ..r.clone()
            })
            .collect();
        Ok(Dataset {
            records,
            dims: [columns[0].len(), columns[1].len(), columns[2].len()],
        })
    }

    /// Returns the records whose scenario matches, or `None` when there are none.
    pub fn filter_scenario(&self, scenario: ObservationScenario) -> Option<Dataset> {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.scenario() == scenario)
            .cloned()
            .collect();
        if records.is_empty() {
            None
        } else {
            Some(Dataset {
                records,
                dims: self.dims,
            })
        }
    }

    /// Centers and scales every covariate column to unit sample variance.
    /// Constant columns are only centered.
    pub fn standardized(&self) -> Dataset {
        let n = self.records.len() as f64;
        let mut out = self.records.clone();
        for block in 0..3 {
            for j in 0..self.dims[block] {
                let col: Vec<f64> = self.records.iter().map(|r| r.covariates(block)[j]).collect();
                let mean = col.iter().sum::<f64>() / n;
                let var = if n > 1.0 {
                    col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                for rec in out.iter_mut() {
                    let z = match block {
                        0 => &mut rec.z1,
                        1 => &mut rec.z2,
                        _ => &mut rec.z3,
                    };
                    z[j] = (z[j] - mean) / sd;
                }
            }
        }
        Dataset {
            records: out,
            dims: self.dims,
        }
    }
}

/// Regression coefficients for the three transitions, stacked in the order
/// (beta1, beta2, beta3) wherever a flat vector is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub blocks: [Vec<f64>; 3],
}

impl RegressionCoefficients {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            blocks: [vec![0.0; dims[0]], vec![0.0; dims[1]], vec![0.0; dims[2]]],
        }
    }

    pub fn new(beta1: Vec<f64>, beta2: Vec<f64>, beta3: Vec<f64>) -> Self {
        Self {
            blocks: [beta1, beta2, beta3],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.blocks[0].len(), self.blocks[1].len(), self.blocks[2].len()]
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn from_stacked(stacked: &[f64], dims: [usize; 3]) -> Result<Self, DomainError> {
        let expected: usize = dims.iter().sum();
        if stacked.len() != expected {
            return Err(DomainError::StackedLength {
                expected,
                actual: stacked.len(),
            });
        }
        let (a, rest) = stacked.split_at(dims[0]);
        let (b, c) = rest.split_at(dims[1]);
        Ok(Self::new(a.to_vec(), b.to_vec(), c.to_vec()))
    }

    /// Offsets of each block inside the stacked vector.
    pub fn offsets(dims: [usize; 3]) -> [usize; 3] {
        [0, dims[0], dims[0] + dims[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|b| b.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceParameters {
    gamma: f64,
    pub baseline: BaselineSpec,
}

impl NuisanceParameters {
    pub fn new(gamma: f64, baseline: BaselineSpec) -> Result<Self, DomainError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(DomainError::NonPositiveGamma(gamma));
        }
        Ok(Self { gamma, baseline })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub beta: RegressionCoefficients,
    pub nuisance: NuisanceParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    TruncationBeforeFirstTime,
    NoIllnessRequiresEqualTimes,
    IllnessRequiresOrderedTimes,
    NonNegativeFiniteTimes,
    FiniteCovariates,
    ZeroSojourn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub rule: Rule,
    pub severity: Severity,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self.rule {
            Rule::TruncationBeforeFirstTime => "l < y1 failed",
            Rule::NoIllnessRequiresEqualTimes => "δ1=0 requires y1=y2",
            Rule::IllnessRequiresOrderedTimes => "δ1=1 requires y1<=y2",
            Rule::NonNegativeFiniteTimes => "times must be finite and nonnegative",
            Rule::FiniteCovariates => "covariates must be finite",
            Rule::ZeroSojourn => "warning: δ1=1 with y1=y2 (zero sojourn)",
        };
        write!(f, "{text} at index {}", self.index)
    }
}

/// Checks every record invariant. Never aborts; returns all findings,
/// including warnings for zero-length sojourns.
pub fn validate_dataset(data: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, r) in data.records().iter().enumerate() {
        let mut push = |rule, severity| {
            out.push(Violation {
                index,
                rule,
                severity,
            })
        };
        let times = [r.l, r.y1, r.y2];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            push(Rule::NonNegativeFiniteTimes, Severity::Error);
        }
        if !(r.l < r.y1) {
            push(Rule::TruncationBeforeFirstTime, Severity::Error);
        }
        if !r.delta1 && r.y1 != r.y2 {
            push(Rule::NoIllnessRequiresEqualTimes, Severity::Error);
        }
        if r.delta1 && r.y1 > r.y2 {
            push(Rule::IllnessRequiresOrderedTimes, Severity::Error);
        }
        if r.delta1 && r.y1 == r.y2 {
            push(Rule::ZeroSojourn, Severity::Warning);
        }
        if r.z1.iter().chain(&r.z2).chain(&r.z3).any(|z| !z.is_finite()) {
            push(Rule::FiniteCovariates, Severity::Error);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(l: f64, y1: f64, d1: bool, y2: f64, d2: bool) -> SubjectRecord {
        SubjectRecord {
            l,
            y1,
            delta1: d1,
            y2,
            delta2: d2,
            z1: vec![0.1],
            z2: vec![0.2],
            z3: vec![0.3],
        }
    }

    #[test]
    fn truncation_violation_is_named() {
        let data = Dataset::new(vec![rec(2.0, 1.0, false, 1.0, false)]).unwrap();
        let v = validate_dataset(&data);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "l < y1 failed at index 0");
    }

    #[test]
    fn no_illness_requires_equal_times() {
        let data = Dataset::new(vec![rec(0.0, 3.0, false, 5.0, true)]).unwrap();
        let v = validate_dataset(&data);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::NoIllnessRequiresEqualTimes);
        assert!(v[0].to_string().starts_with("δ1=0 requires y1=y2"));
    }

    #[test]
    fn well_formed_dataset_has_no_findings() {
        let records = (0..10)
            .map(|i| {
                let t = 1.0 + i as f64;
                match i % 4 {
                    0 => rec(0.1, t, true, t + 1.0, true),
                    1 => rec(0.1, t, true, t + 2.0, false),
                    2 => rec(0.0, t, false, t, true),
                    _ => rec(0.5, t, false, t, false),
                }
            })
            .collect();
        let data = Dataset::new(records).unwrap();
        assert!(validate_dataset(&data).is_empty());
    }

    #[test]
    fn zero_sojourn_is_a_warning() {
        let data = Dataset::new(vec![rec(0.0, 2.0, true, 2.0, false)]).unwrap();
        let v = validate_dataset(&data);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
    }

    #[test]
    fn scenario_is_total_over_indicator_pairs() {
        use ObservationScenario::*;
        let cases = [
            (true, true, BothObserved),
            (true, false, NonTerminalThenCensored),
            (false, true, TerminalOnly),
            (false, false, NoneObserved),
        ];
        for (d1, d2, expected) in cases {
            assert_eq!(classify_scenario(&rec(0.0, 1.0, d1, 2.0, d2)), expected);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut bad = rec(0.0, 1.0, false, 1.0, false);
        bad.z2 = vec![1.0, 2.0];
        let err = Dataset::new(vec![rec(0.0, 1.0, false, 1.0, false), bad]).unwrap_err();
        assert!(matches!(err, DomainError::DimensionMismatch { index: 1, block: 1, .. }));
        assert_eq!(Dataset::new(vec![]).unwrap_err(), DomainError::Empty);
    }

    #[test]
    fn stacking_round_trips() {
        let b = RegressionCoefficients::new(vec![1.0, 2.0], vec![3.0], vec![4.0, 5.0, 6.0]);
        let s = b.stacked();
        assert_eq!(s, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(RegressionCoefficients::from_stacked(&s, b.dims()).unwrap(), b);
        assert!(RegressionCoefficients::from_stacked(&s[1..], b.dims()).is_err());
    }

    #[test]
    fn gamma_must_be_positive() {
        use crate::baselines::{BaselineSpec, WeibullBaselineSet};
        let spec = BaselineSpec::Weibull(WeibullBaselineSet::unit());
        assert!(NuisanceParameters::new(0.0, spec.clone()).is_err());
        assert!(NuisanceParameters::new(0.3, spec).is_ok());
    }
}
