//! Replicate-level evaluation of penalized estimates and aggregation across
//! replicates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("group layout covers {layout} coefficients but the block has {block}")]
    LayoutMismatch { layout: usize, block: usize },
    #[error("nothing to aggregate")]
    Empty,
}

/// `Δᵀ Σ Δ` with `Δ = beta_hat - beta_true`.
pub fn mse(beta_hat: &[f64], beta_true: &[f64], sigma: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let d = beta_true.len();
    if beta_hat.len() != d {
        return Err(MetricsError::DimensionMismatch {
            expected: d,
            actual: beta_hat.len(),
        });
    }
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(MetricsError::DimensionMismatch {
            expected: d,
            actual: sigma.nrows(),
        });
    }
    let delta: Vec<f64> = beta_hat.iter().zip(beta_true).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            q += delta[i] * sigma[(i, j)] * delta[j];
        }
    }
    Ok(q.max(0.0))
}

/// Sample covariance (divisor n − 1) of covariate block `k`.
pub fn sample_covariance(data: &Dataset, k: usize) -> DMatrix<f64> {
    let d = data.dims()[k];
    let n = data.len();
    let mut mean = vec![0.0; d];
    for r in data.records() {
        for (m, z) in mean.iter_mut().zip(r.covariates(k)) {
            *m += z / n as f64;
        }
    }
    let mut s = DMatrix::zeros(d, d);
    if n < 2 {
        return s;
    }
    for r in data.records() {
        let z = r.covariates(k);
        for i in 0..d {
            for j in 0..=i {
                s[(i, j)] += (z[i] - mean[i]) * (z[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = s[(i, j)] / (n - 1) as f64;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub mcv: usize,
}

pub fn confusion_counts(beta_hat: &[f64], beta_true: &[f64], eps: f64) -> ConfusionCounts {
    let (mut tp, mut fp, mut missed) = (0, 0, 0);
    for (b, t) in beta_hat.iter().zip(beta_true) {
        let selected = b.abs() >= eps;
        match (selected, *t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => missed += 1,
            (false, false) => {}
        }
    }
    ConfusionCounts { tp, fp, mcv: missed + fp }
}

/// Consecutive coefficient groups of one transition block with their
/// weights and whether the group is truly active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub active: Vec<bool>,
}

impl GroupLayout {
    /// Two active groups of sizes 2, 2 followed by inactive groups of 3, 3.
    pub fn grouped_design() -> Self {
        Self {
            sizes: vec![2, 2, 3, 3],
            weights: vec![0.2, 0.2, 0.3, 0.3],
            active: vec![true, true, false, false],
        }
    }

    fn width(&self) -> usize {
        self.sizes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesScore {
    /// Whole-group score: a group scores 1 only when every one of its
    /// coefficients is classified correctly in all three transitions.
    pub pooled: f64,
    /// Per-coefficient shares pooled over the transitions (diagnostic).
    pub share: f64,
    /// Whole-group score within each transition.
    pub per_transition: [f64; 3],
}

fn weighted(layout: &GroupLayout, g: impl Iterator<Item = f64>) -> f64 {
    layout.weights.iter().zip(g).map(|(w, v)| w * v).sum()
}

/// Grouping-effect score from per-transition selection flags. Active groups
/// must be selected, inactive groups excluded.
pub fn ges(selected: &[Vec<bool>; 3], layout: &GroupLayout) -> Result<GesScore, MetricsError> {
    let g = layout.sizes.len();
    let mut hits = vec![0usize; g];
    let mut whole = vec![true; g];
    let mut per_transition = [0.0; 3];
    for (k, block) in selected.iter().enumerate() {
        if block.len() != layout.width() {
            return Err(MetricsError::LayoutMismatch {
                layout: layout.width(),
                block: block.len(),
            });
        }
        let mut start = 0;
        let mut ok = vec![false; g];
        for (gi, &size) in layout.sizes.iter().enumerate() {
            let h = block[start..start + size]
                .iter()
                .filter(|s| **s == layout.active[gi])
                .count();
            start += size;
            hits[gi] += h;
            ok[gi] = h == size;
            whole[gi] &= ok[gi];
        }
        per_transition[k] = weighted(layout, ok.iter().map(|&o| f64::from(u8::from(o))));
    }
    Ok(GesScore {
        pooled: weighted(layout, whole.iter().map(|&o| f64::from(u8::from(o)))),
        share: weighted(layout, hits.iter().zip(&layout.sizes).map(|(h, n)| *h as f64 / (3 * n) as f64)),
        per_transition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub method: String,
    pub tp: usize,
    pub fp: usize,
    pub mcv: usize,
    pub mse: f64,
    pub mse_per_transition: [f64; 3],
    /// Selection flags of the stacked coefficient vector.
    pub selected: Vec<bool>,
    pub ges: Option<f64>,
    pub lambda: Option<f64>,
}

impl ReplicateMetrics {
    /// Metrics of one stacked estimate against the truth, with the
    /// covariate covariance of each block taken from `data`.
    pub fn evaluate(
        replicate: usize,
        method: &str,
        beta_hat: &[f64],
        beta_true: &[f64],
        data: &Dataset,
        eps: f64,
        layout: Option<&GroupLayout>,
    ) -> Result<Self, MetricsError> {
        let dims = data.dims();
        let p: usize = dims.iter().sum();
        for v in [beta_hat.len(), beta_true.len()] {
            if v != p {
                return Err(MetricsError::DimensionMismatch { expected: p, actual: v });
            }
        }
        let counts = confusion_counts(beta_hat, beta_true, eps);
        let mut mse_k = [0.0; 3];
        let mut off = 0;
        let mut selected_blocks: [Vec<bool>; 3] = Default::default();
        for k in 0..3 {
            let range = off..off + dims[k];
            mse_k[k] = mse(&beta_hat[range.clone()], &beta_true[range.clone()], &sample_covariance(data, k))?;
            selected_blocks[k] = beta_hat[range].iter().map(|b| b.abs() >= eps).collect();
            off += dims[k];
        }
        let ges = match layout {
            Some(l) => Some(ges(&selected_blocks, l)?.pooled),
            None => None,
        };
        Ok(Self {
            replicate,
            method: method.to_string(),
            tp: counts.tp,
            fp: counts.fp,
            mcv: counts.mcv,
            mse: mse_k.iter().sum(),
            mse_per_transition: mse_k,
            selected: selected_blocks.concat(),
            ges,
            lambda: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub method: String,
    pub replicates: usize,
    pub mean_tp: f64,
    pub mean_fp: f64,
    pub mean_mcv: f64,
    pub mmse: f64,
    pub sd_mse: f64,
    pub selection_frequency: Vec<f64>,
    pub mean_ges: Option<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Means of the counts, median and sample SD of MSE, selection frequencies.
/// All replicates must share one method and coefficient dimension.
pub fn aggregate(reps: &[ReplicateMetrics]) -> Result<AggregateReport, MetricsError> {
    let first = reps.first().ok_or(MetricsError::Empty)?;
    let p = first.selected.len();
    let n = reps.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateMetrics) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let mut freq = vec![0.0; p];
    for r in reps {
        if r.selected.len() != p {
            return Err(MetricsError::DimensionMismatch {
                expected: p,
                actual: r.selected.len(),
            });
        }
        for (f, s) in freq.iter_mut().zip(&r.selected) {
            if *s {
                *f += 1.0;
            }
        }
    }
    freq.iter_mut().for_each(|f| *f /= n);
    let mut mses: Vec<f64> = reps.iter().map(|r| r.mse).collect();
    let mean_mse = mses.iter().sum::<f64>() / n;
    let sd = if reps.len() > 1 {
        (mses.iter().map(|m| (m - mean_mse).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let ges: Vec<f64> = reps.iter().filter_map(|r| r.ges).collect();
    Ok(AggregateReport {
        method: first.method.clone(),
        replicates: reps.len(),
        mean_tp: mean(&|r| r.tp as f64),
        mean_fp: mean(&|r| r.fp as f64),
        mean_mcv: mean(&|r| r.mcv as f64),
        mmse: median(&mut mses),
        sd_mse: sd,
        selection_frequency: freq,
        mean_ges: (!ges.is_empty()).then(|| ges.iter().sum::<f64>() / ges.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn truth45() -> Vec<f64> {
        let mut t = vec![0.0; 45];
        for k in 0..3 {
            for j in 0..4 {
                t[15 * k + j] = 1.0;
            }
        }
        t
    }

    #[test]
    fn mse_examples() {
        let s = DMatrix::identity(3, 3);
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &s).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &s).unwrap(), 1.0);
        assert!(mse(&[1.0], &[0.0, 0.0], &s).is_err());
    }

    proptest! {
        #[test]
        fn mse_matches_double_loop(d in prop::collection::vec(-2.0f64..2.0, 3), a in prop::collection::vec(-1.0f64..1.0, 9)) {
            let m = DMatrix::from_row_slice(3, 3, &a);
            let sigma = &m * m.transpose();
            let zero = [0.0; 3];
            let mut brute = 0.0;
            for i in 0..3 { for j in 0..3 { brute += d[i] * sigma[(i, j)] * d[j]; } }
            let v = mse(&d, &zero, &sigma).unwrap();
            prop_assert!((v - brute.max(0.0)).abs() < 1e-12);
        }

        #[test]
        fn mcv_identity(hat in prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], 45)) {
            let t = truth45();
            let c = confusion_counts(&hat, &t, 1e-6);
            prop_assert_eq!(c.mcv, (12 - c.tp) + c.fp);
            prop_assert!(c.tp <= 12 && c.fp <= 33);
        }

        #[test]
        fn aggregate_is_permutation_invariant(mses in prop::collection::vec(0.0f64..5.0, 1..8), seed in 0u64..1000) {
            let reps: Vec<ReplicateMetrics> = mses.iter().enumerate().map(|(i, m)| ReplicateMetrics {
                replicate: i, method: "BAR".into(), tp: i % 3, fp: i % 2, mcv: i % 5, mse: *m,
                mse_per_transition: [*m, 0.0, 0.0], selected: vec![i % 2 == 0, true], ges: None, lambda: None,
            }).collect();
            let mut shuffled = reps.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = aggregate(&reps).unwrap();
            let b = aggregate(&shuffled).unwrap();
            prop_assert!((a.mmse - b.mmse).abs() < 1e-12);
            prop_assert!((a.sd_mse - b.sd_mse).abs() < 1e-12);
            prop_assert!((a.mean_tp - b.mean_tp).abs() < 1e-12);
            prop_assert_eq!(a.selection_frequency, b.selection_frequency);
        }
    }

    #[test]
    fn confusion_examples() {
        let t = truth45();
        assert_eq!(confusion_counts(&t, &t, 1e-6), ConfusionCounts { tp: 12, fp: 0, mcv: 0 });
        assert_eq!(confusion_counts(&[0.0; 45], &t, 1e-6), ConfusionCounts { tp: 0, fp: 0, mcv: 12 });
        assert_eq!(confusion_counts(&[0.5; 45], &t, 1e-6), ConfusionCounts { tp: 12, fp: 33, mcv: 33 });
    }

    #[test]
    fn ges_examples() {
        let l = GroupLayout::grouped_design();
        let perfect: Vec<bool> = (0..10).map(|j| j < 4).collect();
        let all = vec![true; 10];
        let none = vec![false; 10];
        let s = |b: &Vec<bool>| ges(&[b.clone(), b.clone(), b.clone()], &l).unwrap().pooled;
        assert!((s(&perfect) - 1.0).abs() < 1e-15);
        assert!((s(&all) - 0.4).abs() < 1e-15);
        assert!((s(&none) - 0.6).abs() < 1e-15);
        assert!((s(&all) + s(&none) - 1.0).abs() < 1e-15);
        let mixed = ges(&[perfect.clone(), all.clone(), none.clone()], &l).unwrap();
        assert_eq!(mixed.per_transition, [1.0, 0.4, 0.6]);
        assert_eq!(mixed.pooled, 0.0);
        assert!((mixed.share - (1.0 + 0.4 + 0.6) / 3.0).abs() < 1e-12);
        // one false positive in group 3 of transition 2 fails that group only
        let mut fp = perfect.clone();
        fp[5] = true;
        let one = ges(&[perfect.clone(), fp, perfect.clone()], &l).unwrap();
        assert!((one.pooled - 0.7).abs() < 1e-15);
        assert!((one.share - (1.0 - 0.3 / 9.0)).abs() < 1e-15);
        assert!(ges(&[vec![true; 9], all.clone(), all], &l).is_err());
    }

    fn rep(mse: f64, selected: Vec<bool>) -> ReplicateMetrics {
        ReplicateMetrics {
            replicate: 0,
            method: "BAR".into(),
            tp: 12,
            fp: 1,
            mcv: 1,
            mse,
            mse_per_transition: [mse, 0.0, 0.0],
            selected,
            ges: None,
            lambda: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate(&[rep(1.5, vec![true])]).unwrap();
        assert_eq!((one.mmse, one.sd_mse, one.mean_tp), (1.5, 0.0, 12.0));
        let two = aggregate(&[rep(1.0, vec![true]), rep(3.0, vec![false])]).unwrap();
        assert_eq!(two.mmse, 2.0);
        assert_eq!(two.selection_frequency, vec![0.5]);
        let reps: Vec<_> = (0..100).map(|i| rep(1.0, vec![i < 89])).collect();
        assert!((aggregate(&reps).unwrap().selection_frequency[0] - 0.89).abs() < 1e-12);
        assert_eq!(aggregate(&[]).unwrap_err(), MetricsError::Empty);
    }
}
