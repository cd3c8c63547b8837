//! Composite prediction, threshold calibration and evaluation metrics.

use alloc::vec::Vec;

use crate::data::{Dataset, Membership};
use crate::error::{Error, Result};
use crate::nn::{forward_into, ForwardCache, MlpParams};

/// Per-head decision thresholds; a head fires when its probability is `>=` its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    pub per_task: Vec<f64>,
}

/// System decision: positive iff any head fires. The soft score is the
/// maximum head probability.
pub fn overall_predict(probs: &[f64], thresholds: &ThresholdSet) -> (bool, f64) {
    assert_eq!(probs.len(), thresholds.per_task.len(), "probabilities and thresholds differ in length");
    let hard = probs.iter().zip(&thresholds.per_task).any(|(p, t)| p >= t);
    let soft = probs.iter().copied().fold(0.0, f64::max);
    (hard, soft)
}

/// Smallest threshold whose false positive rate over `negatives` is at most
/// `target_fpr`, under the `score >= threshold` firing rule.
pub fn threshold_for_fpr(negatives: &[f64], target_fpr: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative scores"));
    }
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::Config(alloc::format!("target FPR {target_fpr} not in [0, 1]")));
    }
    let mut sorted = negatives.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let allowed = libm::floor(target_fpr * sorted.len() as f64 + 1e-9) as usize;
    if allowed >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    // Every score strictly above the (allowed + 1)-th largest fires.
    Ok(sorted[allowed].next_up())
}

/// Head label: the task label when the network has one head per task,
/// otherwise the composite label.
fn head_label(labels: &[bool], heads: usize, k: usize) -> bool {
    if heads == labels.len() {
        labels[k]
    } else {
        labels.iter().any(|&y| y)
    }
}

fn predict_all(params: &MlpParams, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let mut cache = ForwardCache::new(params);
    ds.examples()
        .iter()
        .map(|ex| {
            forward_into(params, &ex.features, &mut cache)?;
            Ok(cache.probs.clone())
        })
        .collect()
}

/// Per-head thresholds at a fixed validation false positive rate over that
/// head's negatives.
pub fn calibrate_thresholds(params: &MlpParams, validation: &Dataset, target_fpr: f64) -> Result<ThresholdSet> {
    let probs = predict_all(params, validation)?;
    let heads = params.heads();
    let per_task = (0..heads)
        .map(|k| {
            let neg: Vec<f64> = validation
                .examples()
                .iter()
                .zip(&probs)
                .filter(|(ex, _)| !head_label(&ex.labels, heads, k))
                .map(|(_, p)| p[k])
                .collect();
            if neg.is_empty() {
                return Err(Error::Calibration { task: k });
            }
            threshold_for_fpr(&neg, target_fpr)
        })
        .collect::<Result<_>>()?;
    Ok(ThresholdSet { per_task })
}

/// Mann-Whitney ROC AUC; tied positive/negative pairs count one half.
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Count, for each positive, negatives below it plus half the tied ones.
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let tied_pos = idx[i..j].iter().filter(|&&k| labels[k]).count();
        let tied_neg = (j - i) - tied_pos;
        wins += tied_pos as f64 * (neg_below as f64 + 0.5 * tied_neg as f64);
        neg_below += tied_neg;
        i = j;
    }
    Some(wins / (n_pos as f64 * n_neg as f64))
}

/// Average precision: sum of precision times recall increment over distinct
/// thresholds taken in descending score order. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let mut new_tp = 0;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            new_tp += usize::from(labels[idx[j]]);
            j += 1;
        }
        tp += new_tp;
        seen += j - i;
        if new_tp > 0 {
            ap += (tp as f64 / seen as f64) * (new_tp as f64 / n_pos as f64);
        }
        i = j;
    }
    Some(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupReport {
    pub fpr_member: Option<f64>,
    pub fpr_nonmember: Option<f64>,
    pub d_eo: Option<f64>,
    pub r_eo: Option<f64>,
}

impl GroupReport {
    fn from_rates(member: Option<f64>, nonmember: Option<f64>) -> Self {
        let (d_eo, r_eo) = match (member, nonmember) {
            (Some(a), Some(b)) => ((Some((a - b).abs())), (b > 0.0).then(|| a / b)),
            _ => (None, None),
        };
        Self { fpr_member: member, fpr_nonmember: nonmember, d_eo, r_eo }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub groups: Vec<GroupReport>,
    pub system_roc_auc: Option<f64>,
    /// Average precision of the system soft score against the overall label.
    pub system_aucpr: Option<f64>,
    pub accuracy: f64,
    /// Average precision per head.
    pub aucpr: Vec<Option<f64>>,
    pub n_eval: usize,
}

impl EvalReport {
    pub fn mean_aucpr(&self) -> Option<f64> {
        let vals: Vec<f64> = self.aucpr.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// System-level evaluation. Group false positive rates use system negatives
/// with observed membership only; unknown membership still counts toward
/// AUC and accuracy.
pub fn evaluate(params: &MlpParams, test: &Dataset, thresholds: &ThresholdSet) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    if thresholds.per_task.len() != params.heads() {
        return Err(Error::DimensionMismatch { expected: params.heads(), actual: thresholds.per_task.len() });
    }
    let probs = predict_all(params, test)?;
    let heads = params.heads();
    let groups = test.num_groups();

    let mut soft = Vec::with_capacity(test.len());
    let mut system_labels = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    // [group][side] -> (false positives, negatives); side 0 = non-member.
    let mut fp = alloc::vec![[(0usize, 0usize); 2]; groups];
    for (ex, p) in test.examples().iter().zip(&probs) {
        let (hard, s) = overall_predict(p, thresholds);
        let y = ex.overall_label();
        soft.push(s);
        system_labels.push(y);
        correct += usize::from(hard == y);
        if !y {
            for (m, g) in ex.groups.iter().enumerate() {
                let side = match g {
                    Membership::NonMember => 0,
                    Membership::Member => 1,
                    Membership::Unknown => continue,
                };
                fp[m][side].1 += 1;
                fp[m][side].0 += usize::from(hard);
            }
        }
    }
    let rate = |(f, n): (usize, usize)| (n > 0).then(|| f as f64 / n as f64);
    let group_reports = fp.iter().map(|s| GroupReport::from_rates(rate(s[1]), rate(s[0]))).collect();

    let aucpr = (0..heads)
        .map(|k| {
            let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
            let labels: Vec<bool> = test.examples().iter().map(|ex| head_label(&ex.labels, heads, k)).collect();
            average_precision(&scores, &labels)
        })
        .collect();

    Ok(EvalReport {
        groups: group_reports,
        system_roc_auc: roc_auc(&soft, &system_labels),
        system_aucpr: average_precision(&soft, &system_labels),
        accuracy: correct as f64 / test.len() as f64,
        aucpr,
        n_eval: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::verification::{brute_average_precision as brute_ap, pairwise_roc_auc as brute_auc};

    #[test]
    fn overall_prediction_cases() {
        let th = ThresholdSet { per_task: alloc::vec![0.5, 0.5, 0.5] };
        assert_eq!(overall_predict(&[0.0, 0.0, 0.0], &th), (false, 0.0));
        assert_eq!(overall_predict(&[0.9, 0.1, 0.1], &th), (true, 0.9));
        let th2 = ThresholdSet { per_task: alloc::vec![0.95, 0.2, 0.5] };
        assert!(overall_predict(&[0.9, 0.25, 0.1], &th2).0);
        assert!(overall_predict(&[0.1, 0.9, 0.25], &ThresholdSet { per_task: alloc::vec![0.5, 0.95, 0.2] }).0);
    }

    #[test]
    fn auc_hand_enumeration() {
        // positives 0.9, 0.3 ; negatives 0.8, 0.1 -> 3 of 4 pairs ordered correctly.
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.1], &[true, false, true, false]), Some(0.75));
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn ap_hand_case() {
        // Ranked: 1 (P), 2 (N), 3 (P): AP = 1 * 1/2 + 2/3 * 1/2
        let ap = average_precision(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&[0.2], &[false]), None);
    }

    #[test]
    fn threshold_quantiles() {
        let neg: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let t = threshold_for_fpr(&neg, 0.2).unwrap();
        let flagged: Vec<f64> = neg.iter().copied().filter(|&s| s >= t).collect();
        assert_eq!(flagged, [0.8, 0.9]);
        assert!(t > 0.7 && t <= 0.8);

        assert_eq!(threshold_for_fpr(&neg, 1.0).unwrap(), 0.0);
        let t0 = threshold_for_fpr(&neg, 0.0).unwrap();
        assert!(t0 > 0.9 && neg.iter().all(|&s| s < t0));
        assert!(threshold_for_fpr(&[], 0.1).is_err());
    }

    #[test]
    fn group_report_undefined_rates() {
        let r = GroupReport::from_rates(Some(0.2), None);
        assert_eq!(r.d_eo, None);
        assert_eq!(r.r_eo, None);
        let r = GroupReport::from_rates(Some(0.2), Some(0.0));
        assert_eq!(r.d_eo, Some(0.2));
        assert_eq!(r.r_eo, None);
        let r = GroupReport::from_rates(Some(0.1), Some(0.1));
        assert_eq!((r.d_eo, r.r_eo), (Some(0.0), Some(1.0)));
    }

    fn scored(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1..=max).prop_flat_map(|n| {
            // Coarse grid so ties are common.
            (prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), n), prop::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(( s, y) in scored(200)) {
            match (roc_auc(&s, &y), brute_auc(&s, &y)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn ap_matches_brute_force((s, y) in scored(200)) {
            match (average_precision(&s, &y), brute_ap(&s, &y)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn hard_output_is_permutation_invariant(p in prop::collection::vec(0.0f64..1.0, 1..6), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let th: Vec<f64> = p.iter().map(|x| (x * 7.3).fract()).collect();
            let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(th.iter().copied()).collect();
            let base = overall_predict(&p, &ThresholdSet { per_task: th });
            pairs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (pp, tt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert_eq!(overall_predict(&pp, &ThresholdSet { per_task: tt }), base);
        }

        #[test]
        fn positive_rate_monotone_in_threshold(
            probs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..50),
            k in 0usize..3, lo in 0.0f64..1.0, hi in 0.0f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let rate = |t: f64| {
                let mut th = alloc::vec![0.5; 3];
                th[k] = t;
                let th = ThresholdSet { per_task: th };
                probs.iter().filter(|p| overall_predict(p, &th).0).count()
            };
            prop_assert!(rate(hi) <= rate(lo));
        }
    }
}
