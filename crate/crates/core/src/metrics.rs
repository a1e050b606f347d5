//! Macro-F1, top-1 accuracy and rank-based AUROC.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric_name: String,
    pub value: f64,
    pub n_samples: usize,
    pub per_class: Option<Vec<f64>>,
}

/// Unweighted mean of per-class F1.
///
/// A class with no true positives, false positives or false negatives
/// scores 1; any other class without true positives scores 0.
pub fn f1_macro(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<EvalReport> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let classes = truth[0].len();
    if pred.iter().chain(truth).any(|v| v.len() != classes) {
        return Err(Error::ShapeMismatch("ragged label vectors".into()));
    }
    let mut counts = vec![(0usize, 0usize, 0usize); classes];
    for (p, t) in pred.iter().zip(truth) {
        for (c, (pk, tk)) in counts.iter_mut().zip(p.iter().zip(t)) {
            match (pk, tk) {
                (true, true) => c.0 += 1,
                (true, false) => c.1 += 1,
                (false, true) => c.2 += 1,
                (false, false) => {}
            }
        }
    }
    let per_class: Vec<f64> = counts
        .iter()
        .map(|&(tp, fp, fn_)| match (tp, fp + fn_) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            // 2PR/(P+R) = 2TP/(2TP+FP+FN)
            _ => 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
        })
        .collect();
    let value = if classes == 0 { 0.0 } else { per_class.iter().sum::<f64>() / classes as f64 };
    Ok(EvalReport {
        metric_name: "f1_macro".into(),
        value,
        n_samples: pred.len(),
        per_class: Some(per_class),
    })
}

pub fn top1_accuracy(pred: &[usize], truth: &[usize]) -> Result<EvalReport> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(EvalReport {
        metric_name: "top1".into(),
        value: hits as f64 / pred.len() as f64,
        n_samples: pred.len(),
        per_class: None,
    })
}

/// Mann-Whitney AUROC from midranks, O(n log n).
pub fn auroc(scores: &[f64], truth: &[bool]) -> Result<EvalReport> {
    if scores.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} targets",
            scores.len(),
            truth.len()
        )));
    }
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!("{n_pos} positives, {n_neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie block i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| truth[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(EvalReport {
        metric_name: "auroc".into(),
        value: u / (n_pos * n_neg) as f64,
        n_samples: scores.len(),
        per_class: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auroc(scores: &[f64], truth: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, si) in scores.iter().enumerate() {
            for (j, sj) in scores.iter().enumerate() {
                if truth[i] && !truth[j] {
                    den += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn f1_examples() {
        let t = vec![vec![true, false], vec![false, true], vec![true, true]];
        assert_eq!(f1_macro(&t, &t).unwrap().value, 1.0);
        let none = vec![vec![false, false]; 3];
        assert_eq!(f1_macro(&none, &t).unwrap().value, 0.0);

        // class 0: TP=1 FP=1 FN=0; class 1: TP=1 FP=0 FN=1
        let truth = vec![vec![true, true], vec![false, true]];
        let pred = vec![vec![true, true], vec![true, false]];
        let r = f1_macro(&pred, &truth).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class.unwrap().len(), 2);
    }

    #[test]
    fn f1_zero_division_convention() {
        // class 1 never appears anywhere -> 1; class 0 predicted but absent -> 0
        let truth = vec![vec![false, false]];
        let pred = vec![vec![true, false]];
        let r = f1_macro(&pred, &truth).unwrap();
        assert_eq!(r.per_class.unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(f1_macro(&[vec![true]], &[]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(f1_macro(&[vec![true]], &[vec![true, false]]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(top1_accuracy(&[1, 2], &[1]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(auroc(&[0.1], &[true, false]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn top1_examples() {
        assert_eq!(top1_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap().value, 1.0);
        assert_eq!(top1_accuracy(&[1, 2, 0], &[0, 1, 2]).unwrap().value, 0.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap().value, 0.75);
    }

    #[test]
    fn auroc_examples() {
        let truth = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &truth).unwrap().value, 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap().value, 0.0);
        assert_eq!(auroc(&[0.5; 4], &truth).unwrap().value, 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels(_))));
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise(pairs in proptest::collection::vec((0u8..20, any::<bool>()), 2..200)) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 7.0).collect();
            let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(truth.iter().any(|t| *t) && truth.iter().any(|t| !*t));
            let fast = auroc(&scores, &truth).unwrap().value;
            prop_assert!((fast - brute_auroc(&scores, &truth)).abs() < 1e-12);
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
            prop_assert!((auroc(&transformed, &truth).unwrap().value - fast).abs() < 1e-12);
        }

        #[test]
        fn f1_class_permutation_invariant(rows in proptest::collection::vec(proptest::collection::vec(any::<(bool, bool)>(), 4), 1..20)) {
            let pred: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|x| x.0).collect()).collect();
            let truth: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|x| x.1).collect()).collect();
            let perm = [2, 0, 3, 1];
            let permute = |v: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
                v.iter().map(|r| perm.iter().map(|&i| r[i]).collect()).collect()
            };
            let a = f1_macro(&pred, &truth).unwrap().value;
            let b = f1_macro(&permute(&pred), &permute(&truth)).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
