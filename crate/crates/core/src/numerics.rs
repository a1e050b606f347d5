//! Dense `f64` vector kernels shared by every other module.

use crate::error::{Error, Result};

/// Vectors with an L2 norm at or below this are treated as degenerate.
pub const EPS_NORM: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > EPS_NORM) {
        return Err(Error::NormTooSmall { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Returns the normalized vector together with the original norm, which the
/// normalization Jacobian needs.
pub(crate) fn normalize_with_norm(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if !(n > EPS_NORM) {
        return Err(Error::NormTooSmall { norm: n });
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

/// Pulls a gradient taken w.r.t. `unit = w / |w|` back to `w`:
/// `(g - (g . unit) unit) / |w|`.
pub(crate) fn normalize_backward(unit: &[f64], norm: f64, grad: &[f64]) -> Vec<f64> {
    let proj = dot(grad, unit);
    grad.iter()
        .zip(unit)
        .map(|(g, u)| (g - proj * u) / norm)
        .collect()
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log_sum_exp(z) - z[target]` and its gradient `softmax(z) - e_target`,
/// both computed from the differences `z_k - z_target` so a near-zero loss
/// keeps full relative precision.
pub fn softmax_cross_entropy(z: &[f64], target: usize) -> (f64, Vec<f64>) {
    let zt = z[target];
    let max_other = z
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != target)
        .fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v - zt));
    let shift = max_other.max(0.0);
    let exps: Vec<f64> = z.iter().map(|v| (v - zt - shift).exp()).collect();
    let others: f64 = exps.iter().enumerate().filter(|&(k, _)| k != target).map(|(_, e)| e).sum();
    let total = exps[target] + others;
    let loss = if shift == 0.0 { others.ln_1p() } else { shift + total.ln() };
    let grad = exps
        .iter()
        .enumerate()
        .map(|(k, e)| if k == target { -others / total } else { e / total })
        .collect();
    (loss, grad)
}

pub fn stable_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    if let Some(bad) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("entry {bad}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    let h: f64 = p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum();
    // Rounding can leave a one-hot input at -0.0 or a hair below zero.
    Ok(h.max(0.0))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_matches_naive_and_keeps_tiny_losses() {
        let z = [1.0, -0.5, 2.0];
        let (l, g) = softmax_cross_entropy(&z, 2);
        assert!((l - (log_sum_exp(&z) - 2.0)).abs() < 1e-14);
        let p = stable_softmax(&z);
        assert!((g[2] - (p[2] - 1.0)).abs() < 1e-14 && (g[0] - p[0]).abs() < 1e-14);
        let (tiny, g) = softmax_cross_entropy(&[40.0, 0.0], 0);
        assert!((tiny / (-40.0f64).exp() - 1.0).abs() < 1e-12);
        assert!((g[0] / -(-40.0f64).exp() - 1.0).abs() < 1e-12);
        let (big, _) = softmax_cross_entropy(&[0.0, 800.0], 0);
        assert!((big - 800.0).abs() < 1e-9);
    }
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(l2_normalize(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::NormTooSmall { .. })));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(stable_softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = stable_softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn entropy_examples() {
        let ln2 = 2f64.ln();
        assert!((entropy(&[0.5, 0.5]).unwrap() - ln2).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(entropy(&[0.5, 0.6]).is_err());
        assert!(entropy(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }

    fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(v in vec_strategy(6), alpha in 1e-3f64..1e3) {
            prop_assume!(norm(&v) > 1e-6);
            let a = l2_normalize(&v).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let b = l2_normalize(&scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((norm(&a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_is_shift_invariant(z in vec_strategy(5)) {
            let shifted: Vec<f64> = z.iter().map(|x| x + 7.0).collect();
            let a = stable_softmax(&z);
            let b = stable_softmax(&shifted);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_never_nan_for_large_inputs(z in proptest::collection::vec(-1e6f64..1e6, 1..12)) {
            prop_assert!(stable_softmax(&z).iter().all(|x| x.is_finite()));
        }

        #[test]
        fn uniform_maximizes_entropy(raw in proptest::collection::vec(0.0f64..1.0, 2..=16)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let k = p.len();
            let h = entropy(&p).unwrap();
            let uniform = entropy(&vec![1.0 / k as f64; k]).unwrap();
            prop_assert!(h <= uniform + 1e-12);
            prop_assert!((uniform - (k as f64).ln()).abs() < 1e-12);
        }
    }
}
