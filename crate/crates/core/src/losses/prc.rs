//! Relational contrastive loss over prototype components.
//!
//! Components of the same class attract; every other component, including
//! the other components of the same class, sits in the denominator.

use super::LossValueAndGrad;
use crate::bank::{PrototypeBank, COMPONENTS_PER_CLASS};
use crate::error::{Error, Result};
use crate::numerics;
use crate::scoring::NormalizedBank;

/// Loss and gradient w.r.t. the unit vectors, for `units` laid out
/// class-major with `per_class` components per class.
///
/// For anchor `a` with same-class set `P(a)` and
/// `D_a = sum_{b != a} exp(u_a . u_b)`:
/// `L = sum_a sum_{v in P(a)} [ ln D_a - u_a . u_v ]`.
pub fn relational_contrastive(units: &[Vec<f64>], per_class: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = units.len();
    if per_class < 2 || n == 0 || n % per_class != 0 {
        return Err(Error::InvalidShape(format!(
            "{n} components with {per_class} per class"
        )));
    }
    let dim = units[0].len();
    let positives = (per_class - 1) as f64;
    let class_of = |i: usize| i / per_class;

    let mut gram = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let s = numerics::dot(&units[a], &units[b]);
            gram[a * n + b] = s;
            gram[b * n + a] = s;
        }
    }
    let exp_gram: Vec<f64> = gram.iter().map(|s| s.exp()).collect();
    let denom: Vec<f64> = (0..n)
        .map(|a| (0..n).filter(|&b| b != a).map(|b| exp_gram[a * n + b]).sum())
        .collect();

    let mut value = 0.0;
    for a in 0..n {
        let ln_d = denom[a].ln();
        for b in (0..n).filter(|&b| b != a && class_of(b) == class_of(a)) {
            value += ln_d - gram[a * n + b];
        }
    }

    let mut grads = vec![vec![0.0; dim]; n];
    for a in 0..n {
        for b in (0..n).filter(|&b| b != a) {
            let same = if class_of(a) == class_of(b) { 2.0 } else { 0.0 };
            let coef = positives * (exp_gram[a * n + b] / denom[a] + exp_gram[b * n + a] / denom[b]) - same;
            for (g, u) in grads[a].iter_mut().zip(&units[b]) {
                *g += coef * u;
            }
        }
    }
    Ok((value, grads))
}

/// Relational contrastive loss over all six components of every class.
pub fn prc_loss(bank: &PrototypeBank) -> Result<LossValueAndGrad> {
    let nb = NormalizedBank::new(bank)?;
    let (value, unit_grads) = relational_contrastive(&nb.units, COMPONENTS_PER_CLASS)?;
    let grads = unit_grads
        .iter()
        .zip(nb.units.iter().zip(&nb.norms))
        .flat_map(|(g, (u, n))| numerics::normalize_backward(u, *n, g))
        .collect();
    Ok(LossValueAndGrad { value, grads })
}
