//! Direct transcription of the relational contrastive loss as nested sums,
//! used to cross-check the Gram-matrix implementation.

use crate::bank::{ComponentKey, PrototypeBank};
use crate::error::Result;
use crate::numerics::dot;

pub fn brute_force_prc(bank: &PrototypeBank) -> Result<f64> {
    let k_classes = bank.classes();
    let unit = |k: usize, slot: usize| -> Result<Vec<f64>> {
        bank.normalized_component(&ComponentKey::class_components(k).nth(slot).unwrap())
    };
    let mut total = 0.0;
    for k in 0..k_classes {
        for u in 0..6 {
            let wu = unit(k, u)?;
            for v in 0..6 {
                if u == v {
                    continue;
                }
                let numerator = dot(&wu, &unit(k, v)?).exp();
                let mut denominator = 0.0;
                for l in 0..k_classes {
                    for o in 0..6 {
                        if (l == k && u != o) || l != k {
                            denominator += dot(&wu, &unit(l, o)?).exp();
                        }
                    }
                }
                total -= (numerator / denominator).ln();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct PrcComparison {
    pub classes: usize,
    pub dim: usize,
    pub fast: f64,
    pub brute: f64,
}

impl PrcComparison {
    pub fn abs_diff(&self) -> f64 {
        (self.fast - self.brute).abs()
    }
}

/// Compares `prc_loss` against the brute force on `count` random banks with
/// K in 1..=4 and d in 1..=8.
pub fn compare_random_banks(count: usize, seed: u64) -> Result<Vec<PrcComparison>> {
    use rand::Rng;
    let mut s = crate::rng::stream(seed);
    (0..count)
        .map(|i| {
            let classes = s.random_range(1..=4);
            let dim = s.random_range(1..=8);
            let mut bank = PrototypeBank::init(classes, dim, crate::rng::child_seed(seed, "prc-bank", i as u64))?;
            for p in bank.params_mut() {
                *p *= s.random_range(0.5..2.0);
            }
            Ok(PrcComparison {
                classes,
                dim,
                fast: crate::losses::prc_loss(&bank)?.value,
                brute: brute_force_prc(&bank)?,
            })
        })
        .collect()
}
