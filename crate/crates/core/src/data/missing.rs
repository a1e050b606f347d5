use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::bank::MissingPattern;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Incomplete samples keep only their text.
    ImageMissingOnly,
    /// Incomplete samples keep only their image.
    TextMissingOnly,
    /// Incomplete samples split evenly between the two.
    Mixed,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ImageMissingOnly => "image_missing_only",
            Scenario::TextMissingOnly => "text_missing_only",
            Scenario::Mixed => "mixed",
        }
    }
}

/// Half-to-even rounding of a count. A rate like 0.7 has no exact binary
/// value, so `0.7 * 45` lands a hair below the true tie 31.5; products
/// within a relative 1e-9 of a half-integer are treated as that
/// half-integer.
fn round_count(x: f64) -> usize {
    let doubled = 2.0 * x;
    let nearest = doubled.round();
    let x = if (doubled - nearest).abs() <= 1e-9 * x.max(1.0) { nearest / 2.0 } else { x };
    x.round_ties_even() as usize
}

/// Number of `(ImageMissing, TextMissing)` samples for a split of `n` at
/// missing rate `eta`.
///
/// Counts are `eta * n` (single-modality scenarios) or `eta * n / 2` (mixed,
/// per missing pattern) rounded half-to-even. In the mixed scenario the
/// text-missing count is capped by what the image-missing count leaves, which
/// only binds when both halves round up past `n`.
pub fn missing_counts(n: usize, scenario: Scenario, eta: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidMissingRate(eta));
    }
    let total = eta * n as f64;
    Ok(match scenario {
        Scenario::ImageMissingOnly => (round_count(total), 0),
        Scenario::TextMissingOnly => (0, round_count(total)),
        Scenario::Mixed => {
            let half = round_count(total / 2.0);
            (half, half.min(n - half))
        }
    })
}

/// Drops modalities from a complete split according to `scenario` and `eta`.
/// Which samples lose a modality is a seeded uniform permutation; labels and
/// order are kept.
pub fn simulate_missing(
    samples: &[Sample],
    scenario: Scenario,
    eta: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    if let Some(i) = samples
        .iter()
        .position(|s| s.pattern() != Some(MissingPattern::Complete))
    {
        return Err(Error::NotComplete(i));
    }
    let (image_missing, text_missing) = missing_counts(samples.len(), scenario, eta)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::stream(seed));

    let mut out = samples.to_vec();
    for &i in &order[..image_missing] {
        out[i].image = None;
    }
    for &i in &order[image_missing..image_missing + text_missing] {
        out[i].text = None;
    }
    Ok(out)
}

/// Seeded random split into `(train, test)` with `round(test_fraction * n)`
/// test samples.
pub fn train_test_split(
    samples: &[Sample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "test_fraction {test_fraction} not in (0, 1)"
        )));
    }
    let n_test = (test_fraction * samples.len() as f64).round_ties_even() as usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::stream(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut test_idx = test_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| samples[i].clone()).collect(),
        test_idx.iter().map(|&i| samples[i].clone()).collect(),
    ))
}
