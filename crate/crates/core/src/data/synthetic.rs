//! Gaussian class clusters on the unit sphere, one cluster set per modality,
//! used in place of frozen-encoder features.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Sample, Task};
use crate::error::{Error, Result};
use crate::numerics;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Weight of the class-specific direction relative to the shared one
    /// before the mean is projected to the unit sphere.
    pub class_sep: f64,
    /// Per-coordinate standard deviation of the additive noise.
    pub noise_sigma: f64,
    /// 1.0 puts all class signal in the image modality, 0.0 all of it in
    /// text, 0.5 splits it evenly.
    pub modality_skew: f64,
    /// Use the same class direction in both modalities, as an aligned
    /// image-text encoder would; each modality keeps its own shared offset.
    /// When false the two modalities' class directions are independent.
    pub aligned: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            dim: 16,
            n_per_class: 200,
            class_sep: 3.0,
            noise_sigma: 0.15,
            modality_skew: 0.5,
            aligned: true,
            seed: 20_240_611,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.classes < 2 {
            return bad("classes must be >= 2");
        }
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.n_per_class < 1 {
            return bad("n_per_class must be >= 1");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be > 0");
        }
        if !(self.class_sep >= 0.0 && self.class_sep.is_finite()) {
            return bad("class_sep must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.modality_skew) {
            return bad("modality_skew must be in [0, 1]");
        }
        Ok(())
    }

    /// Class-signal weight of the image and text modalities.
    fn signal_weights(&self) -> (f64, f64) {
        (
            (2.0 * self.modality_skew).min(1.0),
            (2.0 * (1.0 - self.modality_skew)).min(1.0),
        )
    }

    /// Per-class unit means `(image, text)`.
    pub fn class_means(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        self.validate()?;
        let mut s = rng::stream(rng::child_seed(self.seed, "means", 0));
        let shared_img = random_unit(&mut s, self.dim);
        let shared_txt = random_unit(&mut s, self.dim);
        let (w_img, w_txt) = self.signal_weights();
        (0..self.classes)
            .map(|_| {
                let u_img = random_unit(&mut s, self.dim);
                // Drawn either way so image means do not depend on `aligned`.
                let own_txt = random_unit(&mut s, self.dim);
                let u_txt = if self.aligned { u_img.clone() } else { own_txt };
                Ok((
                    mix_mean(&shared_img, &u_img, w_img * self.class_sep)?,
                    mix_mean(&shared_txt, &u_txt, w_txt * self.class_sep)?,
                ))
            })
            .collect()
    }
}

fn random_unit(s: &mut Stream, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(s)).collect();
        if let Ok(u) = numerics::l2_normalize(&v) {
            return u;
        }
    }
}

fn mix_mean(shared: &[f64], own: &[f64], weight: f64) -> Result<Vec<f64>> {
    if weight == 0.0 {
        return Ok(shared.to_vec());
    }
    let v: Vec<f64> = shared.iter().zip(own).map(|(a, b)| a + weight * b).collect();
    // A class direction exactly cancelling the shared one is measure-zero;
    // fall back to the class direction alone.
    numerics::l2_normalize(&v).or_else(|_| Ok(own.to_vec()))
}

/// Generates `classes * n_per_class` complete multiclass samples, grouped
/// by class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let means = spec.class_means()?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut s = rng::stream(rng::child_seed(spec.seed, "noise", 0));
    let mut samples = Vec::with_capacity(spec.classes * spec.n_per_class);
    for (k, (mu_img, mu_txt)) in means.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            let image = mu_img.iter().map(|m| m + noise.sample(&mut s)).collect();
            let text = mu_txt.iter().map(|m| m + noise.sample(&mut s)).collect();
            samples.push(Sample::complete(image, text, Label::Class(k)));
        }
    }
    Ok(Dataset {
        task: Task::Multiclass,
        classes: spec.classes,
        image_dim: spec.dim,
        text_dim: spec.dim,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_modalities_share_class_directions() {
        let sp = SyntheticSpec { class_sep: 100.0, ..spec() };
        let aligned = sp.class_means().unwrap();
        let indep = SyntheticSpec { aligned: false, ..sp }.class_means().unwrap();
        for ((ai, at), (ii, it)) in aligned.iter().zip(&indep) {
            assert_eq!(ai, ii);
            assert!(numerics::dot(ai, at) > 0.99);
            assert!(numerics::dot(ii, it) < 0.9);
        }
    }

    fn spec() -> SyntheticSpec {
        SyntheticSpec { n_per_class: 30, ..SyntheticSpec::default() }
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(&spec()).unwrap();
        let b = gen_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 4 * 30);
        let c = gen_synthetic(&SyntheticSpec { seed: 1, ..spec() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn vanishing_noise_collapses_to_means() {
        let sp = SyntheticSpec { noise_sigma: 1e-14, ..spec() };
        let means = sp.class_means().unwrap();
        let ds = gen_synthetic(&sp).unwrap();
        for s in &ds.samples {
            let k = s.label.class().unwrap();
            for (a, b) in s.image().unwrap().iter().zip(&means[k].0) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in s.text().unwrap().iter().zip(&means[k].1) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn skew_one_shares_text_means() {
        let means = SyntheticSpec { modality_skew: 1.0, ..spec() }.class_means().unwrap();
        for (_, txt) in &means[1..] {
            assert_eq!(txt, &means[0].1);
        }
        assert_ne!(means[0].0, means[1].0);
        let means = SyntheticSpec { modality_skew: 0.0, ..spec() }.class_means().unwrap();
        for (img, _) in &means[1..] {
            assert_eq!(img, &means[0].0);
        }
    }

    #[test]
    fn nearest_mean_classifier_is_perfect_when_well_separated() {
        let sp = SyntheticSpec { class_sep: 10.0, noise_sigma: 0.02, ..spec() };
        let ds = gen_synthetic(&sp).unwrap();
        // Oracle: empirical class centroids of the concatenated features.
        let dim = 2 * sp.dim;
        let mut centroids = vec![vec![0.0; dim]; sp.classes];
        for s in &ds.samples {
            let k = s.label.class().unwrap();
            for (c, x) in centroids[k].iter_mut().zip(s.image().unwrap().iter().chain(s.text().unwrap())) {
                *c += x / sp.n_per_class as f64;
            }
        }
        let correct = ds.samples.iter().filter(|s| {
            let x: Vec<f64> = s.image().unwrap().iter().chain(s.text().unwrap()).copied().collect();
            let nearest = (0..sp.classes).min_by(|&a, &b| {
                let da: f64 = centroids[a].iter().zip(&x).map(|(c, v)| (c - v).powi(2)).sum();
                let db: f64 = centroids[b].iter().zip(&x).map(|(c, v)| (c - v).powi(2)).sum();
                da.total_cmp(&db)
            }).unwrap();
            nearest == s.label.class().unwrap()
        }).count();
        assert_eq!(correct, ds.samples.len());
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            SyntheticSpec { classes: 1, ..spec() },
            SyntheticSpec { n_per_class: 0, ..spec() },
            SyntheticSpec { noise_sigma: 0.0, ..spec() },
            SyntheticSpec { modality_skew: 1.5, ..spec() },
        ] {
            assert!(matches!(gen_synthetic(&bad), Err(Error::InvalidSpec(_))));
        }
    }
}
