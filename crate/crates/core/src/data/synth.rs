//! Planted-FFM data generator with per-block drift.
//!
//! Each `(field, value, other_field)` triple owns a latent vector. A label is
//! drawn from `Bernoulli(sigmoid(bias + sum of pair dot products))`. After
//! every block the latent vectors take one Gaussian random-walk step, so
//! later blocks come from a slowly moving target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::block_sizes;
use crate::model::kernel::sigmoid;
use crate::model::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_fields: usize,
    /// Distinct values per field.
    pub cardinality: usize,
    /// Latent dimension of the planted model.
    pub latent_dim: usize,
    /// Number of temporal blocks; drift is applied between blocks.
    pub n_blocks: usize,
    /// Random-walk step per block, relative to the planted entry scale.
    pub drift: f64,
    /// Standard deviation of the planted pairwise score.
    pub score_scale: f64,
    pub bias: f64,
    /// Value-popularity skew: value index is `floor(card * u^skew)`; 1 is uniform.
    pub skew: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_fields: 8,
            cardinality: 100,
            latent_dim: 4,
            n_blocks: 1,
            drift: 0.0,
            score_scale: 1.5,
            bias: -1.2,
            skew: 2.0,
            seed: 1,
        }
    }
}

/// The ground-truth model behind a synthetic stream.
#[derive(Debug, Clone)]
pub struct PlantedFfm {
    spec: SynthSpec,
    embeddings: Vec<f64>,
    entry_scale: f64,
}

impl PlantedFfm {
    pub fn new(spec: SynthSpec, rng: &mut impl Rng) -> Self {
        let f = spec.num_fields;
        let pairs = (f * f.saturating_sub(1) / 2).max(1) as f64;
        // var(score) = pairs * k * sigma^4
        let entry_scale = (spec.score_scale.powi(2) / (pairs * spec.latent_dim as f64)).powf(0.25);
        let normal = Normal::new(0.0, entry_scale).expect("finite scale");
        let n = f * spec.cardinality * f * spec.latent_dim;
        let embeddings = (0..n).map(|_| normal.sample(rng)).collect();
        PlantedFfm {
            spec,
            embeddings,
            entry_scale,
        }
    }

    fn offset(&self, field: usize, value: usize, other: usize) -> usize {
        let s = &self.spec;
        ((field * s.cardinality + value) * s.num_fields + other) * s.latent_dim
    }

    /// True click probability of `x`.
    pub fn probability(&self, x: &FeatureVector) -> f64 {
        let k = self.spec.latent_dim;
        let mut score = self.spec.bias;
        for (a, sa) in x.slots.iter().enumerate() {
            for sb in &x.slots[a + 1..] {
                let oa = self.offset(sa.field as usize, sa.value as usize, sb.field as usize);
                let ob = self.offset(sb.field as usize, sb.value as usize, sa.field as usize);
                score += (0..k).map(|c| self.embeddings[oa + c] * self.embeddings[ob + c]).sum::<f64>();
            }
        }
        sigmoid(score)
    }

    /// One random-walk step of every latent entry.
    pub fn drift(&mut self, rng: &mut impl Rng) {
        if self.spec.drift == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.spec.drift * self.entry_scale).expect("finite drift");
        for e in &mut self.embeddings {
            *e += normal.sample(rng);
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> (FeatureVector, f64) {
        let s = &self.spec;
        let slots = (0..s.num_fields).map(|f| {
            let u: f64 = rng.random();
            let v = ((s.cardinality as f64 * u.powf(s.skew)) as usize).min(s.cardinality - 1);
            (f as u32, v as u64)
        });
        let mut x = FeatureVector::new(false, slots).expect("one slot per field");
        let p = self.probability(&x);
        x.label = rng.random::<f64>() < p;
        let reward = rng.random_range(0.5..2.0);
        let cost = p * reward * rng.random_range(0.6..1.4);
        x.reward = Some(reward);
        x.cost = Some(cost);
        (x, p)
    }
}

/// Examples with their true probabilities, `n_examples` in total, cut into
/// `spec.n_blocks` blocks with the same sizes [`super::BlockedDataset::split_blocks`] uses.
pub fn gen_synthetic_with_truth(spec: &SynthSpec, n_examples: usize) -> (Vec<FeatureVector>, Vec<f64>) {
    assert!(spec.num_fields >= 1 && spec.cardinality >= 1 && spec.latent_dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut planted = PlantedFfm::new(spec.clone(), &mut rng);
    let mut examples = Vec::with_capacity(n_examples);
    let mut truth = Vec::with_capacity(n_examples);
    let n_blocks = spec.n_blocks.clamp(1, n_examples.max(1));
    for (b, size) in block_sizes(n_examples, n_blocks).into_iter().enumerate() {
        if b > 0 {
            planted.drift(&mut rng);
        }
        for _ in 0..size {
            let (x, p) = planted.sample(&mut rng);
            examples.push(x);
            truth.push(p);
        }
    }
    (examples, truth)
}

pub fn gen_synthetic(spec: &SynthSpec, n_examples: usize) -> Vec<FeatureVector> {
    gen_synthetic_with_truth(spec, n_examples).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_examples;
    use crate::model::log_loss;

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec {
            n_blocks: 5,
            drift: 0.1,
            ..SynthSpec::default()
        };
        let render = || {
            let mut out = Vec::new();
            write_examples(&mut out, &gen_synthetic(&spec, 2000)).unwrap();
            out
        };
        assert_eq!(render(), render());
        let other = SynthSpec { seed: 2, ..spec.clone() };
        let mut out = Vec::new();
        write_examples(&mut out, &gen_synthetic(&other, 2000)).unwrap();
        assert_ne!(out, render());
    }

    #[test]
    fn planted_model_beats_constant_predictor() {
        let (xs, truth) = gen_synthetic_with_truth(&SynthSpec::default(), 20_000);
        let rate = xs.iter().filter(|x| x.label).count() as f64 / xs.len() as f64;
        let planted: f64 = xs.iter().zip(&truth).map(|(x, &p)| log_loss(p, x.label)).sum();
        let constant: f64 = xs.iter().map(|x| log_loss(rate, x.label)).sum();
        assert!(planted < constant, "planted {planted} vs constant {constant}");
        assert!(rate > 0.05 && rate < 0.6, "base rate {rate}");
    }

    #[test]
    fn drift_moves_the_target() {
        let spec = SynthSpec {
            drift: 0.5,
            n_blocks: 2,
            ..SynthSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut planted = PlantedFfm::new(spec, &mut rng);
        let x = FeatureVector::new(false, (0..8u32).map(|f| (f, 3))).unwrap();
        let before = planted.probability(&x);
        planted.drift(&mut rng);
        assert_ne!(before, planted.probability(&x));
    }

    #[test]
    fn no_drift_keeps_blocks_identically_distributed() {
        let spec = SynthSpec {
            n_blocks: 4,
            ..SynthSpec::default()
        };
        let (xs, truth) = gen_synthetic_with_truth(&spec, 40_000);
        let means: Vec<f64> = truth.chunks(10_000).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for m in &means {
            assert!((m - means[0]).abs() < 0.01, "{means:?}");
        }
        assert!(xs.iter().all(|x| x.cost.is_some() && x.reward.is_some()));
    }
}
