//! Field-aware factorization machine and the LR-with-cross-features baseline.
//!
//! Both models share one parameterization: a hashed table of `d` rows, each
//! of length `k`, plus a per-coordinate AdaGrad accumulator of the same
//! shape. An FFM scores an example as the sum, over every unordered pair of
//! present fields `(f1, f2)`, of the dot product between the row that
//! `v_f1` uses against `f2` and the row that `v_f2` uses against `f1`.
//! LR_CROSS forces `k = 1` and hashes each pair to a single conjunction row,
//! whose scalar weight is the pair's contribution.

mod format;
pub(crate) mod hash;
pub(crate) mod kernel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use kernel::{ReadTables, Scratch, SliceTables};

pub use format::{HEADER_LEN, MAGIC, VERSION};
pub use hash::{cross_index, phi};
pub use kernel::log_loss;

/// Probability clamp applied before any log loss is taken.
pub const PROB_EPS: f64 = kernel::PROB_EPS;

/// One categorical feature value: `value` observed in column `field`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub field: u32,
    pub value: u64,
}

/// A labelled example.
///
/// Slots are kept sorted by field with at most one slot per field. Build
/// through [`FeatureVector::new`] to get that for free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub label: bool,
    pub weight: f64,
    pub slots: Vec<Slot>,
    pub cost: Option<f64>,
    pub reward: Option<f64>,
}

impl FeatureVector {
    pub fn new(label: bool, slots: impl IntoIterator<Item = (u32, u64)>) -> Result<Self> {
        let mut slots: Vec<Slot> = slots
            .into_iter()
            .map(|(field, value)| Slot { field, value })
            .collect();
        slots.sort_by_key(|s| s.field);
        if let Some(w) = slots.windows(2).find(|w| w[0].field == w[1].field) {
            return Err(Error::InvalidExample(format!(
                "field {} appears more than once",
                w[0].field
            )));
        }
        Ok(FeatureVector {
            label,
            weight: 1.0,
            slots,
            cost: None,
            reward: None,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidExample(format!("weight must be positive, got {weight}")));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_cost(mut self, cost: f64) -> Result<Self> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(Error::InvalidExample(format!("cost must be nonnegative, got {cost}")));
        }
        self.cost = Some(cost);
        Ok(self)
    }

    pub fn with_reward(mut self, reward: f64) -> Result<Self> {
        if !(reward >= 0.0 && reward.is_finite()) {
            return Err(Error::InvalidExample(format!("reward must be nonnegative, got {reward}")));
        }
        self.reward = Some(reward);
        Ok(self)
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }

    /// Checks every invariant against a model with `num_fields` fields.
    pub fn validate(&self, num_fields: usize) -> Result<()> {
        for (i, s) in self.slots.iter().enumerate() {
            if s.field as usize >= num_fields {
                return Err(Error::InvalidExample(format!(
                    "field {} out of range (model has {num_fields} fields)",
                    s.field
                )));
            }
            if i > 0 && self.slots[i - 1].field >= s.field {
                return Err(Error::InvalidExample(
                    "slots must be sorted by field with no duplicates".into(),
                ));
            }
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidExample(format!("weight must be positive, got {}", self.weight)));
        }
        if self.cost.is_some_and(|c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidExample("cost must be nonnegative".into()));
        }
        if self.reward.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidExample("reward must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ffm,
    LrCross,
}

impl ModelKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::Ffm => 0,
            ModelKind::LrCross => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Ffm),
            1 => Some(ModelKind::LrCross),
            _ => None,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ffm" => Ok(ModelKind::Ffm),
            "lr-cross" => Ok(ModelKind::LrCross),
            other => Err(Error::config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_fields: usize,
    pub latent_dim: usize,
    pub hash_space: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub init_scale: f64,
    pub seed: u64,
    pub kind: ModelKind,
}

impl ModelConfig {
    pub fn ffm(num_fields: usize, latent_dim: usize, hash_space: usize) -> Self {
        ModelConfig {
            num_fields,
            latent_dim,
            hash_space,
            learning_rate: 0.2,
            l2: 0.0,
            init_scale: 1.0,
            seed: 0,
            kind: ModelKind::Ffm,
        }
    }

    pub fn lr_cross(num_fields: usize, hash_space: usize) -> Self {
        ModelConfig {
            latent_dim: 1,
            kind: ModelKind::LrCross,
            ..Self::ffm(num_fields, 1, hash_space)
        }
    }

    pub fn with_learning_rate(mut self, eta: f64) -> Self {
        self.learning_rate = eta;
        self
    }

    pub fn with_l2(mut self, lambda: f64) -> Self {
        self.l2 = lambda;
        self
    }

    pub fn with_init_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Length of one embedding row: `k` for FFM, 1 for LR_CROSS.
    pub fn row_len(&self) -> usize {
        match self.kind {
            ModelKind::Ffm => self.latent_dim,
            ModelKind::LrCross => 1,
        }
    }

    /// Number of real parameters in the weight table.
    pub fn num_params(&self) -> usize {
        self.hash_space * self.row_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_fields < 1 {
            return Err(Error::config("num_fields must be at least 1"));
        }
        if self.latent_dim < 1 {
            return Err(Error::config("latent_dim must be at least 1"));
        }
        if self.kind == ModelKind::LrCross && self.latent_dim != 1 {
            return Err(Error::config("LR_CROSS requires latent_dim = 1"));
        }
        if self.hash_space < 1 {
            return Err(Error::config("hash_space must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config("l2 must be nonnegative"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale must be positive"));
        }
        if self.num_fields > u32::MAX as usize || self.latent_dim > u32::MAX as usize {
            return Err(Error::config("num_fields and latent_dim must fit in 32 bits"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FfmModel {
    config: ModelConfig,
    weights: Vec<f64>,
    accum: Vec<f64>,
    trained_epochs: u32,
    scratch: Scratch,
}

impl PartialEq for FfmModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.trained_epochs == other.trained_epochs
            && self.weights == other.weights
            && self.accum == other.accum
    }
}

impl FfmModel {
    /// Randomly initialized model.
    ///
    /// FFM weights are uniform in `[0, init_scale / sqrt(k))`, drawn from a
    /// generator seeded with `config.seed`. LR_CROSS weights start at zero.
    /// Every accumulator entry starts at 1.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_params();
        let weights = match config.kind {
            ModelKind::Ffm => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let scale = config.init_scale / (config.latent_dim as f64).sqrt();
                (0..n).map(|_| rng.random::<f64>() * scale).collect()
            }
            ModelKind::LrCross => vec![0.0; n],
        };
        Ok(FfmModel {
            config,
            weights,
            accum: vec![1.0; n],
            trained_epochs: 0,
            scratch: Scratch::default(),
        })
    }

    /// Assembles a model from explicit tables.
    pub fn from_parts(
        config: ModelConfig,
        weights: Vec<f64>,
        accum: Vec<f64>,
        trained_epochs: u32,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.num_params();
        if weights.len() != n || accum.len() != n {
            return Err(Error::config(format!(
                "expected {n} weights and accumulators, got {} and {}",
                weights.len(),
                accum.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("weights must be finite"));
        }
        if accum.iter().any(|g| g.is_nan() || *g < 1.0) {
            return Err(Error::config("accumulator entries must be at least 1"));
        }
        Ok(FfmModel {
            config,
            weights,
            accum,
            trained_epochs,
            scratch: Scratch::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn accum(&self) -> &[f64] {
        &self.accum
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let k = self.config.row_len();
        &self.weights[row * k..(row + 1) * k]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let k = self.config.row_len();
        &mut self.weights[row * k..(row + 1) * k]
    }

    pub fn trained_epochs(&self) -> u32 {
        self.trained_epochs
    }

    pub(crate) fn set_trained_epochs(&mut self, epochs: u32) {
        self.trained_epochs = epochs;
    }

    /// Resets every accumulator entry to 1, keeping the weights.
    pub fn reset_accum(&mut self) {
        self.accum.fill(1.0);
    }

    pub(crate) fn accum_mut(&mut self) -> &mut [f64] {
        &mut self.accum
    }

    pub fn set_learning_rate(&mut self, eta: f64) -> Result<()> {
        let config = self.config.clone().with_learning_rate(eta);
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub(crate) fn replace_tables(&mut self, weights: Vec<f64>, accum: Vec<f64>) {
        debug_assert_eq!(weights.len(), self.weights.len());
        debug_assert_eq!(accum.len(), self.accum.len());
        self.weights = weights;
        self.accum = accum;
    }

    pub fn raw_score(&self, x: &FeatureVector) -> Result<f64> {
        x.validate(self.config.num_fields)?;
        Ok(self.raw_score_unchecked(x))
    }

    pub(crate) fn raw_score_unchecked(&self, x: &FeatureVector) -> f64 {
        kernel::score(&self.config, &ReadTables { weights: &self.weights }, x)
    }

    /// Sigmoid of the raw score. Not clamped; [`log_loss`] clamps.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        Ok(kernel::sigmoid(self.raw_score(x)?))
    }

    /// Prediction clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn predict_clamped(&self, x: &FeatureVector) -> Result<f64> {
        Ok(kernel::clamp_prob(self.predict_proba(x)?))
    }

    /// One AdaGrad step on `x`; returns the weighted log loss before the update.
    pub fn sgd_step(&mut self, x: &FeatureVector) -> Result<f64> {
        x.validate(self.config.num_fields)?;
        self.sgd_step_unchecked(x)
    }

    pub(crate) fn sgd_step_unchecked(&mut self, x: &FeatureVector) -> Result<f64> {
        let mut tables = SliceTables {
            weights: &mut self.weights,
            accum: &mut self.accum,
        };
        kernel::step(&self.config, &mut tables, x, &mut self.scratch)
    }

    /// Gradient of [`FfmModel::objective`] at the current weights, one entry
    /// per touched row (sorted by row, collisions summed).
    pub fn gradient(&self, x: &FeatureVector) -> Result<Vec<(usize, Vec<f64>)>> {
        x.validate(self.config.num_fields)?;
        let mut scratch = Scratch::default();
        let tables = ReadTables { weights: &self.weights };
        kernel::compute_gradient(&self.config, &tables, x, &mut scratch)?;
        Ok(kernel::export_gradient(&self.config, &scratch))
    }

    /// Per-example training objective: weighted log loss of the unclamped
    /// prediction plus `l2 / 2` times the squared norm of every row used,
    /// counted once per pair it appears in.
    pub fn objective(&self, x: &FeatureVector) -> Result<f64> {
        x.validate(self.config.num_fields)?;
        let s = self.raw_score_unchecked(x);
        // log(1 + e^{-s}) and log(1 + e^{s}) without overflow
        let softplus = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        let data = if x.label { softplus(-s) } else { softplus(s) };
        let k = self.config.row_len();
        let mut reg = 0.0;
        kernel::for_each_pair(&self.config, x, |ra, rb| match self.config.kind {
            ModelKind::Ffm => {
                for c in 0..k {
                    reg += self.weights[ra * k + c].powi(2) + self.weights[rb * k + c].powi(2);
                }
            }
            ModelKind::LrCross => reg += self.weights[ra].powi(2),
        });
        Ok(x.weight * data + 0.5 * self.config.l2 * reg)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.weights.len() * 16);
        format::write_model(self, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::read_model(&mut &bytes[..])
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        format::write_model(self, &mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        format::read_model(&mut std::io::BufReader::new(file))
    }
}
