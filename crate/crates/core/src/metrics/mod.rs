//! Offline metrics: log loss, normalized log loss, Utility, bootstrap intervals.

mod gamma;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_loss, FeatureVector, FfmModel};

pub use gamma::{ln_gamma, regularized_lower_gamma};

/// β values reported by default.
pub const DEFAULT_BETAS: [f64; 2] = [10.0, 1000.0];

/// One scored example, everything a metric needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prob: f64,
    pub label: bool,
    pub weight: f64,
    pub cost: Option<f64>,
    pub reward: Option<f64>,
}

impl EvalRecord {
    pub fn new(prob: f64, label: bool) -> Self {
        EvalRecord {
            prob,
            label,
            weight: 1.0,
            cost: None,
            reward: None,
        }
    }

    pub fn from_example(prob: f64, x: &FeatureVector) -> Self {
        EvalRecord {
            prob,
            label: x.label,
            weight: x.weight,
            cost: x.cost,
            reward: x.reward,
        }
    }
}

/// Scores every example of `data` with `model`.
pub fn score_examples(model: &FfmModel, data: &[FeatureVector]) -> Result<Vec<EvalRecord>> {
    data.iter()
        .map(|x| Ok(EvalRecord::from_example(model.predict_proba(x)?, x)))
        .collect()
}

/// Weighted log loss sum; probabilities are clamped first.
pub fn log_loss_total(records: &[EvalRecord]) -> f64 {
    records.iter().map(|r| r.weight * log_loss(r.prob, r.label)).sum()
}

/// Weighted mean log loss.
pub fn mean_log_loss(records: &[EvalRecord]) -> f64 {
    log_loss_total(records) / records.iter().map(|r| r.weight).sum::<f64>()
}

/// Weighted positive rate, the best constant predictor.
pub fn base_rate(records: &[EvalRecord]) -> f64 {
    let (pos, total) = records.iter().fold((0.0, 0.0), |(p, t), r| {
        (p + if r.label { r.weight } else { 0.0 }, t + r.weight)
    });
    pos / total
}

/// Normalized log loss: relative improvement over the best constant predictor
/// of the evaluated set. 0 for that predictor itself, at most 1.
pub fn nll(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::DegenerateBaseline);
    }
    let p_bar = base_rate(records);
    if p_bar <= 0.0 || p_bar >= 1.0 {
        return Err(Error::DegenerateBaseline);
    }
    let baseline: f64 = records.iter().map(|r| r.weight * log_loss(p_bar, r.label)).sum();
    Ok((baseline - log_loss_total(records)) / baseline)
}

/// Utility of a single impression.
///
/// The second price is modelled as `Gamma(shape = beta * cost + 1, rate = beta)`
/// and the integral of `(label * reward - c) * density(c)` over
/// `[0, prob * reward]` is taken in closed form:
/// `label * reward * P(a, beta T) - (a / beta) * P(a + 1, beta T)`.
pub fn utility_contribution(prob: f64, label: bool, reward: f64, cost: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    if !(prob.is_finite() && (0.0..=1.0).contains(&prob)) {
        return Err(Error::config(format!("probability out of range: {prob}")));
    }
    if !(reward.is_finite() && reward >= 0.0 && cost.is_finite() && cost >= 0.0) {
        return Err(Error::config(format!("reward and cost must be finite and nonnegative, got {reward}, {cost}")));
    }
    let threshold = prob * reward;
    if threshold == 0.0 {
        return Ok(0.0);
    }
    let shape = beta * cost + 1.0;
    let x = beta * threshold;
    let value = if label { reward } else { 0.0 };
    Ok(value * regularized_lower_gamma(shape, x) - shape / beta * regularized_lower_gamma(shape + 1.0, x))
}

/// Mean of the second-price distribution for an observed cost: `cost + 1 / beta`.
pub fn second_price_mean(cost: f64, beta: f64) -> f64 {
    (beta * cost + 1.0) / beta
}

/// Summed Utility. Records must carry cost and reward. With `weighted`,
/// each contribution is multiplied by the example weight.
pub fn utility(records: &[EvalRecord], beta: f64, weighted: bool) -> Result<f64> {
    let mut total = 0.0;
    for (i, r) in records.iter().enumerate() {
        let (Some(reward), Some(cost)) = (r.reward, r.cost) else {
            return Err(Error::InvalidExample(format!("record {i} has no cost/reward for Utility")));
        };
        let u = utility_contribution(r.prob, r.label, reward, cost, beta)?;
        total += if weighted { r.weight * u } else { u };
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.90,
            seed: 0,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval of `metric` over example-level resamples.
///
/// Resamples on which the metric reports [`Error::DegenerateBaseline`] are
/// skipped; more than 10% skipped is an error.
pub fn bootstrap_ci<T, F>(data: &[T], mut metric: F, cfg: &BootstrapConfig) -> Result<(f64, f64)>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<f64>,
{
    if cfg.resamples < 100 {
        return Err(Error::config("bootstrap needs at least 100 resamples"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::config("bootstrap level must be in (0, 1)"));
    }
    if data.is_empty() {
        return Err(Error::config("cannot bootstrap an empty data set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample = Vec::with_capacity(data.len());
    let mut values = Vec::with_capacity(cfg.resamples);
    let mut skipped = 0;
    for _ in 0..cfg.resamples {
        sample.clear();
        sample.extend((0..data.len()).map(|_| data[rng.random_range(0..data.len())].clone()));
        match metric(&sample) {
            Ok(v) => values.push(v),
            Err(Error::DegenerateBaseline) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped * 10 > cfg.resamples {
        return Err(Error::TooManyDegenerateResamples {
            skipped,
            resamples: cfg.resamples,
        });
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.level) / 2.0;
    Ok((quantile(&values, tail), quantile(&values, 1.0 - tail)))
}

/// Formats a β as the JSON key used in [`MetricReport::utility`].
pub fn beta_key(beta: f64) -> String {
    format!("{beta}")
}

/// ```json
/// {"ll": 0.45, "nll": 0.03, "utility": {"10": 1.2, "1000": 0.9},
///  "ci": {"ll": [lo, hi], "nll": [lo, hi], "utility_10": [lo, hi], ...}, "n": 1000}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Weighted mean log loss.
    pub ll: f64,
    pub nll: f64,
    pub utility: BTreeMap<String, f64>,
    pub ci: BTreeMap<String, [f64; 2]>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub betas: Vec<f64>,
    pub bootstrap: Option<BootstrapConfig>,
    pub weighted_utility: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            betas: DEFAULT_BETAS.to_vec(),
            bootstrap: Some(BootstrapConfig::default()),
            weighted_utility: true,
        }
    }
}

pub fn metric_report(records: &[EvalRecord], opts: &ReportOptions) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::config("cannot report metrics on an empty data set"));
    }
    let mut utility_map = BTreeMap::new();
    for &b in &opts.betas {
        utility_map.insert(beta_key(b), utility(records, b, opts.weighted_utility)?);
    }
    let mut ci = BTreeMap::new();
    if let Some(bs) = &opts.bootstrap {
        let (lo, hi) = bootstrap_ci(records, |s| Ok(mean_log_loss(s)), bs)?;
        ci.insert("ll".to_string(), [lo, hi]);
        let (lo, hi) = bootstrap_ci(records, nll, bs)?;
        ci.insert("nll".to_string(), [lo, hi]);
        for &b in &opts.betas {
            let (lo, hi) = bootstrap_ci(records, |s| utility(s, b, opts.weighted_utility), bs)?;
            ci.insert(format!("utility_{}", beta_key(b)), [lo, hi]);
        }
    }
    Ok(MetricReport {
        ll: mean_log_loss(records),
        nll: nll(records)?,
        utility: utility_map,
        ci,
        n: records.len(),
    })
}
