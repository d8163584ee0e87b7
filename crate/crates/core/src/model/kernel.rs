//! Scoring and AdaGrad update kernels, generic over where the tables live.

use std::sync::atomic::{AtomicU64, Ordering};

use super::hash::{cross_index, phi};
use super::{FeatureVector, ModelConfig, ModelKind};
use crate::error::{Error, FailureSite, Result};

pub(crate) const PROB_EPS: f64 = 1e-9;

pub(crate) trait Tables {
    fn weight(&self, idx: usize) -> f64;
    fn accum(&self, idx: usize) -> f64;
    fn store(&mut self, idx: usize, weight: f64, accum: f64);
}

pub(crate) struct SliceTables<'a> {
    pub weights: &'a mut [f64],
    pub accum: &'a mut [f64],
}

impl Tables for SliceTables<'_> {
    #[inline(always)]
    fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }
    #[inline(always)]
    fn accum(&self, idx: usize) -> f64 {
        self.accum[idx]
    }
    #[inline(always)]
    fn store(&mut self, idx: usize, weight: f64, accum: f64) {
        self.weights[idx] = weight;
        self.accum[idx] = accum;
    }
}

/// Read-only view used for scoring.
pub(crate) struct ReadTables<'a> {
    pub weights: &'a [f64],
}

impl Tables for ReadTables<'_> {
    #[inline(always)]
    fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }
    fn accum(&self, _idx: usize) -> f64 {
        unreachable!("read-only tables")
    }
    fn store(&mut self, _idx: usize, _weight: f64, _accum: f64) {
        unreachable!("read-only tables")
    }
}

/// Shared tables for lock-free concurrent updates.
///
/// Every coordinate is an `f64` stored as bits in an `AtomicU64`. Loads and
/// stores are relaxed, so concurrent read-modify-write sequences may lose
/// updates, but a single coordinate is never torn.
#[derive(Clone, Copy)]
pub(crate) struct AtomicTables<'a> {
    pub weights: &'a [AtomicU64],
    pub accum: &'a [AtomicU64],
}

impl Tables for AtomicTables<'_> {
    #[inline(always)]
    fn weight(&self, idx: usize) -> f64 {
        f64::from_bits(self.weights[idx].load(Ordering::Relaxed))
    }
    #[inline(always)]
    fn accum(&self, idx: usize) -> f64 {
        f64::from_bits(self.accum[idx].load(Ordering::Relaxed))
    }
    #[inline(always)]
    fn store(&mut self, idx: usize, weight: f64, accum: f64) {
        self.weights[idx].store(weight.to_bits(), Ordering::Relaxed);
        self.accum[idx].store(accum.to_bits(), Ordering::Relaxed);
    }
}

#[inline]
pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Log loss of a single prediction, after clamping.
#[inline]
pub fn log_loss(p: f64, label: bool) -> f64 {
    let p = clamp_prob(p);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Calls `f(row_a, row_b)` for every unordered pair of present fields.
///
/// For LR_CROSS both rows are the shared conjunction row.
#[inline]
pub(crate) fn for_each_pair(cfg: &ModelConfig, x: &FeatureVector, mut f: impl FnMut(usize, usize)) {
    let d = cfg.hash_space;
    let slots = &x.slots;
    for a in 0..slots.len() {
        let sa = slots[a];
        for sb in &slots[a + 1..] {
            match cfg.kind {
                ModelKind::Ffm => {
                    let ra = phi(sa.value, sa.field, sb.field, d);
                    let rb = phi(sb.value, sb.field, sa.field, d);
                    f(ra, rb)
                }
                ModelKind::LrCross => {
                    let r = cross_index(sa.field, sa.value, sb.field, sb.value, d);
                    f(r, r)
                }
            }
        }
    }
}

pub(crate) fn score<T: Tables>(cfg: &ModelConfig, tables: &T, x: &FeatureVector) -> f64 {
    let k = cfg.row_len();
    let mut total = 0.0;
    match cfg.kind {
        ModelKind::Ffm => for_each_pair(cfg, x, |ra, rb| {
            let (oa, ob) = (ra * k, rb * k);
            let mut dot = 0.0;
            for c in 0..k {
                dot += tables.weight(oa + c) * tables.weight(ob + c);
            }
            total += dot;
        }),
        ModelKind::LrCross => for_each_pair(cfg, x, |r, _| total += tables.weight(r)),
    }
    total
}

/// Reusable buffers for one gradient computation.
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    /// `(row, offset into grads)` for each gradient contribution.
    entries: Vec<(usize, usize)>,
    grads: Vec<f64>,
    /// Unique rows after merging, each with offset of its summed gradient.
    merged: Vec<(usize, usize)>,
}

pub(crate) struct StepOutcome {
    pub loss: f64,
}

/// Computes the per-example gradient at the current point into `scratch`.
///
/// After return, `scratch.merged` lists every touched row once, sorted by
/// row, pointing at its summed gradient.
pub(crate) fn compute_gradient<T: Tables>(
    cfg: &ModelConfig,
    tables: &T,
    x: &FeatureVector,
    scratch: &mut Scratch,
) -> Result<StepOutcome> {
    let k = cfg.row_len();
    let s = score(cfg, tables, x);
    let prob = sigmoid(s);
    let y = if x.label { 1.0 } else { 0.0 };
    let kappa = x.weight * (prob - y);
    let lambda = cfg.l2;

    scratch.entries.clear();
    scratch.grads.clear();
    scratch.merged.clear();

    let Scratch { entries, grads, .. } = scratch;
    match cfg.kind {
        ModelKind::Ffm => for_each_pair(cfg, x, |ra, rb| {
            let (oa, ob) = (ra * k, rb * k);
            let ga = grads.len();
            entries.push((ra, ga));
            for c in 0..k {
                grads.push(lambda * tables.weight(oa + c) + kappa * tables.weight(ob + c));
            }
            let gb = grads.len();
            entries.push((rb, gb));
            for c in 0..k {
                grads.push(lambda * tables.weight(ob + c) + kappa * tables.weight(oa + c));
            }
        }),
        ModelKind::LrCross => for_each_pair(cfg, x, |r, _| {
            entries.push((r, grads.len()));
            grads.push(lambda * tables.weight(r) + kappa);
        }),
    }

    // stable: duplicate rows keep pair order so the summation order is fixed
    scratch.entries.sort_by_key(|&(row, _)| row);
    let mut i = 0;
    while i < scratch.entries.len() {
        let (row, head) = scratch.entries[i];
        let mut j = i + 1;
        while j < scratch.entries.len() && scratch.entries[j].0 == row {
            let off = scratch.entries[j].1;
            for c in 0..k {
                scratch.grads[head + c] += scratch.grads[off + c];
            }
            j += 1;
        }
        scratch.merged.push((row, head));
        i = j;
    }

    let finite = s.is_finite()
        && scratch
            .merged
            .iter()
            .all(|&(_, off)| scratch.grads[off..off + k].iter().all(|g| g.is_finite()));
    if !finite {
        return Err(Error::NumericalFailure(FailureSite::default()));
    }

    Ok(StepOutcome {
        loss: x.weight * log_loss(prob, x.label),
    })
}

/// Applies the AdaGrad update for the gradient held in `scratch`.
pub(crate) fn apply_gradient<T: Tables>(cfg: &ModelConfig, tables: &mut T, scratch: &Scratch) {
    let k = cfg.row_len();
    let eta = cfg.learning_rate;
    for &(row, off) in &scratch.merged {
        let base = row * k;
        for c in 0..k {
            let g = scratch.grads[off + c];
            let idx = base + c;
            let acc = tables.accum(idx) + g * g;
            let w = tables.weight(idx) - eta * g / acc.sqrt();
            tables.store(idx, w, acc);
        }
    }
}

pub(crate) fn step<T: Tables>(
    cfg: &ModelConfig,
    tables: &mut T,
    x: &FeatureVector,
    scratch: &mut Scratch,
) -> Result<f64> {
    let out = compute_gradient(cfg, tables, x, scratch)?;
    apply_gradient(cfg, tables, scratch);
    Ok(out.loss)
}

/// Copies the summed gradient rows out of `scratch`.
pub(crate) fn export_gradient(cfg: &ModelConfig, scratch: &Scratch) -> Vec<(usize, Vec<f64>)> {
    let k = cfg.row_len();
    scratch
        .merged
        .iter()
        .map(|&(row, off)| (row, scratch.grads[off..off + k].to_vec()))
        .collect()
}
