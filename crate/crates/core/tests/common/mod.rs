//! Oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use ffm::model::{cross_index, phi};
use ffm::{FeatureVector, FfmModel, ModelConfig, ModelKind};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Continuous, Gamma};

/// Random model with `F <= 5`, `k <= 4`, `d <= 64` and one example for it.
pub fn tiny_case(rng: &mut impl Rng) -> (FfmModel, FeatureVector) {
    let fields = rng.random_range(2..=5usize);
    let d = rng.random_range(1..=64usize);
    let lr = rng.random_bool(0.2);
    let config = if lr {
        ModelConfig::lr_cross(fields, d)
    } else {
        ModelConfig::ffm(fields, rng.random_range(1..=4), d)
    }
    .with_l2(if rng.random_bool(0.5) { rng.random_range(0.0..0.1) } else { 0.0 })
    .with_learning_rate(0.1);
    let normal = Normal::new(0.0, 0.6).unwrap();
    let n = config.num_params();
    let weights = (0..n).map(|_| normal.sample(rng)).collect();
    let model = FfmModel::from_parts(config, weights, vec![1.0; n], 0).unwrap();
    let mut slots: Vec<(u32, u64)> = Vec::new();
    for f in 0..fields as u32 {
        if rng.random_bool(0.85) {
            slots.push((f, rng.random_range(0..20)));
        }
    }
    if slots.len() < 2 {
        slots = vec![(0, 1), (1, 2)];
    }
    let x = FeatureVector::new(rng.random_bool(0.5), slots)
        .unwrap()
        .with_weight(rng.random_range(0.5..2.0))
        .unwrap();
    (model, x)
}

/// Worst relative error between the analytic gradient and central differences
/// with step `h`, over every coordinate whose gradient magnitude exceeds `abs_floor`.
pub fn finite_difference_error(model: &FfmModel, x: &FeatureVector, h: f64, abs_floor: f64) -> f64 {
    let k = model.config().row_len();
    let mut analytic = vec![0.0; model.weights().len()];
    for (row, g) in model.gradient(x).unwrap() {
        analytic[row * k..(row + 1) * k].copy_from_slice(&g);
    }
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for i in 0..analytic.len() {
        let w = model.weights()[i];
        probe.weights_mut()[i] = w + h;
        let up = probe.objective(x).unwrap();
        probe.weights_mut()[i] = w - h;
        let down = probe.objective(x).unwrap();
        probe.weights_mut()[i] = w;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale > abs_floor {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    worst
}

/// Raw score written straight from the model definition.
pub fn direct_score(model: &FfmModel, x: &FeatureVector) -> f64 {
    let cfg = model.config();
    let (k, d) = (cfg.row_len(), cfg.hash_space);
    let mut s = 0.0;
    for (i, a) in x.slots.iter().enumerate() {
        for b in &x.slots[i + 1..] {
            s += match cfg.kind {
                ModelKind::Ffm => {
                    let ra = model.row(phi(a.value, a.field, b.field, d));
                    let rb = model.row(phi(b.value, b.field, a.field, d));
                    (0..k).map(|c| ra[c] * rb[c]).sum::<f64>()
                }
                ModelKind::LrCross => model.row(cross_index(a.field, a.value, b.field, b.value, d))[0],
            };
        }
    }
    s
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    const XK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

    fn rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        let fc = f(c);
        let mut kron = WK[7] * fc;
        let mut gauss = WG[3] * fc;
        for j in 0..7 {
            let pair = f(c - h * XK[j]) + f(c + h * XK[j]);
            kron += WK[j] * pair;
            if j % 2 == 1 {
                gauss += WG[j / 2] * pair;
            }
        }
        (kron * h, (kron - gauss).abs() * h)
    }

    // globally adaptive: keep splitting the piece with the largest error estimate
    let mut pieces = vec![(a, b, rule(f, a, b))];
    for _ in 0..20_000 {
        let value: f64 = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * value.abs() || (value == 0.0 && err == 0.0) {
            break;
        }
        let (i, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = pieces.swap_remove(i);
        let mid = (lo + hi) / 2.0;
        pieces.push((lo, mid, rule(f, lo, mid)));
        pieces.push((mid, hi, rule(f, mid, hi)));
    }
    pieces.iter().map(|p| p.2 .0).sum()
}

/// Utility contribution by numerical integration of
/// `(label * reward - c) * Gamma(shape = beta * cost + 1, rate = beta).pdf(c)` over `[0, prob * reward]`.
pub fn utility_by_quadrature(prob: f64, label: bool, reward: f64, cost: f64, beta: f64) -> f64 {
    let t = prob * reward;
    if t == 0.0 {
        return 0.0;
    }
    let shape = beta * cost + 1.0;
    let gamma = Gamma::new(shape, beta).unwrap();
    let value = if label { reward } else { 0.0 };
    let f = move |c: f64| (value - c) * gamma.ln_pdf(c).exp();
    // split at the mode, where a narrow density peaks
    let mode = (shape - 1.0) / beta;
    let sd = shape.sqrt() / beta;
    let mut cuts = vec![0.0];
    for p in [mode - 8.0 * sd, mode - 2.0 * sd, mode, mode + 2.0 * sd, mode + 8.0 * sd] {
        if p > 0.0 && p < t {
            cuts.push(p);
        }
    }
    cuts.push(t);
    cuts.windows(2).map(|w| integrate(&f, w[0], w[1], 1e-13)).sum()
}
