//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod grad;

use epu::tensor::{ParamStore, Tape, Tensor, Var};
use epu::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn central_difference(f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    central_difference_with(f, x, FD_STEP)
}

pub fn central_difference_with(mut f: impl FnMut(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values with magnitude in `[0.1, 1)` and random sign, away from ReLU kinks.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Distinct values spaced 0.05 apart in random order, so max-pooling has no
/// near ties.
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    data.shuffle(rng);
    Tensor::new(shape, data).unwrap()
}

/// Scalar random projection of `y`, so every output element gets a
/// distinct upstream weight.
pub fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let flat = tape.flatten(y)?;
    let f = tape.value(flat).shape()[1];
    let mut r = rng(seed ^ 0x9e37);
    let w = tape.leaf(uniform(&mut r, &[f, 1], -1.0, 1.0));
    let b = tape.leaf(Tensor::zeros(&[1]));
    let out = tape.dense(flat, w, b)?;
    Ok(tape.sum(out))
}

/// Compares leaf gradients of `build` against central differences on every
/// input element. Returns the worst relative error.
pub fn check_leaves<F>(inputs: &[Tensor<f64>], build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars).unwrap();
        tape.value(loss).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.requires_grad = true;
            tape.leaf(t)
        })
        .collect();
    let loss = build(&mut tape, &vars).unwrap();
    let mut store = ParamStore::new();
    tape.backward(loss, &mut store).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).expect("leaf gradient").to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let numeric = central_difference(
                |x| {
                    let mut vals = inputs.to_vec();
                    vals[i].data_mut()[k] = x;
                    eval(&vals)
                },
                inputs[i].data()[k],
            );
            worst = worst.max(rel_error(a, numeric));
        }
    }
    worst
}

/// Pairwise Mann–Whitney AUC with half credit for ties.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Entropic correlation of cutting after bin `t`, summed directly.
pub fn yen_criterion(hist: &[f64], t: usize) -> Option<f64> {
    let total: f64 = hist.iter().sum();
    let p: Vec<f64> = hist.iter().map(|h| h / total).collect();
    let lo: f64 = p[..=t].iter().sum();
    let hi: f64 = p[t + 1..].iter().sum();
    if lo <= 0.0 || hi <= 0.0 {
        return None;
    }
    let lo_sq: f64 = p[..=t].iter().map(|v| v * v).sum();
    let hi_sq: f64 = p[t + 1..].iter().map(|v| v * v).sum();
    Some(-(lo_sq / (lo * lo)).ln() - (hi_sq / (hi * hi)).ln())
}

/// Exhaustive argmax of the criterion; earliest cut wins near-ties.
pub fn brute_yen(hist: &[f64]) -> Option<usize> {
    let scores: Vec<(usize, f64)> = (0..hist.len() - 1)
        .filter_map(|t| yen_criterion(hist, t).map(|c| (t, c)))
        .collect();
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores.iter().find(|s| s.1 >= best - 1e-12).map(|s| s.0)
}

/// Histogram entropy in bits after min–max normalisation, by counting.
pub fn brute_entropy(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Textbook sRGB (D65) to CIE L*a*b* with the tabulated white point.
pub fn reference_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = |c: u8| {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let f = |t: f64| {
        let d = 6.0 / 29.0;
        if t > d * d * d {
            t.cbrt()
        } else {
            t / (3.0 * d * d) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Jaccard of two signed index sets, by explicit set construction.
pub fn set_jaccard(a: &[i8], b: &[i8]) -> f64 {
    use std::collections::HashSet;
    let sa: HashSet<(usize, i8)> = a.iter().copied().enumerate().collect();
    let sb: HashSet<(usize, i8)> = b.iter().copied().enumerate().collect();
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}
