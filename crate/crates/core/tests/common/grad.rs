//! Finite-difference gradient checks, one per differentiable op plus the
//! full ensemble. Each returns the worst relative error over its seeds.

use epu::model::{ArchConfig, EpuModel, Mode};
use rand::Rng;
use epu::tensor::{Activation, BatchNormMode, RunningStats, Tensor};

use super::{away_from_zero, central_difference_with, check_leaves, distinct, project, rel_error, rng, uniform};

pub const SEEDS: u64 = 10;

fn over_seeds(f: impl Fn(u64) -> f64) -> f64 {
    (0..SEEDS).map(f).fold(0.0, f64::max)
}

pub fn conv2d() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let x = uniform(&mut r, &[1, 2, 5, 5], -1.0, 1.0);
        let k = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut r, &[3], -0.5, 0.5);
        let padded = check_leaves(&[x.clone(), k.clone(), b], |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            project(t, y, s)
        });
        let strided = check_leaves(&[x, k], |t, v| {
            let y = t.conv2d(v[0], v[1], None, 2, 0)?;
            project(t, y, s)
        });
        padded.max(strided)
    })
}

pub fn maxpool2d() -> f64 {
    over_seeds(|s| {
        let x = distinct(&mut rng(s), &[2, 2, 5, 5]);
        check_leaves(&[x], |t, v| {
            let y = t.maxpool2d(v[0], 2)?;
            project(t, y, s)
        })
    })
}

pub fn batchnorm2d() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let x = uniform(&mut r, &[3, 2, 3, 3], -2.0, 2.0);
        let g = uniform(&mut r, &[2], 0.5, 1.5);
        let b = uniform(&mut r, &[2], -0.5, 0.5);
        let train = check_leaves(&[x.clone(), g.clone(), b.clone()], |t, v| {
            let mut stats = RunningStats::new(2, 0.9);
            let y = t.batchnorm2d(v[0], v[1], v[2], BatchNormMode::Train, &mut stats, 1e-5)?;
            project(t, y, s)
        });
        let eval = check_leaves(&[x, g, b], |t, v| {
            let mut stats = RunningStats::<f64> {
                mean: vec![0.3, -0.2],
                var: vec![1.5, 0.7],
                momentum: 0.9,
            };
            let y = t.batchnorm2d(v[0], v[1], v[2], BatchNormMode::Eval, &mut stats, 1e-5)?;
            project(t, y, s)
        });
        train.max(eval)
    })
}

pub fn dense() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let x = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let w = uniform(&mut r, &[3, 2], -1.0, 1.0);
        let b = uniform(&mut r, &[2], -1.0, 1.0);
        check_leaves(&[x, w, b], |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            project(t, y, s)
        })
    })
}

pub fn activations() -> f64 {
    over_seeds(|s| {
        let x = away_from_zero(&mut rng(s), &[3, 4]);
        [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Softmax]
            .into_iter()
            .map(|kind| {
                check_leaves(&[x.clone()], |t, v| {
                    let y = t.activation(v[0], kind)?;
                    project(t, y, s)
                })
            })
            .fold(0.0, f64::max)
    })
}

pub fn elementwise() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let a = uniform(&mut r, &[2, 3, 2, 2], -1.0, 1.0);
        let b = uniform(&mut r, &[2, 3, 2, 2], -1.0, 1.0);
        let bias = uniform(&mut r, &[3], -1.0, 1.0);
        let sum = check_leaves(&[a.clone(), b], |t, v| {
            let y = t.add(&[v[0], v[1], v[0]])?;
            let y = t.reshape(y, &[4, 6])?;
            project(t, y, s)
        });
        let rows = uniform(&mut r, &[4, 3], -1.0, 1.0);
        let biased = check_leaves(&[rows, bias], |t, v| {
            let y = t.add_bias(v[0], v[1])?;
            project(t, y, s)
        });
        let mean = check_leaves(&[a], |t, v| {
            let y = t.activation(v[0], Activation::Tanh)?;
            Ok(t.mean(y))
        });
        sum.max(biased).max(mean)
    })
}

pub fn losses() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let z = uniform(&mut r, &[5], -3.0, 3.0);
        let targets: Vec<f64> = (0..5).map(|i| ((i + s as usize) % 2) as f64).collect();
        let bce = check_leaves(&[z], |t, v| {
            let p = t.activation(v[0], Activation::Sigmoid)?;
            t.bce(p, &targets)
        });
        let logits = uniform(&mut r, &[4, 3], -2.0, 2.0);
        let classes: Vec<usize> = (0..4).map(|i| (i + s as usize) % 3).collect();
        let nll = check_leaves(&[logits], |t, v| {
            let p = t.activation(v[0], Activation::Softmax)?;
            t.nll(p, &classes)
        });
        bce.max(nll)
    })
}

/// Smallest gap between the two largest values of any 2×2 window.
fn pool_margin(y: &Tensor<f64>) -> f64 {
    let s = y.shape();
    let (h, w) = (s[2], s[3]);
    let mut margin = f64::INFINITY;
    for plane in y.data().chunks(h * w) {
        for by in (0..h).step_by(2) {
            for bx in (0..w).step_by(2) {
                let mut vals: Vec<f64> = (by..(by + 2).min(h))
                    .flat_map(|yy| (bx..(bx + 2).min(w)).map(move |xx| (yy, xx)))
                    .map(|(yy, xx)| plane[yy * w + xx])
                    .collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals.len() > 1 {
                    margin = margin.min(vals[0] - vals[1]);
                }
            }
        }
    }
    margin
}

/// conv → pool → dense → sigmoid → BCE with every tensor a leaf. Inputs are
/// redrawn until no pooling window is within 0.05 of a tie, so the step
/// never crosses a switch of the max.
pub fn composed() -> f64 {
    over_seeds(|s| {
        let mut r = rng(s);
        let (x, k, kb) = loop {
            let x = uniform(&mut r, &[2, 1, 6, 6], -1.0, 1.0);
            let k = uniform(&mut r, &[2, 1, 3, 3], -1.0, 1.0);
            let kb = uniform(&mut r, &[2], 0.2, 0.5);
            let mut t = epu::tensor::Tape::new();
            let (xv, kv, bv) = (t.leaf(x.clone()), t.leaf(k.clone()), t.leaf(kb.clone()));
            let y = t.conv2d(xv, kv, Some(bv), 1, 0).unwrap();
            if pool_margin(t.value(y)) >= 0.05 {
                break (x, k, kb);
            }
        };
        let w = uniform(&mut r, &[8, 1], -0.5, 0.5);
        let b = uniform(&mut r, &[1], -0.1, 0.1);
        check_leaves(&[x, k, kb, w, b], |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 0)?;
            let y = t.maxpool2d(y, 2)?;
            let y = t.flatten(y)?;
            let y = t.dense(y, v[3], v[4])?;
            let p = t.activation(y, Activation::Sigmoid)?;
            t.bce(p, &[0.0, 1.0])
        })
    })
}

/// Full desk-preset ensemble with four sub-networks on a batch of two.
/// Each seed checks one entry of every tensor of one sub-network (rotating)
/// plus the bias, using central differences with `step`.
///
/// ReLU and max-pool switch points lie within a 1e-3 step of many units in
/// a network this size, so only small steps isolate the local derivative.
pub fn desk_ensemble(step: f64) -> f64 {
    over_seeds(|s| {
        let mut model = EpuModel::<f64>::new(&ArchConfig::desk(), 4, Mode::Binary, 100 + s).unwrap();
        let mut r = rng(200 + s);
        let side = model.arch.input_side;
        let inputs: Vec<Tensor<f64>> = (0..4).map(|_| uniform(&mut r, &[2, 1, side, side], -1.0, 1.0)).collect();
        let targets = [0usize, 1];
        model.zero_grad();
        model.accumulate_gradients(&inputs, &targets).unwrap();
        let loss_at = |m: &mut EpuModel<f64>| -> f64 {
            m.loss(&inputs, &targets, BatchNormMode::Train).unwrap()
        };
        let mut worst: f64 = 0.0;
        let beta0 = model.beta()[0];
        let analytic = model.beta_grad()[0];
        let numeric = central_difference_with(
            |x| {
                let mut m = model.clone();
                m.beta_mut()[0] = x;
                loss_at(&mut m)
            },
            beta0,
            step,
        );
        worst = worst.max(rel_error(analytic, numeric));
        let net = (s % 4) as usize;
        let tensors = model.subnets[net].params.len();
        for j in 0..tensors {
            let (k, analytic, x0) = {
                let p = model.subnets[net].params.iter().nth(j).unwrap();
                let k = r.gen_range(0..p.tensor.numel());
                (k, p.grad()[k], p.tensor.data()[k])
            };
            let numeric = central_difference_with(
                |x| {
                    let mut m = model.clone();
                    m.subnets[net].params.iter_mut().nth(j).unwrap().tensor.data_mut()[k] = x;
                    loss_at(&mut m)
                },
                x0,
                step,
            );
            worst = worst.max(rel_error(analytic, numeric));
        }
        worst
    })
}

