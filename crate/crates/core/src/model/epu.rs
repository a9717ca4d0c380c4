use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ArchConfig, Mode, SubNetwork, SubnetOutput};
use crate::error::{Error, Result};
use crate::pfm::{PfmKind, PfmStack};
use crate::tensor::{
    sgd_step, Activation, BatchNormMode, ParamId, ParamStore, Real, Tape, Tensor, Var,
};

/// Per-feature relative similarity scores, each in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RssVector {
    pub values: Vec<f64>,
    pub labels: Vec<PfmKind>,
}

impl RssVector {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Binary: `P(class 1)`. Multiclass: probability of the predicted class.
    pub probability: f64,
    /// Full class distribution (`[1 − p, p]` in binary mode).
    pub distribution: Vec<f64>,
    /// Binary: the tanh outputs. Multiclass: each feature's contribution to
    /// the predicted class minus its largest contribution to any other class.
    pub rss: RssVector,
    /// `N × head_width` raw head outputs.
    pub contributions: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub label: usize,
}

/// Prediction plus the cached convolution activations of every sub-network.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub prediction: Prediction,
    /// `activations[i][l]` is the `[C, h, w]` output of conv layer `l` of sub-network `i`.
    pub activations: Vec<Vec<Tensor<f32>>>,
}

/// `σ(β + Σᵢ rssᵢ)`, summing in index order.
pub fn combine_binary(beta: f64, rss: &[f64]) -> f64 {
    let logit = rss.iter().fold(0.0, |acc, &r| acc + r) + beta;
    1.0 / (1.0 + (-logit).exp())
}

/// `softmax(β + Σᵢ headᵢ)` over classes.
pub fn combine_multiclass(beta: &[f64], heads: &[Vec<f64>]) -> Vec<f64> {
    let mut logits = vec![0.0; beta.len()];
    for h in heads {
        logits.iter_mut().zip(h).for_each(|(l, v)| *l += v);
    }
    logits.iter_mut().zip(beta).for_each(|(l, b)| *l += b);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Packs feature map `index` of every stack into a `[B, 1, H, W]` tensor.
pub fn stack_inputs<T: Real>(stacks: &[&PfmStack], index: usize) -> Result<Tensor<T>> {
    let first = stacks.first().ok_or_else(|| Error::contract("empty batch"))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(stacks.len() * h * w);
    for s in stacks {
        if s.height != h || s.width != w {
            return Err(Error::dim("feature-map stacks in a batch must share dimensions"));
        }
        let map = s
            .maps
            .get(index)
            .ok_or_else(|| Error::dim(format!("stack has no feature map {index}")))?;
        data.extend(map.data.iter().map(|&v| T::from_f64_lossy(v)));
    }
    Tensor::new(&[stacks.len(), 1, h, w], data)
}

/// Recorded forward pass of the whole ensemble over one batch.
pub struct EnsembleForward<T: Real> {
    passes: Vec<(Tape<T>, SubnetOutput)>,
    batch: usize,
}

impl<T: Real> EnsembleForward<T> {
    /// `[B, head_width]` head output of sub-network `i`.
    pub fn head(&self, i: usize) -> &Tensor<T> {
        let (tape, out) = &self.passes[i];
        tape.value(out.head)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

struct CombineTape<T: Real> {
    tape: Tape<T>,
    leaves: Vec<Var>,
    probs: Var,
    loss: Var,
}

/// Loss and hit count of one training batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

/// The full learnable state: `N` sub-networks plus the bias `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpuModel<T: Real = f32> {
    pub arch: ArchConfig,
    pub mode: Mode,
    pub subnets: Vec<SubNetwork<T>>,
    /// Holds the single parameter `beta` (`[head_width]`).
    pub head: ParamStore<T>,
    beta: ParamId,
    pub pfm_labels: Vec<PfmKind>,
}

/// Builds `n_pfms` identically shaped, independently initialised
/// sub-networks from one seeded stream. `β` starts at zero.
pub fn build_model(arch: &ArchConfig, n_pfms: usize, mode: Mode, seed: u64) -> Result<EpuModel<f32>> {
    EpuModel::new(arch, n_pfms, mode, seed)
}

impl<T: Real> EpuModel<T> {
    pub fn new(arch: &ArchConfig, n_pfms: usize, mode: Mode, seed: u64) -> Result<Self> {
        arch.validate()?;
        if n_pfms == 0 {
            return Err(Error::config("the ensemble needs at least one feature map"));
        }
        if n_pfms > PfmKind::ALL.len() {
            return Err(Error::config(format!(
                "at most {} feature maps are available, asked for {n_pfms}",
                PfmKind::ALL.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subnets = (0..n_pfms)
            .map(|i| SubNetwork::new(arch, mode, &format!("sub{i}"), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut head = ParamStore::new();
        let beta = head.add("beta", Tensor::zeros(&[mode.head_width()]))?;
        Ok(Self {
            arch: arch.clone(),
            mode,
            subnets,
            head,
            beta,
            pfm_labels: PfmKind::ALL[..n_pfms].to_vec(),
        })
    }

    pub fn n_pfms(&self) -> usize {
        self.subnets.len()
    }

    pub fn beta(&self) -> &[T] {
        self.head.get(self.beta).tensor.data()
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        self.head.get_mut(self.beta).tensor.data_mut()
    }

    pub fn beta_grad(&self) -> &[T] {
        self.head.get(self.beta).grad()
    }

    pub fn param_count(&self) -> usize {
        self.head.numel() + self.subnets.iter().map(|s| s.params.numel()).sum::<usize>()
    }

    fn check_inputs(&self, inputs: &[Tensor<T>]) -> Result<usize> {
        if inputs.len() != self.subnets.len() {
            return Err(Error::dim(format!(
                "model has {} sub-networks but received {} feature maps",
                self.subnets.len(),
                inputs.len()
            )));
        }
        let b = inputs[0].shape().first().copied().unwrap_or(0);
        if b == 0 || inputs.iter().any(|t| t.shape().first() != Some(&b)) {
            return Err(Error::dim("all feature-map batches must share a positive batch size"));
        }
        Ok(b)
    }

    /// Runs every sub-network on its own tape. Sub-networks are independent
    /// and may execute on different threads.
    pub fn forward(&mut self, inputs: &[Tensor<T>], bn: BatchNormMode) -> Result<EnsembleForward<T>> {
        let batch = self.check_inputs(inputs)?;
        let passes = self
            .subnets
            .par_iter_mut()
            .zip(inputs.par_iter())
            .map(|(net, x)| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone());
                let out = match bn {
                    BatchNormMode::Train => net.forward(&mut tape, xv, bn)?,
                    BatchNormMode::Eval => net.forward_eval(&mut tape, xv)?,
                };
                Ok((tape, out))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleForward { passes, batch })
    }

    /// Records the combination `β + Σ heads → link → loss` on a small tape.
    /// Returns the tape, the head leaves and the loss node.
    fn combine_tape(&self, fwd: &EnsembleForward<T>, targets: &[usize]) -> Result<CombineTape<T>> {
        if targets.len() != fwd.batch {
            return Err(Error::dim(format!(
                "{} targets for a batch of {}",
                targets.len(),
                fwd.batch
            )));
        }
        let mut tape = Tape::new();
        let leaves: Vec<Var> = (0..fwd.passes.len())
            .map(|i| {
                let mut t = fwd.head(i).clone();
                t.requires_grad = true;
                tape.leaf(t)
            })
            .collect();
        let summed = tape.add(&leaves)?;
        let beta = tape.param(&self.head, self.beta);
        let logits = tape.add_bias(summed, beta)?;
        let (probs, loss) = match self.mode {
            Mode::Binary => {
                if targets.iter().any(|&t| t > 1) {
                    return Err(Error::contract("binary targets must be 0 or 1"));
                }
                let p = tape.activation(logits, Activation::Sigmoid)?;
                let y: Vec<T> = targets.iter().map(|&t| T::from_usize(t).unwrap()).collect();
                (p, tape.bce(p, &y)?)
            }
            Mode::Multiclass { .. } => {
                let p = tape.activation(logits, Activation::Softmax)?;
                (p, tape.nll(p, targets)?)
            }
        };
        Ok(CombineTape {
            tape,
            leaves,
            probs,
            loss,
        })
    }

    /// Mean loss of a batch without touching gradients.
    pub fn loss(&mut self, inputs: &[Tensor<T>], targets: &[usize], bn: BatchNormMode) -> Result<T> {
        let fwd = self.forward(inputs, bn)?;
        let c = self.combine_tape(&fwd, targets)?;
        Ok(c.tape.value(c.loss).data()[0])
    }

    /// Forward and backward over one batch. Gradients of every sub-network
    /// and of `β` come from the same shared loss and are accumulated into the
    /// parameter buffers.
    pub fn accumulate_gradients(&mut self, inputs: &[Tensor<T>], targets: &[usize]) -> Result<StepStats> {
        let fwd = self.forward(inputs, BatchNormMode::Train)?;
        let CombineTape {
            mut tape,
            leaves,
            probs,
            loss,
        } = self.combine_tape(&fwd, targets)?;
        tape.backward(loss, &mut self.head)?;
        let seeds: Vec<Vec<T>> = leaves
            .iter()
            .map(|&l| tape.grad(l).map(<[T]>::to_vec).unwrap_or_default())
            .collect();
        let stats = StepStats {
            loss: tape.value(loss).data()[0].to_f64().unwrap_or(f64::NAN),
            correct: self.count_correct(tape.value(probs), targets),
        };
        self.subnets
            .par_iter_mut()
            .zip(fwd.passes.into_par_iter())
            .zip(seeds.par_iter())
            .map(|((net, (mut sub_tape, out)), seed)| {
                if seed.is_empty() {
                    return Ok(());
                }
                sub_tape.backward_from(out.head, seed, &mut net.params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(stats)
    }

    fn count_correct(&self, probs: &Tensor<T>, targets: &[usize]) -> usize {
        let p: Vec<f64> = probs.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        match self.mode {
            Mode::Binary => p
                .iter()
                .zip(targets)
                .filter(|(&p, &t)| usize::from(p >= 0.5) == t)
                .count(),
            Mode::Multiclass { classes } => p
                .chunks(classes)
                .zip(targets)
                .filter(|(row, &t)| argmax(row) == t)
                .count(),
        }
    }

    /// One SGD step on one batch.
    pub fn train_step(&mut self, inputs: &[Tensor<T>], targets: &[usize], lr: T) -> Result<StepStats> {
        let stats = self.accumulate_gradients(inputs, targets)?;
        self.sgd_step(lr);
        Ok(stats)
    }

    pub fn sgd_step(&mut self, lr: T) {
        sgd_step(&mut self.head, lr);
        for s in &mut self.subnets {
            sgd_step(&mut s.params, lr);
        }
    }

    pub fn zero_grad(&mut self) {
        self.head.zero_grad();
        for s in &mut self.subnets {
            s.params.zero_grad();
        }
    }

    /// Assembles predictions from raw per-sample head outputs.
    fn predictions_from_heads(&self, heads: Vec<Vec<Vec<f64>>>) -> Vec<Prediction> {
        let beta: Vec<f64> = self.beta().iter().map(|b| b.to_f64().unwrap()).collect();
        heads
            .into_iter()
            .map(|contributions| self.prediction_from(contributions, &beta))
            .collect()
    }

    fn prediction_from(&self, contributions: Vec<Vec<f64>>, beta: &[f64]) -> Prediction {
        match self.mode {
            Mode::Binary => {
                let values: Vec<f64> = contributions.iter().map(|c| c[0]).collect();
                let p = combine_binary(beta[0], &values);
                Prediction {
                    probability: p,
                    distribution: vec![1.0 - p, p],
                    rss: RssVector {
                        values,
                        labels: self.pfm_labels.clone(),
                    },
                    contributions,
                    bias: beta.to_vec(),
                    label: usize::from(p >= 0.5),
                }
            }
            Mode::Multiclass { .. } => {
                let dist = combine_multiclass(beta, &contributions);
                let label = argmax(&dist);
                let values = contributions
                    .iter()
                    .map(|c| {
                        let rival = c
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != label)
                            .map(|(_, &v)| v)
                            .fold(f64::NEG_INFINITY, f64::max);
                        (c[label] - rival) / 2.0
                    })
                    .collect();
                Prediction {
                    probability: dist[label],
                    distribution: dist,
                    rss: RssVector {
                        values,
                        labels: self.pfm_labels.clone(),
                    },
                    contributions,
                    bias: beta.to_vec(),
                    label,
                }
            }
        }
    }

    /// Evaluation-mode predictions for a batch of stacks.
    pub fn predict_batch(&self, stacks: &[&PfmStack]) -> Result<Vec<Prediction>> {
        if stacks.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(bad) = stacks.iter().find(|s| s.count() != self.n_pfms()) {
            return Err(Error::dim(format!(
                "stack has {} feature maps, model has {} sub-networks",
                bad.count(),
                self.n_pfms()
            )));
        }
        let inputs = (0..self.n_pfms())
            .map(|i| stack_inputs::<T>(stacks, i))
            .collect::<Result<Vec<_>>>()?;
        self.check_inputs(&inputs)?;
        let u = self.mode.head_width();
        let heads: Vec<Vec<f64>> = self
            .subnets
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(net, x)| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone());
                let out = net.forward_eval(&mut tape, xv)?;
                Ok(tape.value(out.head).data().iter().map(|v| v.to_f64().unwrap()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let per_sample = (0..stacks.len())
            .map(|b| heads.iter().map(|h| h[b * u..(b + 1) * u].to_vec()).collect())
            .collect();
        Ok(self.predictions_from_heads(per_sample))
    }

    pub fn predict(&self, stack: &PfmStack) -> Result<Prediction> {
        Ok(self.predict_batch(&[stack])?.remove(0))
    }

    pub fn cast<U: Real>(&self) -> EpuModel<U> {
        EpuModel {
            arch: self.arch.clone(),
            mode: self.mode,
            subnets: self.subnets.iter().map(SubNetwork::cast).collect(),
            head: self.head.cast(),
            beta: self.beta,
            pfm_labels: self.pfm_labels.clone(),
        }
    }
}

impl EpuModel<f32> {
    /// Prediction plus every sub-network's cached conv activations.
    pub fn explain(&self, stack: &PfmStack) -> Result<Explanation> {
        if stack.count() != self.n_pfms() {
            return Err(Error::dim(format!(
                "stack has {} feature maps, model has {} sub-networks",
                stack.count(),
                self.n_pfms()
            )));
        }
        let results = self
            .subnets
            .par_iter()
            .enumerate()
            .map(|(i, net)| {
                let x = stack_inputs::<f32>(&[stack], i)?;
                net.forward_single(&x)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut contributions = Vec::with_capacity(results.len());
        let mut activations = Vec::with_capacity(results.len());
        for (head, acts) in results {
            contributions.push(head.iter().map(|&v| v as f64).collect());
            activations.push(acts);
        }
        let beta: Vec<f64> = self.beta().iter().map(|&b| b as f64).collect();
        Ok(Explanation {
            prediction: self.prediction_from(contributions, &beta),
            activations,
        })
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
