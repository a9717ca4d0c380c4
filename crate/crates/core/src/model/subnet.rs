use rand::Rng;

use super::{ArchConfig, Mode};
use crate::error::{Error, Result};
use crate::tensor::{
    Activation, BatchNormMode, Init, ParamId, ParamStore, Real, RunningStats, Tape, Tensor, Var,
};

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer {
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct NormLayer {
    gamma: ParamId,
    beta: ParamId,
    stats: RunningStats<f64>,
}

/// One ensemble member: a convolutional feature extractor followed by a
/// dense head whose tanh output is the relative similarity score.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetwork<T: Real = f32> {
    pub arch: ArchConfig,
    pub mode: Mode,
    pub params: ParamStore<T>,
    convs: Vec<ConvLayer>,
    norms: Vec<NormLayer>,
    fc: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

/// Handles produced by [`SubNetwork::forward`].
#[derive(Debug, Clone)]
pub struct SubnetOutput {
    /// `[B, head_width]` tanh outputs.
    pub head: Var,
    /// Post-ReLU output of every convolution, in layer order.
    pub conv_activations: Vec<Var>,
}

impl<T: Real> SubNetwork<T> {
    /// Kaiming-uniform convolution and dense weights, zero biases, unit
    /// batch-norm scale. Parameter names are prefixed with `prefix`.
    pub fn new<R: Rng>(arch: &ArchConfig, mode: Mode, prefix: &str, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamStore::new();
        let k = arch.kernel_size;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut cin = 1;
        for (b, &(count, depth)) in arch.blocks.iter().enumerate() {
            for _ in 0..count {
                let idx = convs.len();
                let kernel = params.add_init(
                    &format!("{prefix}.conv{idx}.weight"),
                    &[depth, cin, k, k],
                    Init::KaimingUniform { fan_in: cin * k * k },
                    rng,
                )?;
                let bias = params.add_init(&format!("{prefix}.conv{idx}.bias"), &[depth], Init::Constant(0.0), rng)?;
                convs.push(ConvLayer { kernel, bias });
                cin = depth;
            }
            let gamma = params.add_init(&format!("{prefix}.bn{b}.gamma"), &[depth], Init::Constant(1.0), rng)?;
            let beta = params.add_init(&format!("{prefix}.bn{b}.beta"), &[depth], Init::Constant(0.0), rng)?;
            norms.push(NormLayer {
                gamma,
                beta,
                stats: RunningStats::new(depth, arch.bn_momentum),
            });
        }
        let flat = arch.flat_features();
        let fc = (
            params.add_init(
                &format!("{prefix}.fc.weight"),
                &[flat, arch.fc_width],
                Init::KaimingUniform { fan_in: flat },
                rng,
            )?,
            params.add_init(&format!("{prefix}.fc.bias"), &[arch.fc_width], Init::Constant(0.0), rng)?,
        );
        let u = mode.head_width();
        let head = (
            params.add_init(
                &format!("{prefix}.head.weight"),
                &[arch.fc_width, u],
                Init::KaimingUniform { fan_in: arch.fc_width },
                rng,
            )?,
            params.add_init(&format!("{prefix}.head.bias"), &[u], Init::Constant(0.0), rng)?,
        );
        Ok(Self {
            arch: arch.clone(),
            mode,
            params,
            convs,
            norms,
            fc,
            head,
        })
    }

    pub fn conv_layers(&self) -> usize {
        self.convs.len()
    }

    /// Running statistics of each batch-norm layer, in order.
    pub fn running_stats(&self) -> impl Iterator<Item = &RunningStats<f64>> {
        self.norms.iter().map(|n| &n.stats)
    }

    pub fn running_stats_mut(&mut self) -> impl Iterator<Item = &mut RunningStats<f64>> {
        self.norms.iter_mut().map(|n| &mut n.stats)
    }

    /// Sets every parameter (not the running statistics) to zero.
    pub fn zero_params(&mut self) {
        for p in self.params.iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn zero_head(&mut self) {
        for id in [self.head.0, self.head.1] {
            self.params
                .get_mut(id)
                .tensor
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = T::zero());
        }
    }

    /// Records the forward pass of a `[B, 1, side, side]` input on `tape`.
    /// In train mode the batch-norm running statistics are updated.
    pub fn forward(&mut self, tape: &mut Tape<T>, input: Var, bn: BatchNormMode) -> Result<SubnetOutput> {
        let mut stats: Vec<RunningStats<T>> = self.norms.iter().map(|n| n.stats.cast()).collect();
        let out = self.record(tape, input, bn, &mut stats)?;
        if bn == BatchNormMode::Train {
            for (norm, s) in self.norms.iter_mut().zip(&stats) {
                norm.stats = s.cast();
            }
        }
        Ok(out)
    }

    /// Forward pass that leaves the running statistics untouched.
    pub fn forward_eval(&self, tape: &mut Tape<T>, input: Var) -> Result<SubnetOutput> {
        let mut stats: Vec<RunningStats<T>> = self.norms.iter().map(|n| n.stats.cast()).collect();
        self.record(tape, input, BatchNormMode::Eval, &mut stats)
    }

    fn record(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        bn: BatchNormMode,
        stats: &mut [RunningStats<T>],
    ) -> Result<SubnetOutput> {
        let s = tape.value(input).shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.arch.input_side || s[3] != self.arch.input_side {
            return Err(Error::dim(format!(
                "sub-network expects [B, 1, {side}, {side}] input, got {s:?}",
                side = self.arch.input_side
            )));
        }
        let pad = self.arch.kernel_size / 2;
        let eps = T::from_f64_lossy(self.arch.bn_epsilon);
        let mut x = input;
        let mut acts = Vec::with_capacity(self.convs.len());
        let mut layer = 0;
        for (b, &(count, _)) in self.arch.blocks.iter().enumerate() {
            for _ in 0..count {
                let conv = &self.convs[layer];
                let k = tape.param(&self.params, conv.kernel);
                let bias = tape.param(&self.params, conv.bias);
                let y = tape.conv2d(x, k, Some(bias), 1, pad)?;
                x = tape.activation(y, Activation::Relu)?;
                acts.push(x);
                layer += 1;
            }
            x = tape.maxpool2d(x, 2)?;
            let norm = &self.norms[b];
            let gamma = tape.param(&self.params, norm.gamma);
            let beta = tape.param(&self.params, norm.beta);
            x = tape.batchnorm2d(x, gamma, beta, bn, &mut stats[b], eps)?;
        }
        let flat = tape.flatten(x)?;
        let (w, b) = (tape.param(&self.params, self.fc.0), tape.param(&self.params, self.fc.1));
        let hidden = tape.dense(flat, w, b)?;
        let hidden = tape.activation(hidden, Activation::Relu)?;
        let (w, b) = (tape.param(&self.params, self.head.0), tape.param(&self.params, self.head.1));
        let logits = tape.dense(hidden, w, b)?;
        let head = tape.activation(logits, Activation::Tanh)?;
        Ok(SubnetOutput {
            head,
            conv_activations: acts,
        })
    }

    /// Single-image convenience: returns the head values and the cached
    /// per-layer activations as `[C, h, w]` tensors.
    pub fn forward_single(&self, pfm: &Tensor<T>) -> Result<(Vec<T>, Vec<Tensor<T>>)> {
        let side = self.arch.input_side;
        if pfm.numel() != side * side {
            return Err(Error::dim(format!(
                "feature map has {} values, sub-network expects {side}x{side}",
                pfm.numel()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.leaf(pfm.clone().reshaped(&[1, 1, side, side])?);
        let out = self.forward_eval(&mut tape, x)?;
        let acts = out
            .conv_activations
            .iter()
            .map(|&v| {
                let t = tape.value(v);
                let s = t.shape();
                Tensor::new(&s[1..], t.data().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((tape.value(out.head).data().to_vec(), acts))
    }

    pub fn cast<U: Real>(&self) -> SubNetwork<U> {
        SubNetwork {
            arch: self.arch.clone(),
            mode: self.mode,
            params: self.params.cast(),
            convs: self.convs.clone(),
            norms: self.norms.clone(),
            fc: self.fc,
            head: self.head,
        }
    }
}
