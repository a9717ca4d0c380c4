use super::conv::{col2im_add, im2col, ConvGeom};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    /// Logistic sigmoid `1 / (1 + e^-x)`, the inverse of the logit link.
    Sigmoid,
    /// Row-wise softmax over the last dimension.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Per-channel running statistics for batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T: Real = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Weight kept by the old estimate on each update.
    pub momentum: T,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize, momentum: f64) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::from_f64_lossy(momentum),
        }
    }

    pub fn cast<U: Real>(&self) -> RunningStats<U> {
        let c = |v: &T| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN));
        RunningStats {
            mean: self.mean.iter().map(c).collect(),
            var: self.var.iter().map(c).collect(),
            momentum: c(&self.momentum),
        }
    }
}

#[derive(Debug)]
enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cout: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        mode: BatchNormMode,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Reshape {
        input: Var,
    },
    Add(Vec<Var>),
    AddBias {
        input: Var,
        bias: Var,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
    Bce {
        prob: Var,
        targets: Vec<T>,
    },
    Nll {
        probs: Var,
        targets: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Probability clip used by the log-loss ops.
pub const PROB_CLIP: f64 = 1e-7;

/// Wengert list of executed operations. Nodes are appended in execution
/// order, so every node follows its inputs.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated on a non-parameter leaf by previous backward calls.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        value.requires_grad = requires_grad;
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let rg = value.requires_grad;
        self.push(value, Op::Leaf, rg)
    }

    /// Records a snapshot of a parameter's current value.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let mut t = store.get(id).tensor.clone();
        t.grad = None;
        self.push(t, Op::Param(id), true)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        let ks = self.value(kernel).shape().to_vec();
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::dim(format!(
                "conv2d expects 4-d input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        let (b, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kcin, k, k2) = (ks[0], ks[1], ks[2], ks[3]);
        if kcin != cin {
            return Err(Error::dim(format!(
                "conv2d input has {cin} channels, kernel expects {kcin}"
            )));
        }
        if k != k2 {
            return Err(Error::dim(format!("conv2d kernel must be square, got {k}x{k2}")));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d stride must be positive"));
        }
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(Error::dim(format!(
                "kernel {k} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        if let Some(bv) = bias {
            if self.value(bv).numel() != cout {
                return Err(Error::dim("conv2d bias length must equal output channels"));
            }
        }
        let geom = ConvGeom {
            cin,
            h,
            w,
            k,
            stride,
            pad: padding,
            out_h: (h + 2 * padding - k) / stride + 1,
            out_w: (w + 2 * padding - k) / stride + 1,
        };
        let (rows, p) = (geom.col_rows(), geom.col_cols());
        let mut out = vec![T::zero(); b * cout * p];
        let mut cols = vec![T::zero(); rows * p];
        let kdata = self.value(kernel).data();
        let xdata = self.value(input).data();
        for n in 0..b {
            im2col(&xdata[n * cin * h * w..(n + 1) * cin * h * w], &geom, &mut cols);
            let dst = &mut out[n * cout * p..(n + 1) * cout * p];
            T::gemm(cout, rows, p, kdata, rows as isize, 1, &cols, p as isize, 1, T::zero(), dst, p as isize, 1);
        }
        if let Some(bv) = bias {
            let bd = self.value(bv).data();
            for n in 0..b {
                for (c, &bc) in bd.iter().enumerate() {
                    let s = (n * cout + c) * p;
                    out[s..s + p].iter_mut().for_each(|v| *v = *v + bc);
                }
            }
        }
        let rg = self.requires_grad(input)
            || self.requires_grad(kernel)
            || bias.is_some_and(|bv| self.requires_grad(bv));
        let value = Tensor::new(&[b, cout, geom.out_h, geom.out_w], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cout,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling. Ragged right/bottom edges are padded with
    /// negative infinity, so the output is `ceil(H / window)`.
    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        if window == 0 {
            return Err(Error::contract("maxpool window must be positive"));
        }
        let xs = self.value(input).shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::dim(format!("maxpool2d expects 4-d input, got {xs:?}")));
        }
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h.div_ceil(window), w.div_ceil(window));
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for y in oy * window..((oy + 1) * window).min(h) {
                        for xx in ox * window..((ox + 1) * window).min(w) {
                            let i = base + y * w + xx;
                            if best_i == usize::MAX || x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        let rg = self.requires_grad(input);
        let value = Tensor::new(&[b, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool { input, argmax }, rg))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode,
        stats: &mut RunningStats<T>,
        epsilon: T,
    ) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        if xs.len() != 4 {
            return Err(Error::dim(format!("batchnorm2d expects 4-d input, got {xs:?}")));
        }
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let hw = h * w;
        let m = b * hw;
        if m == 0 {
            return Err(Error::contract("batchnorm2d needs at least one value per channel"));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::contract("batchnorm2d epsilon must be positive"));
        }
        if self.value(gamma).numel() != c
            || self.value(beta).numel() != c
            || stats.mean.len() != c
            || stats.var.len() != c
        {
            return Err(Error::dim("batchnorm2d parameter length must equal channels"));
        }
        let x = self.value(input).data();
        let mf = T::from_usize(m).unwrap();
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let (mean, var) = match mode {
                BatchNormMode::Train => {
                    let mut s = T::zero();
                    for n in 0..b {
                        let o = (n * c + ch) * hw;
                        s = s + x[o..o + hw].iter().copied().sum::<T>();
                    }
                    let mean = s / mf;
                    let mut ss = T::zero();
                    for n in 0..b {
                        let o = (n * c + ch) * hw;
                        ss = ss + x[o..o + hw].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                    }
                    let var = ss / mf;
                    let unbiased = if m > 1 {
                        ss / T::from_usize(m - 1).unwrap()
                    } else {
                        var
                    };
                    let keep = stats.momentum;
                    stats.mean[ch] = keep * stats.mean[ch] + (T::one() - keep) * mean;
                    stats.var[ch] = keep * stats.var[ch] + (T::one() - keep) * unbiased;
                    (mean, var)
                }
                BatchNormMode::Eval => (stats.mean[ch], stats.var[ch]),
            };
            let is = T::one() / (var + epsilon).sqrt();
            inv_std[ch] = is;
            for n in 0..b {
                let o = (n * c + ch) * hw;
                for i in o..o + hw {
                    xhat[i] = (x[i] - mean) * is;
                }
            }
        }
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut out = xhat.clone();
        for n in 0..b {
            for ch in 0..c {
                let o = (n * c + ch) * hw;
                out[o..o + hw].iter_mut().for_each(|v| *v = g[ch] * *v + bt[ch]);
            }
        }
        let rg = self.requires_grad(input) || self.requires_grad(gamma) || self.requires_grad(beta);
        let value = Tensor::new(&xs, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            },
            rg,
        ))
    }

    /// `input · weight + bias` for `input: [B, F]`, `weight: [F, U]`, `bias: [U]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.value(input).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::dim(format!(
                "dense cannot multiply {xs:?} by {ws:?}"
            )));
        }
        let (b, f, u) = (xs[0], xs[1], ws[1]);
        if self.value(bias).numel() != u {
            return Err(Error::dim(format!("dense bias must have {u} values")));
        }
        let mut out = vec![T::zero(); b * u];
        let bd = self.value(bias).data();
        for row in out.chunks_mut(u) {
            row.copy_from_slice(bd);
        }
        T::gemm(
            b,
            f,
            u,
            self.value(input).data(),
            f as isize,
            1,
            self.value(weight).data(),
            u as isize,
            1,
            T::one(),
            &mut out,
            u as isize,
            1,
        );
        let rg = self.requires_grad(input) || self.requires_grad(weight) || self.requires_grad(bias);
        let value = Tensor::new(&[b, u], out)?;
        Ok(self.push(value, Op::Dense { input, weight, bias }, rg))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let shape = x.shape().to_vec();
        let out: Vec<T> = match kind {
            Activation::Relu => x.data().iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            Activation::Softmax => {
                let last = *shape.last().ok_or_else(|| Error::dim("softmax of a 0-d tensor"))?;
                if last == 0 {
                    return Err(Error::dim("softmax over an empty dimension"));
                }
                let mut out = x.data().to_vec();
                for row in out.chunks_mut(last) {
                    softmax_in_place(row);
                }
                out
            }
        };
        let rg = self.requires_grad(input);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Act { input, kind }, rg))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshaped(shape)?;
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// Flattens `[B, ...]` to `[B, prod(...)]`.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).shape();
        let b = *s.first().ok_or_else(|| Error::dim("flatten of a 0-d tensor"))?;
        let rest = s[1..].iter().product();
        self.reshape(input, &[b, rest])
    }

    /// Element-wise sum of same-shaped tensors, accumulated in argument order.
    pub fn add(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::contract("add of zero tensors"))?;
        let shape = self.value(first).shape().to_vec();
        let mut acc = self.value(first).data().to_vec();
        for &v in &inputs[1..] {
            let t = self.value(v);
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!("add shape mismatch {:?} vs {:?}", shape, t.shape())));
            }
            acc.iter_mut().zip(t.data()).for_each(|(a, &b)| *a = *a + b);
        }
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        let value = Tensor::new(&shape, acc)?;
        Ok(self.push(value, Op::Add(inputs.to_vec()), rg))
    }

    /// Adds `bias: [U]` to every row of `input: [B, U]`.
    pub fn add_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let s = self.value(input).shape().to_vec();
        let u = self.value(bias).numel();
        if s.len() != 2 || s[1] != u {
            return Err(Error::dim(format!("cannot add bias of {u} to {s:?}")));
        }
        let bd = self.value(bias).data().to_vec();
        let mut out = self.value(input).data().to_vec();
        for row in out.chunks_mut(u) {
            row.iter_mut().zip(&bd).for_each(|(a, &b)| *a = *a + b);
        }
        let rg = self.requires_grad(input) || self.requires_grad(bias);
        let value = Tensor::new(&s, out)?;
        Ok(self.push(value, Op::AddBias { input, bias }, rg))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s: T = self.value(input).data().iter().copied().sum();
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(s), Op::Sum { input }, rg)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let t = self.value(input);
        let s: T = t.data().iter().copied().sum::<T>() / T::from_usize(t.numel().max(1)).unwrap();
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(s), Op::Mean { input }, rg)
    }

    /// Mean binary cross-entropy of probabilities against `{0, 1}` targets.
    /// Probabilities are clipped to `[1e-7, 1 - 1e-7]` before the log.
    pub fn bce(&mut self, prob: Var, targets: &[T]) -> Result<Var> {
        let p = self.value(prob).data();
        if p.len() != targets.len() || p.is_empty() {
            return Err(Error::dim(format!(
                "bce: {} probabilities vs {} targets",
                p.len(),
                targets.len()
            )));
        }
        let loss = p
            .iter()
            .zip(targets)
            .map(|(&p, &y)| bce_term(p, y))
            .sum::<T>()
            / T::from_usize(p.len()).unwrap();
        let rg = self.requires_grad(prob);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                prob,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `probs: [B, C]` at the target classes.
    pub fn nll(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let s = self.value(probs).shape().to_vec();
        if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
            return Err(Error::dim(format!("nll: probs {s:?} vs {} targets", targets.len())));
        }
        let c = s[1];
        if targets.iter().any(|&t| t >= c) {
            return Err(Error::contract("nll target out of range"));
        }
        let p = self.value(probs).data();
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -clip_prob(p[i * c + t]).ln())
            .sum::<T>()
            / T::from_usize(targets.len()).unwrap();
        let rg = self.requires_grad(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss. Parameter gradients are added into
    /// `params`; gradients of non-parameter leaves that require grad are added
    /// into the tape's own buffers. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var, params: &mut ParamStore<T>) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_from(loss, &[T::one()], params)
    }

    /// Reverse sweep seeded with an explicit upstream gradient for `root`.
    pub fn backward_from(&mut self, root: Var, seed: &[T], params: &mut ParamStore<T>) -> Result<()> {
        if seed.len() != self.value(root).numel() {
            return Err(Error::dim("seed gradient must match the root's shape"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed.to_vec());
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {
                    let t = &mut self.nodes[i].value;
                    match t.grad.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                        None => t.grad = Some(g),
                    }
                }
                Op::Param(id) => {
                    let p = params.get_mut(*id);
                    if p.tensor.numel() != g.len() {
                        return Err(Error::contract(format!(
                            "parameter `{}` changed shape since it was recorded",
                            p.name
                        )));
                    }
                    p.grad_mut().iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b);
                }
                op => {
                    for (input, contribution) in self.local_grads(op, i, &g) {
                        if !self.requires_grad(input) {
                            continue;
                        }
                        match grads[input.0].as_mut() {
                            Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, &b)| *a = *a + b),
                            None => grads[input.0] = Some(contribution),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each of its inputs.
    fn local_grads(&self, op: &Op<T>, i: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let out = &self.nodes[i].value;
        match op {
            Op::Leaf | Op::Param(_) => Vec::new(),
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cout,
            } => {
                let xs = self.value(*input).shape();
                let b = xs[0];
                let (rows, p) = (geom.col_rows(), geom.col_cols());
                let in_sz = geom.cin * geom.h * geom.w;
                let x = self.value(*input).data();
                let k = self.value(*kernel).data();
                let want_x = self.requires_grad(*input);
                let want_k = self.requires_grad(*kernel);
                let mut dk = vec![T::zero(); k.len()];
                let mut dx = if want_x { vec![T::zero(); x.len()] } else { Vec::new() };
                let mut cols = vec![T::zero(); rows * p];
                for n in 0..b {
                    let gn = &g[n * cout * p..(n + 1) * cout * p];
                    if want_k {
                        im2col(&x[n * in_sz..(n + 1) * in_sz], geom, &mut cols);
                        T::gemm(*cout, p, rows, gn, p as isize, 1, &cols, 1, p as isize, T::one(), &mut dk, rows as isize, 1);
                    }
                    if want_x {
                        T::gemm(rows, *cout, p, k, 1, rows as isize, gn, p as isize, 1, T::zero(), &mut cols, p as isize, 1);
                        col2im_add(&cols, geom, &mut dx[n * in_sz..(n + 1) * in_sz]);
                    }
                }
                let mut res = vec![(*kernel, dk)];
                if want_x {
                    res.push((*input, dx));
                }
                if let Some(bv) = bias {
                    let mut db = vec![T::zero(); *cout];
                    for n in 0..b {
                        for (c, d) in db.iter_mut().enumerate() {
                            let s = (n * cout + c) * p;
                            *d = *d + g[s..s + p].iter().copied().sum::<T>();
                        }
                    }
                    res.push((*bv, db));
                }
                res
            }
            Op::MaxPool { input, argmax } => {
                let mut dx = vec![T::zero(); self.value(*input).numel()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] = dx[src] + gv;
                }
                vec![(*input, dx)]
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            } => {
                let s = out.shape();
                let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); g.len()];
                let mf = T::from_usize(b * hw).unwrap();
                for ch in 0..c {
                    let (mut sg, mut sgx) = (T::zero(), T::zero());
                    for n in 0..b {
                        let o = (n * c + ch) * hw;
                        for j in o..o + hw {
                            sg = sg + g[j];
                            sgx = sgx + g[j] * xhat[j];
                        }
                    }
                    dgamma[ch] = sgx;
                    dbeta[ch] = sg;
                    let scale = gam[ch] * inv_std[ch];
                    for n in 0..b {
                        let o = (n * c + ch) * hw;
                        for j in o..o + hw {
                            dx[j] = match mode {
                                BatchNormMode::Train => {
                                    scale * (g[j] - sg / mf - xhat[j] * sgx / mf)
                                }
                                BatchNormMode::Eval => scale * g[j],
                            };
                        }
                    }
                }
                vec![(*input, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Dense { input, weight, bias } => {
                let xs = self.value(*input).shape();
                let (b, f) = (xs[0], xs[1]);
                let u = self.value(*weight).shape()[1];
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let mut res = Vec::with_capacity(3);
                if self.requires_grad(*input) {
                    let mut dx = vec![T::zero(); b * f];
                    T::gemm(b, u, f, g, u as isize, 1, w, 1, u as isize, T::zero(), &mut dx, f as isize, 1);
                    res.push((*input, dx));
                }
                let mut dw = vec![T::zero(); f * u];
                T::gemm(f, b, u, x, 1, f as isize, g, u as isize, 1, T::zero(), &mut dw, u as isize, 1);
                res.push((*weight, dw));
                let mut db = vec![T::zero(); u];
                for row in g.chunks(u) {
                    db.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                }
                res.push((*bias, db));
                res
            }
            Op::Act { input, kind } => {
                let y = out.data();
                let dx: Vec<T> = match kind {
                    Activation::Relu => y
                        .iter()
                        .zip(g)
                        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                        .collect(),
                    Activation::Tanh => y.iter().zip(g).map(|(&y, &g)| g * (T::one() - y * y)).collect(),
                    Activation::Sigmoid => y.iter().zip(g).map(|(&y, &g)| g * y * (T::one() - y)).collect(),
                    Activation::Softmax => {
                        let last = *out.shape().last().unwrap();
                        let mut dx = vec![T::zero(); y.len()];
                        for ((yr, gr), dr) in y.chunks(last).zip(g.chunks(last)).zip(dx.chunks_mut(last)) {
                            let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for j in 0..last {
                                dr[j] = yr[j] * (gr[j] - dot);
                            }
                        }
                        dx
                    }
                };
                vec![(*input, dx)]
            }
            Op::Reshape { input } => vec![(*input, g.to_vec())],
            Op::Add(inputs) => inputs.iter().map(|&v| (v, g.to_vec())).collect(),
            Op::AddBias { input, bias } => {
                let u = self.value(*bias).numel();
                let mut db = vec![T::zero(); u];
                for row in g.chunks(u) {
                    db.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                }
                vec![(*input, g.to_vec()), (*bias, db)]
            }
            Op::Sum { input } => vec![(*input, vec![g[0]; self.value(*input).numel()])],
            Op::Mean { input } => {
                let n = self.value(*input).numel();
                vec![(*input, vec![g[0] / T::from_usize(n.max(1)).unwrap(); n])]
            }
            Op::Bce { prob, targets } => {
                let p = self.value(*prob).data();
                let (lo, hi) = clip_bounds::<T>();
                let inv_n = T::one() / T::from_usize(p.len()).unwrap();
                let dp = p
                    .iter()
                    .zip(targets)
                    .map(|(&p, &y)| {
                        if p < lo || p > hi {
                            T::zero()
                        } else {
                            g[0] * inv_n * ((T::one() - y) / (T::one() - p) - y / p)
                        }
                    })
                    .collect();
                vec![(*prob, dp)]
            }
            Op::Nll { probs, targets } => {
                let p = self.value(*probs).data();
                let c = self.value(*probs).shape()[1];
                let (lo, hi) = clip_bounds::<T>();
                let inv_n = T::one() / T::from_usize(targets.len()).unwrap();
                let mut dp = vec![T::zero(); p.len()];
                for (i, &t) in targets.iter().enumerate() {
                    let v = p[i * c + t];
                    if v >= lo && v <= hi {
                        dp[i * c + t] = -g[0] * inv_n / v;
                    }
                }
                vec![(*probs, dp)]
            }
        }
    }
}

fn clip_bounds<T: Real>() -> (T, T) {
    let eps = T::from_f64_lossy(PROB_CLIP);
    (eps, T::one() - eps)
}

/// Clips a probability into the open unit interval. NaN stays NaN.
fn clip_prob<T: Real>(p: T) -> T {
    let (lo, hi) = clip_bounds::<T>();
    if p.is_nan() {
        p
    } else {
        p.max(lo).min(hi)
    }
}

/// Binary cross-entropy of one clipped probability.
pub(crate) fn bce_term<T: Real>(p: T, y: T) -> T {
    let p = clip_prob(p);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / total);
}
