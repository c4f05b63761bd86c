//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and the inputs
//! needed to propagate gradients. [`Graph::backward`] walks the tape once in
//! reverse, accumulating gradients additively into every input. A graph is
//! built for one forward pass and dropped afterwards, so gradients always
//! start from zero.

use std::collections::BTreeMap;

use super::ops::{self, MatMulPlan};
use super::{Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Input,
    Param,
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var, MatMulPlan),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Narrow { src: Var, axis: usize, start: usize },
    Repeat(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, normalized: Vec<T>, inv_std: Vec<T> },
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    Nll { logp: Var, labels: Vec<usize> },
    ClampedLog { x: Var, floor: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded forward computation.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every parameter leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: BTreeMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn checked(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var, TensorError> {
        let value = value.ensure_finite(op_name)?;
        Ok(self.push(value, op))
    }

    /// Constant leaf; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.checked("input", value, Op::Input)
    }

    /// Differentiable leaf; [`Graph::backward`] reports a gradient for it.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.checked("param", value, Op::Param)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// `a + b` with `b` repeated over `a`'s leading dimensions.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = ops::add_broadcast(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::AddBroadcast(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var, TensorError> {
        let v = self.value(a).map(|x| x * factor);
        self.checked("scale", v, Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (plan, _) = ops::matmul_plan(self.value(a).shape(), self.value(b).shape())?;
        let v = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b, plan)))
    }

    /// `x·weight + bias` over the last axis of `x`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, weight)?;
        self.add_broadcast(xw, bias)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let v = ops::permute(self.value(a), perm)?;
        Ok(self.push(v, Op::Permute(a, perm.to_vec())))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ops::concat(&values, axis)?;
        Ok(self.push(v, Op::Concat(parts.to_vec(), axis)))
    }

    pub fn narrow(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let v = ops::narrow(self.value(src), axis, start, len)?;
        Ok(self.push(v, Op::Narrow { src, axis, start }))
    }

    /// Stack `times` copies of `a` along a new leading axis.
    pub fn repeat(&mut self, a: Var, times: usize) -> Result<Var, TensorError> {
        if times == 0 {
            return Err(TensorError::InvalidArgument { op: "repeat", reason: "times must be positive".into() });
        }
        let src = self.value(a);
        let mut shape = vec![times];
        shape.extend_from_slice(src.shape());
        let data = src.data().repeat(times);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Repeat(a)))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let axis = self.value(a).rank().checked_sub(1).ok_or(TensorError::InvalidArgument {
            op: "softmax",
            reason: "empty axis".into(),
        })?;
        let v = ops::softmax(self.value(a), axis)?;
        Ok(self.push(v, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = ops::log_softmax(self.value(a))?;
        Ok(self.push(v, Op::LogSoftmax(a)))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, TensorError> {
        let (v, cache) = ops::layer_norm_with_cache(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(
            v,
            Op::LayerNorm { x, gain, bias, normalized: cache.normalized, inv_std: cache.inv_std },
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = ops::gelu(self.value(a));
        self.checked("gelu", v, Op::Gelu(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = Tensor::scalar(self.value(a).sum());
        self.checked("sum", v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let src = self.value(a);
        let v = Tensor::scalar(src.sum() / T::from_usize(src.len()).unwrap());
        self.checked("mean", v, Op::Mean(a))
    }

    /// Mean over rows of `-logp[i, labels[i]]` for a `rows×classes` input.
    pub fn nll(&mut self, logp: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let lp = self.value(logp);
        if lp.rank() != 2 || lp.shape()[0] != labels.len() {
            return Err(TensorError::InvalidArgument {
                op: "nll",
                reason: format!("{} labels for log-probabilities of shape {:?}", labels.len(), lp.shape()),
            });
        }
        let classes = lp.shape()[1];
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(TensorError::InvalidArgument {
                op: "nll",
                reason: format!("label {bad} out of range for {classes} classes"),
            });
        }
        let total: T = labels.iter().enumerate().map(|(i, &y)| -lp.data()[i * classes + y]).sum();
        let v = Tensor::scalar(total / T::from_usize(labels.len()).unwrap());
        self.checked("nll", v, Op::Nll { logp, labels: labels.to_vec() })
    }

    /// Elementwise `ln(max(x, floor))`.
    pub fn clamped_log(&mut self, x: Var, floor: T) -> Result<Var, TensorError> {
        let v = self.value(x).map(|v| v.max(floor).ln());
        self.checked("clamped_log", v, Op::ClampedLog { x, floor })
    }

    /// Reverse-mode sweep from a scalar `loss`. Every [`Graph::param`] leaf
    /// gets an entry; leaves off the path to `loss` receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let root = self.value(loss);
        if root.len() != 1 {
            return Err(TensorError::NotScalar { shape: root.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.shape().to_vec(), T::one()));

        for index in (0..=loss.0).rev() {
            let Some(upstream) = grads[index].take() else { continue };
            let node = &self.nodes[index];
            if let Op::Param = node.op {
                grads[index] = Some(upstream.ensure_finite("backward")?);
                continue;
            }
            for (target, g) in self.propagate(node, upstream)? {
                accumulate(&mut grads[target.0], g);
            }
        }

        let mut out = BTreeMap::new();
        for (index, node) in self.nodes.iter().enumerate() {
            if let Op::Param = node.op {
                let g = grads[index].take().unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                out.insert(Var(index), g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node<T>, up: Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>, TensorError> {
        let shape_of = |v: Var| self.value(v).shape().to_vec();
        Ok(match &node.op {
            Op::Input | Op::Param => Vec::new(),
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up)],
            Op::AddBroadcast(a, b) => {
                let inner = self.value(*b).len();
                let mut gb = vec![T::zero(); inner];
                for chunk in up.data().chunks(inner) {
                    for (acc, &g) in gb.iter_mut().zip(chunk) {
                        *acc = *acc + g;
                    }
                }
                vec![(*a, up), (*b, Tensor::from_parts(shape_of(*b), gb))]
            }
            Op::Mul(a, b) => {
                let ga = ops::mul(&up, self.value(*b))?;
                let gb = ops::mul(&up, self.value(*a))?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, factor) => vec![(*a, up.map(|g| g * *factor))],
            Op::MatMul(a, b, plan) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let mut ga = vec![T::zero(); av.len()];
                let mut gb = vec![T::zero(); bv.len()];
                match *plan {
                    MatMulPlan::Shared { rows, k, n } => {
                        ops::gemm(rows, n, k, up.data(), false, bv, true, T::zero(), &mut ga);
                        ops::gemm(k, rows, n, av, true, up.data(), false, T::zero(), &mut gb);
                    }
                    MatMulPlan::Batched { batch, m, k, n } => {
                        for i in 0..batch {
                            let (ra, rb, rc) = (i * m * k..(i + 1) * m * k, i * k * n..(i + 1) * k * n, i * m * n..(i + 1) * m * n);
                            ops::gemm(m, n, k, &up.data()[rc.clone()], false, &bv[rb.clone()], true, T::zero(), &mut ga[ra.clone()]);
                            ops::gemm(k, m, n, &av[ra], true, &up.data()[rc], false, T::zero(), &mut gb[rb]);
                        }
                    }
                }
                vec![
                    (*a, Tensor::from_parts(shape_of(*a), ga)),
                    (*b, Tensor::from_parts(shape_of(*b), gb)),
                ]
            }
            Op::Reshape(a) => vec![(*a, up.reshape(shape_of(*a))?)],
            Op::Permute(a, perm) => vec![(*a, ops::permute(&up, &ops::inverse_permutation(perm))?)],
            Op::Concat(parts, axis) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let len = self.value(p).shape()[*axis];
                    out.push((p, ops::narrow(&up, *axis, start, len)?));
                    start += len;
                }
                out
            }
            Op::Narrow { src, axis, start } => {
                let src_shape = shape_of(*src);
                let (outer, axis_len, inner) = ops::split_axis(&src_shape, *axis);
                let len = up.shape()[*axis];
                let mut g = vec![T::zero(); src_shape.iter().product()];
                for o in 0..outer {
                    let dst = o * axis_len * inner + start * inner;
                    g[dst..dst + len * inner].copy_from_slice(&up.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![(*src, Tensor::from_parts(src_shape, g))]
            }
            Op::Repeat(a) => {
                let inner = self.value(*a).len();
                let mut g = vec![T::zero(); inner];
                for chunk in up.data().chunks(inner) {
                    for (acc, &v) in g.iter_mut().zip(chunk) {
                        *acc = *acc + v;
                    }
                }
                vec![(*a, Tensor::from_parts(shape_of(*a), g))]
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let cols = *y.shape().last().unwrap();
                let mut g = Vec::with_capacity(y.len());
                for (yr, ur) in y.data().chunks(cols).zip(up.data().chunks(cols)) {
                    let dot: T = yr.iter().zip(ur).map(|(&p, &u)| p * u).sum();
                    g.extend(yr.iter().zip(ur).map(|(&p, &u)| p * (u - dot)));
                }
                vec![(*a, Tensor::from_parts(y.shape().to_vec(), g))]
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let cols = *y.shape().last().unwrap();
                let mut g = Vec::with_capacity(y.len());
                for (yr, ur) in y.data().chunks(cols).zip(up.data().chunks(cols)) {
                    let total: T = ur.iter().copied().sum();
                    g.extend(yr.iter().zip(ur).map(|(&lp, &u)| u - lp.exp() * total));
                }
                vec![(*a, Tensor::from_parts(y.shape().to_vec(), g))]
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let gain_v = self.value(*gain).data();
                let width = gain_v.len();
                let n = T::from_usize(width).unwrap();
                let mut gx = Vec::with_capacity(up.len());
                let mut gg = vec![T::zero(); width];
                let mut gbias = vec![T::zero(); width];
                for ((ur, hr), &r) in up.data().chunks(width).zip(normalized.chunks(width)).zip(inv_std) {
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for j in 0..width {
                        let dh = ur[j] * gain_v[j];
                        mean_dh = mean_dh + dh;
                        mean_dh_h = mean_dh_h + dh * hr[j];
                        gg[j] = gg[j] + ur[j] * hr[j];
                        gbias[j] = gbias[j] + ur[j];
                    }
                    mean_dh = mean_dh / n;
                    mean_dh_h = mean_dh_h / n;
                    gx.extend((0..width).map(|j| r * (ur[j] * gain_v[j] - mean_dh - hr[j] * mean_dh_h)));
                }
                vec![
                    (*x, Tensor::from_parts(shape_of(*x), gx)),
                    (*gain, Tensor::from_parts(vec![width], gg)),
                    (*bias, Tensor::from_parts(vec![width], gbias)),
                ]
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                let g = xs.iter().zip(up.data()).map(|(&x, &u)| u * ops::gelu_derivative(x)).collect();
                vec![(*a, Tensor::from_parts(shape_of(*a), g))]
            }
            Op::Sum(a) => {
                let u = up.data()[0];
                vec![(*a, Tensor::full(shape_of(*a), u))]
            }
            Op::Mean(a) => {
                let count = T::from_usize(self.value(*a).len()).unwrap();
                vec![(*a, Tensor::full(shape_of(*a), up.data()[0] / count))]
            }
            Op::Nll { logp, labels } => {
                let shape = shape_of(*logp);
                let classes = shape[1];
                let scale = up.data()[0] / T::from_usize(labels.len()).unwrap();
                let mut g = vec![T::zero(); shape[0] * classes];
                for (i, &y) in labels.iter().enumerate() {
                    g[i * classes + y] = -scale;
                }
                vec![(*logp, Tensor::from_parts(shape, g))]
            }
            Op::ClampedLog { x, floor } => {
                let xs = self.value(*x).data();
                let g = xs
                    .iter()
                    .zip(up.data())
                    .map(|(&v, &u)| if v > *floor { u / v } else { T::zero() })
                    .collect();
                vec![(*x, Tensor::from_parts(shape_of(*x), g))]
            }
        })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(existing) => {
            for (acc, &v) in existing.data_mut().iter_mut().zip(g.data()) {
                *acc = *acc + v;
            }
        }
        None => *slot = Some(g),
    }
}
