//! Pure tensor kernels. Every function here is side-effect free; the
//! differentiable wrappers in [`super::graph`] reuse them for the forward pass.

use super::tensor::numel;
use super::{Scalar, Tensor, TensorError};

/// `c (m×n) = op(a)·op(b) + beta·c` where `op` optionally transposes a
/// row-major operand. With `transpose_a` the buffer `a` is stored `k×m`;
/// with `transpose_b` the buffer `b` is stored `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    transpose_a: bool,
    b: &[T],
    transpose_b: bool,
    beta: T,
    c: &mut [T],
) {
    let a_strides = if transpose_a { (1, m as isize) } else { (k as isize, 1) };
    let b_strides = if transpose_b { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, a, a_strides, b, b_strides, beta, c);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum MatMulPlan {
    /// `a` is `[.., rows/.., k]` flattened to `rows×k`; `b` is a shared `k×n` matrix.
    Shared { rows: usize, k: usize, n: usize },
    /// Same leading dimensions on both sides; one `m×k · k×n` product per batch entry.
    Batched { batch: usize, m: usize, k: usize, n: usize },
}

pub(crate) fn matmul_plan(a: &[usize], b: &[usize]) -> Result<(MatMulPlan, Vec<usize>), TensorError> {
    let mismatch = || TensorError::Shape { op: "matmul", lhs: a.to_vec(), rhs: b.to_vec() };
    if a.len() < 2 || b.len() < 2 {
        return Err(mismatch());
    }
    let k = a[a.len() - 1];
    let m = a[a.len() - 2];
    let (kb, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != kb {
        return Err(mismatch());
    }
    let mut out = a[..a.len() - 1].to_vec();
    out.push(n);
    if b.len() == 2 {
        Ok((MatMulPlan::Shared { rows: numel(a) / k, k, n }, out))
    } else if a.len() == b.len() && a[..a.len() - 2] == b[..b.len() - 2] {
        let batch = numel(&a[..a.len() - 2]);
        Ok((MatMulPlan::Batched { batch, m, k, n }, out))
    } else {
        Err(mismatch())
    }
}

/// Matrix product. A rank-2 right operand is shared across all leading
/// dimensions of the left operand; otherwise both operands must carry the
/// same leading (batch) dimensions.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (plan, out_shape) = matmul_plan(a.shape(), b.shape())?;
    let mut out = vec![T::zero(); numel(&out_shape)];
    match plan {
        MatMulPlan::Shared { rows, k, n } => {
            gemm(rows, k, n, a.data(), false, b.data(), false, T::zero(), &mut out);
        }
        MatMulPlan::Batched { batch, m, k, n } => {
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    false,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    false,
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
    }
    Tensor::from_parts(out_shape, out).ensure_finite("matmul")
}

/// `(outer, axis_len, inner)` decomposition of a shape around one axis.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidArgument {
            op,
            reason: format!("axis {axis} out of range for shape {shape:?}"),
        });
    }
    Ok(())
}

/// Exponential normalization along `axis`, stabilized by subtracting the
/// per-slice maximum.
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>, TensorError> {
    if x.rank() == 0 {
        return Err(TensorError::InvalidArgument { op: "softmax", reason: "empty axis".into() });
    }
    check_axis("softmax", x.shape(), axis)?;
    let (outer, len, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let max = (0..len).map(|j| src[at(j)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for j in 0..len {
                let e = (src[at(j)] - max).exp();
                out[at(j)] = e;
                total = total + e;
            }
            for j in 0..len {
                out[at(j)] = out[at(j)] / total;
            }
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out).ensure_finite("softmax")
}

/// `log(softmax(x))` along the last axis, computed as `x - max - log Σ exp(x - max)`.
pub fn log_softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let cols = *x.shape().last().ok_or(TensorError::InvalidArgument {
        op: "log_softmax",
        reason: "empty axis".into(),
    })?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_parts(x.shape().to_vec(), out).ensure_finite("log_softmax")
}

/// Normalized values and reciprocal standard deviations, kept for the backward pass.
pub(crate) struct LayerNormCache<T> {
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn layer_norm_with_cache<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, LayerNormCache<T>), TensorError> {
    if !(eps > T::zero()) {
        return Err(TensorError::InvalidArgument {
            op: "layer_norm",
            reason: format!("eps must be positive, got {eps}"),
        });
    }
    let width = *x.shape().last().ok_or(TensorError::InvalidArgument {
        op: "layer_norm",
        reason: "cannot normalize a rank-0 tensor".into(),
    })?;
    for affine in [gain, bias] {
        if affine.shape() != [width] {
            return Err(TensorError::Shape {
                op: "layer_norm",
                lhs: x.shape().to_vec(),
                rhs: affine.shape().to_vec(),
            });
        }
    }
    let n = T::from_usize(width).unwrap();
    let rows = x.len() / width;
    let mut normalized = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(rows);
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(width) {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let r = (var + eps).sqrt().recip();
        inv_std.push(r);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * r;
            normalized.push(h);
            out.push(h * gain.data()[j] + bias.data()[j]);
        }
    }
    let y = Tensor::from_parts(x.shape().to_vec(), out).ensure_finite("layer_norm")?;
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Normalize each vector along the last axis to zero mean and unit
/// (biased) variance, then apply `gain ⊙ x̂ + bias`.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    layer_norm_with_cache(x, gain, bias, eps).map(|(y, _)| y)
}

const GELU_CUBIC: f64 = 0.044715;

fn gelu_coeff<T: Scalar>() -> (T, T) {
    let sqrt_2_over_pi = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    (sqrt_2_over_pi, T::from_f64_lossy(GELU_CUBIC))
}

/// Gaussian error linear unit, tanh approximation.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (s, c) = gelu_coeff::<T>();
    let half = T::from_f64_lossy(0.5);
    x.map(|v| half * v * (T::one() + (s * (v + c * v * v * v)).tanh()))
}

pub(crate) fn gelu_derivative<T: Scalar>(v: T) -> T {
    let (s, c) = gelu_coeff::<T>();
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let t = (s * (v + c * v * v * v)).tanh();
    half * (T::one() + t) + half * v * (T::one() - t * t) * s * (T::one() + three * c * v * v)
}

/// Reorder axes: output axis `i` is input axis `perm[i]`.
pub fn permute<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>, TensorError> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(TensorError::InvalidArgument {
            op: "permute",
            reason: format!("{perm:?} is not a permutation of {rank} axes"),
        });
    }
    let in_shape = x.shape();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    let mut index = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        for ax in (0..rank).rev() {
            index[ax] += 1;
            offset += strides[ax];
            if index[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * out_shape[ax];
            index[ax] = 0;
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Join tensors along `axis`; all other dimensions must agree.
pub fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>, TensorError> {
    let first = parts.first().ok_or(TensorError::InvalidArgument {
        op: "concat",
        reason: "no inputs".into(),
    })?;
    check_axis("concat", first.shape(), axis)?;
    for p in parts {
        let compatible = p.rank() == first.rank()
            && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(TensorError::Shape {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let (outer, _, inner) = split_axis(first.shape(), axis);
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

/// Slice `len` entries starting at `start` along `axis`.
pub fn narrow<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Result<Tensor<T>, TensorError> {
    check_axis("narrow", x.shape(), axis)?;
    if len == 0 || start + len > x.shape()[axis] {
        return Err(TensorError::InvalidArgument {
            op: "narrow",
            reason: format!("range {start}..{} out of bounds for axis {axis} of {:?}", start + len, x.shape()),
        });
    }
    let (outer, axis_len, inner) = split_axis(x.shape(), axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * axis_len * inner + start * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

fn zip_same<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data).ensure_finite(op)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    zip_same("add", a, b, |x, y| x + y)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    zip_same("mul", a, b, |x, y| x * y)
}

/// `a + b` where `b`'s shape is a suffix of `a`'s and is repeated over the
/// remaining leading dimensions.
pub fn add_broadcast<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if b.rank() > a.rank() || a.shape()[a.rank() - b.rank()..] != *b.shape() {
        return Err(TensorError::Shape { op: "add_broadcast", lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
    }
    let inner = b.len();
    let mut out = a.data().to_vec();
    for chunk in out.chunks_mut(inner) {
        for (v, &w) in chunk.iter_mut().zip(b.data()) {
            *v = *v + w;
        }
    }
    Tensor::from_parts(a.shape().to_vec(), out).ensure_finite("add_broadcast")
}
