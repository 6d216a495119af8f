use super::gemm::{gemm, Layout};
use super::tape::Op;
use super::tensor::strides;
use super::{AutodiffError, Tensor, Var};

/// Rows with an L2 norm below this pass through `l2_normalize` unchanged.
pub const L2_NORM_FLOOR: f64 = 1e-9;
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> AutodiffError {
    AutodiffError::InvalidArgument { op, reason: reason.into() }
}

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    // stride in the input for each output axis
    let walk: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let rank = out_shape.len();
    let mut out = Vec::with_capacity(data.len());
    let mut index = vec![0usize; rank];
    let mut offset = 0usize;
    let last = rank - 1;
    let (last_extent, last_stride) = (out_shape[last], walk[last]);
    loop {
        for j in 0..last_extent {
            out.push(data[offset + j * last_stride]);
        }
        // advance all but the innermost axis
        let mut ax = last;
        loop {
            if ax == 0 {
                return (out, out_shape);
            }
            ax -= 1;
            index[ax] += 1;
            offset += walk[ax];
            if index[ax] < out_shape[ax] {
                break;
            }
            offset -= walk[ax] * out_shape[ax];
            index[ax] = 0;
        }
    }
}

pub(crate) fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let value = 0.5 * x * (1.0 + t);
    let du = C * (1.0 + 3.0 * A * x * x);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (value, deriv)
}

impl<'t> Var<'t> {
    fn elementwise(
        &self,
        other: &Var<'t>,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, AutodiffError> {
        self.same_tape(other, op_name)?;
        let out = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() {
                return Err(mismatch(op_name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(out, op))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.elementwise(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    fn broadcast(
        &self,
        other: &Var<'t>,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, AutodiffError> {
        self.same_tape(other, op_name)?;
        let out = {
            let (a, b) = (self.value(), other.value());
            let (sa, sb) = (a.shape(), b.shape());
            if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
                return Err(mismatch(op_name, sa, sb));
            }
            let block = b.numel();
            let data = a
                .data()
                .chunks_exact(block)
                .flat_map(|chunk| chunk.iter().zip(b.data()).map(|(&x, &y)| f(x, y)))
                .collect();
            Tensor::new(sa.to_vec(), data)?
        };
        Ok(self.tape.push(out, op))
    }

    /// `self + other` where `other`'s shape equals the trailing dims of `self`.
    pub fn add_broadcast(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.broadcast(other, "add_broadcast", |x, y| x + y, Op::AddBroadcast(self.id, other.id))
    }

    /// `self * other` where `other`'s shape equals the trailing dims of `self`.
    pub fn mul_broadcast(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.broadcast(other, "mul_broadcast", |x, y| x * y, Op::MulBroadcast(self.id, other.id))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        let out = {
            let a = self.value();
            Tensor::from_fn(a.shape(), |i| a.data()[i] * c)
        };
        self.tape.push(out, Op::Scale(self.id, c))
    }

    fn matmul_impl(
        &self,
        other: &Var<'t>,
        op_name: &'static str,
        batched: bool,
        trans_b: bool,
    ) -> Result<Var<'t>, AutodiffError> {
        self.same_tape(other, op_name)?;
        let (out, op) = {
            let (a, b) = (self.value(), other.value());
            let (sa, sb) = (a.shape(), b.shape());
            let (batch, m, k, out_shape, b_inner) = if batched {
                if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
                    return Err(mismatch(op_name, sa, sb));
                }
                (sa[0], sa[1], sa[2], vec![sa[0], sa[1]], &sb[1..])
            } else {
                if sb.len() != 2 {
                    return Err(mismatch(op_name, sa, sb));
                }
                let k = *sa.last().unwrap_or(&0);
                let mut out_shape = sa[..sa.len() - 1].to_vec();
                if out_shape.is_empty() {
                    out_shape.push(1);
                }
                (1, a.numel() / k, k, out_shape, sb)
            };
            let (bk, n) = if trans_b { (b_inner[1], b_inner[0]) } else { (b_inner[0], b_inner[1]) };
            if bk != k {
                return Err(mismatch(op_name, sa, sb));
            }
            let mut out_shape = out_shape;
            out_shape.push(n);
            let mut data = vec![0.0; batch * m * n];
            let b_layout = if trans_b { Layout::Transposed } else { Layout::Normal };
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    Layout::Normal,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    b_layout,
                    &mut data[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
            let op = Op::MatMul { a: self.id, b: other.id, batch, m, k, n, trans_b };
            (Tensor::new(out_shape, data)?, op)
        };
        Ok(self.tape.push(out, op))
    }

    /// `[.., k] × [k, n] → [.., n]`; leading dims of `self` are flattened into rows.
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.matmul_impl(other, "matmul", false, false)
    }

    /// `[.., k] × [n, k]ᵀ → [.., n]`.
    pub fn matmul_t(&self, other: &Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.matmul_impl(other, "matmul_t", false, true)
    }

    /// Batched product `[b, m, k] × [b, k, n] → [b, m, n]`, or with `trans_b`
    /// the right operand is `[b, n, k]` and used transposed.
    pub fn bmm(&self, other: &Var<'t>, trans_b: bool) -> Result<Var<'t>, AutodiffError> {
        self.matmul_impl(other, "bmm", true, trans_b)
    }

    pub fn transpose(&self) -> Result<Var<'t>, AutodiffError> {
        let rank = self.value().shape().len();
        if rank != 2 {
            return Err(invalid("transpose", format!("expected rank 2, got rank {rank}")));
        }
        self.permute(&[1, 0])
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let out = {
            let a = self.value();
            let rank = a.shape().len();
            let mut seen = vec![false; rank];
            if axes.len() != rank || axes.iter().any(|&ax| ax >= rank || std::mem::replace(&mut seen[ax], true)) {
                return Err(invalid("permute", format!("{axes:?} is not a permutation of rank {rank}")));
            }
            let (data, shape) = permute_data(a.data(), a.shape(), axes);
            Tensor::new(shape, data)?
        };
        Ok(self.tape.push(out, Op::Permute { x: self.id, axes: axes.to_vec() }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let out = {
            let a = self.value();
            let numel: usize = shape.iter().product();
            if numel != a.numel() {
                return Err(mismatch("reshape", a.shape(), shape));
            }
            Tensor::new(shape.to_vec(), a.data().to_vec())?
        };
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Repeats the whole tensor `times` times along a new leading axis.
    pub fn expand(&self, times: usize) -> Result<Var<'t>, AutodiffError> {
        if times == 0 {
            return Err(invalid("expand", "repeat count must be positive"));
        }
        let out = {
            let a = self.value();
            let mut shape = vec![times];
            shape.extend_from_slice(a.shape());
            let data = a.data().repeat(times);
            Tensor::new(shape, data)?
        };
        Ok(self.tape.push(out, Op::Expand(self.id)))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&self) -> Result<Var<'t>, AutodiffError> {
        let out = {
            let a = self.value();
            let n = a.last_dim();
            if n == 0 {
                return Err(AutodiffError::EmptyAxis { op: "softmax" });
            }
            let mut data = a.data().to_vec();
            for row in data.chunks_exact_mut(n) {
                softmax_in_place(row);
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(out, Op::Softmax(self.id)))
    }

    /// Natural log; every input value must be strictly positive.
    pub fn log(&self) -> Result<Var<'t>, AutodiffError> {
        let out = {
            let a = self.value();
            if let Some(bad) = a.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(invalid("log", format!("non-positive input {bad}")));
            }
            Tensor::from_fn(a.shape(), |i| a.data()[i].ln())
        };
        Ok(self.tape.push(out, Op::Log(self.id)))
    }

    pub fn exp(&self) -> Var<'t> {
        let out = {
            let a = self.value();
            Tensor::from_fn(a.shape(), |i| a.data()[i].exp())
        };
        self.tape.push(out, Op::Exp(self.id))
    }

    pub fn sum(&self) -> Var<'t> {
        let total = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(total), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let mean = {
            let a = self.value();
            a.data().iter().sum::<f64>() / a.numel() as f64
        };
        self.tape.push(Tensor::scalar(mean), Op::Mean(self.id))
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>, AutodiffError> {
        let (out, op) = {
            let a = self.value();
            let shape = a.shape();
            if axis >= shape.len() {
                return Err(invalid("mean_axis", format!("axis {axis} out of range for {shape:?}")));
            }
            let (outer, len, inner) = split_axis(shape, axis);
            let mut data = vec![0.0; outer * inner];
            for o in 0..outer {
                let dst = &mut data[o * inner..(o + 1) * inner];
                for l in 0..len {
                    let src = &a.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
                dst.iter_mut().for_each(|d| *d /= len as f64);
            }
            let mut out_shape: Vec<usize> =
                shape.iter().enumerate().filter(|&(i, _)| i != axis).map(|(_, &e)| e).collect();
            if out_shape.is_empty() {
                out_shape.push(1);
            }
            (Tensor::new(out_shape, data)?, Op::MeanAxis { x: self.id, outer, len, inner })
        };
        Ok(self.tape.push(out, op))
    }

    /// Contiguous range `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<'t>, AutodiffError> {
        let (out, op) = {
            let a = self.value();
            let shape = a.shape();
            if axis >= shape.len() || start >= end || end > shape[axis] {
                return Err(invalid("slice", format!("range {start}..{end} on axis {axis} of {shape:?}")));
            }
            let (outer, len, inner) = split_axis(shape, axis);
            let width = (end - start) * inner;
            let mut data = Vec::with_capacity(outer * width);
            for o in 0..outer {
                let base = o * len * inner + start * inner;
                data.extend_from_slice(&a.data()[base..base + width]);
            }
            let mut out_shape = shape.to_vec();
            out_shape[axis] = end - start;
            (Tensor::new(out_shape, data)?, Op::Slice { x: self.id, outer, inner, len, start, end })
        };
        Ok(self.tape.push(out, op))
    }

    /// Divides each last-axis row by its L2 norm. Rows whose norm is below
    /// [`L2_NORM_FLOOR`] are passed through and counted on the tape.
    pub fn l2_normalize(&self) -> Var<'t> {
        let (out, norms, passthrough) = {
            let a = self.value();
            let n = a.last_dim();
            let mut data = a.data().to_vec();
            let mut norms = Vec::with_capacity(a.numel() / n);
            let mut passthrough = 0;
            for row in data.chunks_exact_mut(n) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm >= L2_NORM_FLOOR {
                    row.iter_mut().for_each(|v| *v /= norm);
                } else {
                    passthrough += 1;
                }
                norms.push(norm);
            }
            (Tensor::from_fn(a.shape(), |i| data[i]), norms, passthrough)
        };
        if passthrough > 0 {
            log::warn!("l2_normalize: {passthrough} row(s) below norm floor passed through");
            self.tape.note_passthrough(passthrough);
        }
        self.tape.push(out, Op::L2Normalize { x: self.id, norms })
    }

    /// Layer normalization over the last axis, without affine parameters.
    pub fn layer_norm(&self) -> Var<'t> {
        let (out, rstd) = {
            let a = self.value();
            let n = a.last_dim();
            let mut data = a.data().to_vec();
            let mut rstd = Vec::with_capacity(a.numel() / n);
            for row in data.chunks_exact_mut(n) {
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                row.iter_mut().for_each(|v| *v = (*v - mean) * r);
                rstd.push(r);
            }
            (Tensor::from_fn(a.shape(), |i| data[i]), rstd)
        };
        self.tape.push(out, Op::LayerNorm { x: self.id, rstd })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Var<'t> {
        let out = {
            let a = self.value();
            Tensor::from_fn(a.shape(), |i| gelu_parts(a.data()[i]).0)
        };
        self.tape.push(out, Op::Gelu(self.id))
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits against integer labels.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let (loss, probs) = {
            let a = self.value();
            let shape = a.shape();
            if shape.len() != 2 || shape[0] != labels.len() {
                return Err(mismatch("cross_entropy", shape, &[labels.len()]));
            }
            let classes = shape[1];
            if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(invalid("cross_entropy", format!("label {bad} out of range for {classes} classes")));
            }
            let mut probs = a.data().to_vec();
            let mut total = 0.0;
            for (row, (&label, logits)) in
                probs.chunks_exact_mut(classes).zip(labels.iter().zip(a.data().chunks_exact(classes)))
            {
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                // ln Σ e^(z - max) - (z_label - max); grouping it this way
                // returns ln n exactly when all logits are equal.
                let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                total += log_sum - (logits[label] - max);
                softmax_in_place(row);
            }
            (total / labels.len() as f64, probs)
        };
        let op = Op::CrossEntropy { logits: self.id, labels: labels.to_vec(), probs };
        Ok(self.tape.push(Tensor::scalar(loss), op))
    }
}

/// Concatenates tensors along `axis`; all other extents must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, AutodiffError> {
    let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
    let tape = first.tape;
    let (out, op) = {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for {base:?}")));
        }
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p, "concat")?;
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &len) in values.iter().zip(&sizes) {
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let op = Op::Concat { parts: parts.iter().map(|p| p.id).collect(), outer, inner, sizes };
        (Tensor::new(shape, data)?, op)
    };
    Ok(tape.push(out, op))
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
