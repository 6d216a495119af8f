use std::cell::Cell;

use super::gemm::{gemm, Layout};
use super::ops::{gelu_parts, permute_data, L2_NORM_FLOOR};
use super::tape::{Node, Op};
use super::{AutodiffError, Tape, Tensor, Var};

thread_local! {
    static CORRUPT_GELU_BACKWARD: Cell<bool> = const { Cell::new(false) };
}

/// Test hook: scales the GELU backward rule by 1.01 on the current thread so
/// that gradient checks have a known-bad negative control.
#[doc(hidden)]
pub fn set_corrupt_gelu_backward(on: bool) {
    CORRUPT_GELU_BACKWARD.with(|c| c.set(on));
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape if none flowed into it.
    pub fn wrt(&self, var: &Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

impl Tape {
    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every trainable leaf recorded before `loss` gets an entry in the result,
    /// zero-filled when the loss does not depend on it.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AutodiffError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(AutodiffError::InvalidArgument {
                op: "backward",
                reason: "loss belongs to a different tape".into(),
            });
        }
        let nodes = self.nodes();
        let shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss { shape });
        }
        let count = loss.id + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; count];
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(vec![1.0]);
        }
        let corrupt = CORRUPT_GELU_BACKWARD.with(Cell::get);
        let mut out: Vec<Option<Tensor>> = (0..count).map(|_| None).collect();

        for id in (0..count).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            propagate(&nodes, &mut grads, node, &g, corrupt);
            if node.trainable {
                out[id] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
            }
        }
        for (id, node) in nodes.iter().enumerate().take(count) {
            if node.trainable && out[id].is_none() {
                out[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads: out })
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64], corrupt: bool) {
    let value = |id: usize| nodes[id].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                add_into(gb, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().zip(g.iter().zip(value(*b))).for_each(|(d, (s, y))| *d += s * y);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gb.iter_mut().zip(g.iter().zip(value(*a))).for_each(|(d, (s, x))| *d += s * x);
            }
        }
        Op::AddBroadcast(a, b) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                add_into(ga, g);
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                let block = gb.len();
                for chunk in g.chunks_exact(block) {
                    add_into(gb, chunk);
                }
            }
        }
        Op::MulBroadcast(a, b) => {
            let bv = value(*b);
            let block = bv.len();
            if let Some(ga) = slot(grads, nodes, *a) {
                for (dst, src) in ga.chunks_exact_mut(block).zip(g.chunks_exact(block)) {
                    dst.iter_mut().zip(src.iter().zip(bv)).for_each(|(d, (s, y))| *d += s * y);
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for (src, x) in g.chunks_exact(block).zip(value(*a).chunks_exact(block)) {
                    gb.iter_mut().zip(src.iter().zip(x)).for_each(|(d, (s, xv))| *d += s * xv);
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = slot(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(d, s)| *d += c * s);
            }
        }
        &Op::MatMul { a, b, batch, m, k, n, trans_b } => {
            let (av, bv) = (value(a), value(b));
            if let Some(ga) = slot(grads, nodes, a) {
                // dA = dC · op(B)ᵀ
                let b_layout = if trans_b { Layout::Normal } else { Layout::Transposed };
                for i in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[i * m * n..(i + 1) * m * n],
                        Layout::Normal,
                        &bv[i * k * n..(i + 1) * k * n],
                        b_layout,
                        &mut ga[i * m * k..(i + 1) * m * k],
                        true,
                    );
                }
            }
            if let Some(gb) = slot(grads, nodes, b) {
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &av[i * m * k..(i + 1) * m * k];
                    let dst = &mut gb[i * k * n..(i + 1) * k * n];
                    if trans_b {
                        // stored [n, k]: dB = dCᵀ · A
                        gemm(n, m, k, gi, Layout::Transposed, ai, Layout::Normal, dst, true);
                    } else {
                        // stored [k, n]: dB = Aᵀ · dC
                        gemm(k, m, n, ai, Layout::Transposed, gi, Layout::Normal, dst, true);
                    }
                }
            }
        }
        Op::Permute { x, axes } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let (back, _) = permute_data(g, node.value.shape(), &inverse);
                add_into(gx, &back);
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
        }
        Op::Expand(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let block = gx.len();
                for chunk in g.chunks_exact(block) {
                    add_into(gx, chunk);
                }
            }
        }
        Op::Softmax(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let y = node.value.data();
                let n = node.value.last_dim();
                for ((dst, gr), yr) in gx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                        *d += yv * (gv - dot);
                    }
                }
            }
        }
        Op::Log(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().zip(g.iter().zip(value(*x))).for_each(|(d, (s, xv))| *d += s / xv);
            }
        }
        Op::Exp(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let y = node.value.data();
                gx.iter_mut().zip(g.iter().zip(y)).for_each(|(d, (s, yv))| *d += s * yv);
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let share = g[0] / gx.len() as f64;
                gx.iter_mut().for_each(|d| *d += share);
            }
        }
        &Op::MeanAxis { x, outer, len, inner } => {
            if let Some(gx) = slot(grads, nodes, x) {
                let scale = 1.0 / len as f64;
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut gx[(o * len + l) * inner..(o * len + l + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s * scale);
                    }
                }
            }
        }
        Op::Concat { parts, outer, inner, sizes } => {
            let total: usize = sizes.iter().sum();
            let mut offset = 0;
            for (&p, &len) in parts.iter().zip(sizes) {
                if let Some(gp) = slot(grads, nodes, p) {
                    for o in 0..*outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                        add_into(&mut gp[o * len * inner..(o + 1) * len * inner], src);
                    }
                }
                offset += len;
            }
        }
        &Op::Slice { x, outer, inner, len, start, end } => {
            if let Some(gx) = slot(grads, nodes, x) {
                let width = (end - start) * inner;
                for o in 0..outer {
                    let base = o * len * inner + start * inner;
                    add_into(&mut gx[base..base + width], &g[o * width..(o + 1) * width]);
                }
            }
        }
        Op::L2Normalize { x, norms } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let n = node.value.last_dim();
                let y = node.value.data();
                for (((dst, gr), yr), &norm) in
                    gx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)).zip(norms)
                {
                    if norm >= L2_NORM_FLOOR {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                            *d += (gv - yv * dot) / norm;
                        }
                    } else {
                        add_into(dst, gr);
                    }
                }
            }
        }
        Op::LayerNorm { x, rstd } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let n = node.value.last_dim();
                let xhat = node.value.data();
                for (((dst, gr), xr), &r) in
                    gx.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(xhat.chunks_exact(n)).zip(rstd)
                {
                    let mean_g = gr.iter().sum::<f64>() / n as f64;
                    let mean_gx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for ((d, gv), xv) in dst.iter_mut().zip(gr).zip(xr) {
                        *d += r * (gv - mean_g - xv * mean_gx);
                    }
                }
            }
        }
        Op::Gelu(x) => {
            if let Some(gx) = slot(grads, nodes, *x) {
                let factor = if corrupt { 1.01 } else { 1.0 };
                gx.iter_mut()
                    .zip(g.iter().zip(value(*x)))
                    .for_each(|(d, (s, xv))| *d += s * gelu_parts(*xv).1 * factor);
            }
        }
        Op::CrossEntropy { logits, labels, probs } => {
            if let Some(gl) = slot(grads, nodes, *logits) {
                let classes = probs.len() / labels.len();
                let share = g[0] / labels.len() as f64;
                for (b, &label) in labels.iter().enumerate() {
                    let row = &probs[b * classes..(b + 1) * classes];
                    let dst = &mut gl[b * classes..(b + 1) * classes];
                    for (c, (d, p)) in dst.iter_mut().zip(row).enumerate() {
                        let target = if c == label { 1.0 } else { 0.0 };
                        *d += share * (p - target);
                    }
                }
            }
        }
    }
}
