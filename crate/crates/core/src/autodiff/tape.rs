use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::{AutodiffError, Tensor};

/// Recorded operation together with whatever the backward rule needs.
#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `b` matches the trailing dims of `a` and is repeated over the leading ones.
    AddBroadcast(usize, usize),
    MulBroadcast(usize, usize),
    Scale(usize, f64),
    MatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Permute {
        x: usize,
        axes: Vec<usize>,
    },
    Reshape(usize),
    /// Prepends an axis of the given extent by repetition.
    Expand(usize),
    Softmax(usize),
    Log(usize),
    Exp(usize),
    Sum(usize),
    Mean(usize),
    MeanAxis {
        x: usize,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Concat {
        parts: Vec<usize>,
        outer: usize,
        inner: usize,
        sizes: Vec<usize>,
    },
    Slice {
        x: usize,
        outer: usize,
        inner: usize,
        len: usize,
        start: usize,
        end: usize,
    },
    L2Normalize {
        x: usize,
        norms: Vec<f64>,
    },
    LayerNorm {
        x: usize,
        rstd: Vec<f64>,
    },
    Gelu(usize),
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBroadcast(a, b)
            | Op::MulBroadcast(a, b)
            | Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Permute { x, .. }
            | Op::Reshape(x)
            | Op::Expand(x)
            | Op::Softmax(x)
            | Op::Log(x)
            | Op::Exp(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::MeanAxis { x, .. }
            | Op::Slice { x, .. }
            | Op::L2Normalize { x, .. }
            | Op::LayerNorm { x, .. }
            | Op::Gelu(x)
            | Op::CrossEntropy { logits: x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    pub(crate) trainable: bool,
}

/// Define-by-run gradient tape.
///
/// Nodes are appended in execution order, so the node list is always a
/// topological order of the graph. A tape is meant to be built for one
/// forward pass, differentiated once and dropped.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    passthrough_rows: Cell<usize>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable leaf. It always receives a gradient in [`Tape::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(Node { value, op: Op::Leaf, requires_grad: true, trainable: true })
    }

    /// Registers a constant input. No gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Node { value, op: Op::Leaf, requires_grad: false, trainable: false })
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rows that `l2_normalize` passed through unnormalized because
    /// their norm was below the guard threshold.
    pub fn passthrough_rows(&self) -> usize {
        self.passthrough_rows.get()
    }

    pub(crate) fn note_passthrough(&self, rows: usize) {
        self.passthrough_rows.set(self.passthrough_rows.get() + rows);
    }

    pub(crate) fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].requires_grad)
        };
        self.push_node(Node { value, op, requires_grad, trainable: false })
    }

    fn push_node(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }

    pub(crate) fn value_of(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    /// Value of a single-element node.
    pub fn item(&self) -> Result<f64, AutodiffError> {
        let v = self.value();
        v.item().ok_or_else(|| AutodiffError::NonScalarLoss { shape: v.shape().to_vec() })
    }

    pub(crate) fn same_tape(&self, other: &Var<'_>, op: &'static str) -> Result<(), AutodiffError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(AutodiffError::InvalidArgument { op, reason: "operands live on different tapes".into() })
        }
    }
}
