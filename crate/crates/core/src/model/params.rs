use std::collections::BTreeMap;

use super::{ModelConfig, ModelError};
use crate::autodiff::{Tape, Tensor, Var};
use crate::rng::{labeled_seed, normal_tensor};

/// Named trainable tensors, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((na, a), (nb, b))| na == nb && a.bit_eq(b))
    }

    /// Puts every tensor on `tape`, as trainable leaves or as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let var = if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
                (name.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters of a [`ParamStore`] living on a tape.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>, ModelError> {
        self.vars.get(name).copied().ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t>)> {
        self.vars.iter()
    }

    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        Self { vars: vars.into_iter().collect() }
    }
}

/// Per-tensor initializer: weights ~ N(0, std²) from a stream seeded by
/// `(seed, name)`; biases zero; layer-norm gains one.
pub(crate) struct Initializer {
    pub(crate) seed: u64,
    pub(crate) std: f64,
}

impl Initializer {
    pub(crate) fn normal(&self, store: &mut ParamStore, name: &str, shape: &[usize]) {
        store.insert(name, normal_tensor(shape, self.std, labeled_seed(self.seed, name)));
    }

    pub(crate) fn zeros(&self, store: &mut ParamStore, name: &str, shape: &[usize]) {
        store.insert(name, Tensor::zeros(shape));
    }

    pub(crate) fn ones(&self, store: &mut ParamStore, name: &str, shape: &[usize]) {
        store.insert(name, Tensor::ones(shape));
    }
}

/// Adds the visual encoder's parameters under the `encoder.` prefix.
pub(crate) fn init_encoder(store: &mut ParamStore, cfg: &ModelConfig, init: &Initializer) {
    let d = cfg.dim;
    let hidden = d * cfg.mlp_ratio;
    init.normal(store, "encoder.patch.w", &[cfg.patch_pixels(), d]);
    init.zeros(store, "encoder.patch.b", &[d]);
    init.normal(store, "encoder.pos", &[cfg.seq_len(), d]);
    for b in 0..cfg.depth {
        let p = format!("encoder.block{b}");
        init.ones(store, &format!("{p}.ln1.g"), &[d]);
        init.zeros(store, &format!("{p}.ln1.b"), &[d]);
        for w in ["wq", "wk", "wv", "wo"] {
            init.normal(store, &format!("{p}.attn.{w}"), &[d, d]);
        }
        // No key bias: it shifts every attention logit of a row equally, so
        // softmax cancels it and its gradient is identically zero.
        for b in ["bq", "bv", "bo"] {
            init.zeros(store, &format!("{p}.attn.{b}"), &[d]);
        }
        init.ones(store, &format!("{p}.ln2.g"), &[d]);
        init.zeros(store, &format!("{p}.ln2.b"), &[d]);
        init.normal(store, &format!("{p}.mlp.w1"), &[d, hidden]);
        init.zeros(store, &format!("{p}.mlp.b1"), &[hidden]);
        init.normal(store, &format!("{p}.mlp.w2"), &[hidden, d]);
        init.zeros(store, &format!("{p}.mlp.b2"), &[d]);
    }
    init.ones(store, "encoder.ln_f.g", &[d]);
    init.zeros(store, "encoder.ln_f.b", &[d]);
}
