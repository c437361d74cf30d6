//! Named parameter storage and per-tape binding.

use std::cell::RefCell;

use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named tensors. Insertion order is stable and is
/// the order used by optimizers and serialization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a parameter. Panics if `name` is already taken.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Zero tensors shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Lazily records parameters on a tape, at most once each, so gradients for
/// every use of a parameter accumulate in one leaf.
pub struct Binding<'t, 'p> {
    tape: &'t Tape,
    params: &'p ParamStore,
    leaves: RefCell<Vec<Option<usize>>>,
}

impl<'t, 'p> Binding<'t, 'p> {
    pub fn new(tape: &'t Tape, params: &'p ParamStore) -> Self {
        Binding {
            tape,
            params,
            leaves: RefCell::new(vec![None; params.len()]),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn get(&self, id: ParamId) -> Var<'t> {
        if let Some(var) = self.lookup(id) {
            return var;
        }
        let var = self.tape.leaf(self.params.get(id).clone());
        self.leaves.borrow_mut()[id.0] = Some(var.id());
        var
    }

    fn lookup(&self, id: ParamId) -> Option<Var<'t>> {
        let leaves = self.leaves.borrow();
        leaves[id.0].map(|node| {
            // Re-create a handle for an existing node.
            var_for(self.tape, node)
        })
    }

    /// Gradient per parameter, zeros for parameters never bound or not
    /// reaching the loss.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        let leaves = self.leaves.borrow();
        self.params
            .ids()
            .map(|id| match leaves[id.0] {
                Some(node) => grads.wrt(var_for(self.tape, node)),
                None => Tensor::zeros(self.params.get(id).shape()),
            })
            .collect()
    }
}

fn var_for(tape: &Tape, node: usize) -> Var<'_> {
    crate::tape::var_from_id(tape, node)
}

/// Add `src` into `dst` elementwise.
pub fn accumulate_grads(dst: &mut [Tensor], src: &[Tensor]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.add_assign(s);
    }
}
