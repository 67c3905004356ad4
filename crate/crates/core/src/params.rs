//! Named parameter storage and gradient accumulation buffers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.values[i] = value;
            return ParamId(i);
        }
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.values[i.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces every tensor with the same-named tensor of `other`; every name
    /// must exist in both stores with identical shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in self.names.iter().zip(&self.values) {
            match other.by_name(name) {
                Some(o) if o.shape() == v.shape() => {}
                Some(o) => problems.push(alloc::format!("{name}: expected {:?}, found {:?}", v.shape(), o.shape())),
                None => problems.push(alloc::format!("{name}: missing")),
            }
        }
        for name in &other.names {
            if self.id(name).is_none() {
                problems.push(alloc::format!("{name}: unexpected"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::ParamMismatch(problems));
        }
        for (name, v) in self.names.iter().zip(self.values.iter_mut()) {
            *v = other.by_name(name).expect("checked").clone();
        }
        Ok(())
    }
}

/// Per-parameter gradient sums for one optimizer step. A slot stays `None`
/// until some example routes gradient into it.
#[derive(Debug, Clone)]
pub struct GradBuffer<T> {
    slots: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn new(len: usize) -> Self {
        Self {
            slots: (0..len).map(|_| None).collect(),
        }
    }

    pub fn for_store(store: &ParamStore<T>) -> Self {
        Self::new(store.len())
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) {
        match &mut self.slots[id.0] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.slots[id.0].as_ref()
    }

    pub fn slots_mut(&mut self) -> &mut [Option<Tensor<T>>] {
        &mut self.slots
    }

    pub fn slots(&self) -> &[Option<Tensor<T>>] {
        &self.slots
    }

    pub fn touched(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| ParamId(i))
    }

    pub fn scale(&mut self, c: T) {
        for t in self.slots.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v = *v * c);
        }
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }
}
