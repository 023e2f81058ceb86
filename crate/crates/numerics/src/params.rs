use crate::error::{NumericsError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
}

/// Ordered collection of named, trainable tensors with gradient buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: Vec<Entry<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    /// Registers a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(NumericsError::invalid(
                "param_store",
                format!("duplicate parameter `{name}`"),
            ));
        }
        let grad = vec![T::zero(); value.numel()];
        self.entries.push(Entry { name, value, grad });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.find(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    /// Ids of all parameters whose name starts with `prefix`.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    /// Replaces a value, keeping the registered shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(NumericsError::shape(
                "set_value",
                entry.value.shape(),
                value.shape(),
            ));
        }
        entry.value = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn num_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e.name.as_str(), &e.value))
    }

    /// Same names and shapes, values converted to another float type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: vec![U::zero(); e.value.numel()],
                })
                .collect(),
        }
    }
}
