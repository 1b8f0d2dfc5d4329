use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Named network tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::shape(format!("missing parameter {name:?}")))
    }

    /// Overwrites an existing entry; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::shape(format!("missing parameter {name:?}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter {name:?}: shape {:?} cannot become {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::shape(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count across all tensors.
    pub fn num_elements(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_ordered() {
        let mut p = ParamSet::<f32>::new();
        p.insert("b", Tensor::zeros(&[2])).unwrap();
        p.insert("a", Tensor::zeros(&[3])).unwrap();
        assert!(p.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(p.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(p.num_elements(), 5);
    }

    #[test]
    fn shapes_are_immutable() {
        let mut p = ParamSet::<f32>::new();
        p.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(p.set("w", Tensor::zeros(&[4])).is_err());
        assert!(p.set("w", Tensor::full(&[2, 2], 1.0)).is_ok());
        assert!(p.set("missing", Tensor::zeros(&[1])).is_err());
    }
}
