use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};

use super::{Scalar, Tensor};

/// Named parameter tensors with a parallel gradient map of identical shapes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    values: BTreeMap<String, Tensor<T>>,
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            values: BTreeMap::new(),
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        self.grads
            .insert(name.clone(), Tensor::zeros(value.shape()));
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.values.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.values.get_mut(name)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.values().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Mutable access to value and gradient of every entry, in name order.
    pub fn iter_with_grads_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>, &Tensor<T>)> {
        self.values
            .iter_mut()
            .zip(self.grads.values())
            .map(|((k, v), g)| (k.as_str(), v, g))
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// `grad[name] += scale · g` for every entry of `grads`.
    pub fn accumulate_grads(&mut self, grads: &BTreeMap<String, Tensor<T>>, scale: T) -> Result<()> {
        for (name, g) in grads {
            let acc = self
                .grads
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter '{name}'")))?;
            if acc.shape() != g.shape() {
                return shape_err(format!(
                    "gradient for '{name}' has shape {:?}, parameter {:?}",
                    g.shape(),
                    acc.shape()
                ));
            }
            acc.data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, &b)| *a = *a + scale * b);
        }
        Ok(())
    }

    /// True when both sets hold the same names with the same shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    pub fn all_finite(&self) -> bool {
        self.values.values().all(Tensor::all_finite)
    }
}
