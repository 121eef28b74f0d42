use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Ordered collection of named tensors. Model parameters and their
/// gradients both use it; order is the registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensors<T: Scalar = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

/// Per-parameter gradients; each entry mirrors the parameter of the same name.
pub type Gradients<T = f32> = NamedTensors<T>;

impl<T: Scalar> Default for NamedTensors<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<T: Scalar> NamedTensors<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.entries.push((name.into(), tensor));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn tensor(&self, index: usize) -> &Tensor<T> {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.entries[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> NamedTensors<U> {
        NamedTensors {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_matches(&self, other: &Self) -> Result<(), NnError> {
        if self.len() != other.len() {
            return Err(NnError::Shape(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for ((an, at), (bn, bt)) in self.entries.iter().zip(&other.entries) {
            if an != bn {
                return Err(NnError::Shape(format!(
                    "expected tensor `{an}`, found `{bn}`"
                )));
            }
            if at.shape() != bt.shape() {
                return Err(NnError::Shape(format!(
                    "tensor `{an}` has shape {:?}, expected {:?}",
                    bt.shape(),
                    at.shape()
                )));
            }
        }
        Ok(())
    }

    /// Element-wise accumulation of a structurally identical collection.
    pub fn accumulate(&mut self, other: &Self) -> Result<(), NnError> {
        self.check_matches(other)?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) {
        for (_, t) in self.entries.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
}
