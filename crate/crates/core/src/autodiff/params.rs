use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AdError, Tensor};

/// Named network weights. Names are unique and shapes are fixed once a
/// tensor has been registered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), AdError> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(AdError::DuplicateParam(name));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Replaces the values of an existing tensor, keeping its shape.
    pub fn set_data(&mut self, name: &str, data: &[f64]) -> Result<(), AdError> {
        let t = self.tensors.get_mut(name).ok_or_else(|| AdError::UnknownParam(name.to_string()))?;
        if t.len() != data.len() {
            return Err(AdError::ShapeMismatch {
                node: None,
                op: "set_data",
                detail: format!("{name}: {} values for shape {:?}", data.len(), t.shape()),
            });
        }
        t.data_mut().copy_from_slice(data);
        Ok(())
    }

    pub fn data_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.tensors.get_mut(name).map(|t| t.data_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(vec![2, 2])).unwrap();
        assert!(matches!(p.insert("w", Tensor::zeros(vec![1])), Err(AdError::DuplicateParam(_))));
    }

    #[test]
    fn set_data_keeps_shape() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::zeros(vec![1, 3])).unwrap();
        p.set_data("b", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.get("b").unwrap().shape(), &[1, 3]);
        assert!(p.set_data("b", &[1.0]).is_err());
        assert!(p.set_data("nope", &[1.0]).is_err());
    }
}
