use std::collections::HashSet;

use super::Tensor;
use crate::error::{Error, Result};

/// Ordered, uniquely named collection of tensors that can be viewed as one
/// flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    entries: Vec<(String, Tensor)>,
}

impl ParamVector {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate parameter name `{name}`")));
            }
        }
        Ok(ParamVector { entries })
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// New vector with this layout and the given flat values.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamVector> {
        if flat.len() != self.total_len() {
            return Err(Error::shape("unflatten", &[self.total_len()], &[flat.len()]));
        }
        let mut offset = 0;
        let entries = self
            .entries
            .iter()
            .map(|(name, t)| {
                let n = t.len();
                let slice = flat[offset..offset + n].to_vec();
                offset += n;
                Tensor::new(t.shape().to_vec(), slice).map(|t| (name.clone(), t))
            })
            .collect::<Result<_>>()?;
        Ok(ParamVector { entries })
    }
}
