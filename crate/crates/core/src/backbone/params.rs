//! Flat, ordered, named view of all learnable parameters of one backbone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// One named parameter block (a conv weight or bias) in flattened row-major
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

/// Ordered sequence of parameter blocks. Two backbones built from the same
/// architecture spec produce identically ordered, identically shaped vectors,
/// which is what the parameter-blending update relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<F> {
    blocks: Vec<ParamBlock<F>>,
}

impl<F: Real> ParamVector<F> {
    pub fn new(blocks: Vec<ParamBlock<F>>) -> Self {
        ParamVector { blocks }
    }

    pub fn blocks(&self) -> &[ParamBlock<F>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock<F>] {
        &mut self.blocks
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat iterator over all values in block order.
    pub fn iter(&self) -> impl Iterator<Item = &F> {
        self.blocks.iter().flat_map(|b| b.values.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.blocks.iter_mut().flat_map(|b| b.values.iter_mut())
    }

    /// Same block names and shapes in the same order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(other.blocks.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    values: vec![F::zero(); b.values.len()],
                })
                .collect(),
        }
    }

    /// Elementwise `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &Self, alpha: F) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::shape(
                "parameter vectors have different layouts".to_string(),
            ));
        }
        let beta = F::one() - alpha;
        let blocks = self
            .blocks
            .iter()
            .zip(other.blocks.iter())
            .map(|(a, b)| ParamBlock {
                name: a.name.clone(),
                shape: a.shape.clone(),
                values: a
                    .values
                    .iter()
                    .zip(b.values.iter())
                    .map(|(&x, &y)| alpha * x + beta * y)
                    .collect(),
            })
            .collect();
        Ok(ParamVector { blocks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: Vec<f64>) -> ParamVector<f64> {
        ParamVector::new(vec![ParamBlock {
            name: "w".into(),
            shape: vec![values.len()],
            values,
        }])
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let a = pv(vec![1.0, -2.0, 3.5]);
        let b = pv(vec![0.25, 7.0, -1.0]);
        assert_eq!(a.blend(&b, 1.0).unwrap(), a);
        assert_eq!(a.blend(&b, 0.0).unwrap(), b);
    }

    #[test]
    fn blend_quarter() {
        let a = pv(vec![2.0; 4]);
        let b = pv(vec![0.0; 4]);
        let out = a.blend(&b, 0.25).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn layout_mismatch_rejected() {
        let a = pv(vec![1.0, 2.0]);
        let b = pv(vec![1.0, 2.0, 3.0]);
        assert!(a.blend(&b, 0.5).is_err());
    }
}
