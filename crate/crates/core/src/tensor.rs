use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, row-major array of `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorF32 {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorF32 {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                what: name,
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { name, shape, data })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw IEEE-754 bit patterns, in element order.
    pub fn bits(&self) -> impl Iterator<Item = u32> + '_ {
        self.data.iter().map(|v| v.to_bits())
    }

    /// True when every element has the same bit pattern as in `other`.
    /// Unlike `==`, this treats NaN payloads and signed zeros exactly.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Bitwise equality over two parameter lists.
pub fn params_bit_eq(a: &[TensorF32], b: &[TensorF32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
}
