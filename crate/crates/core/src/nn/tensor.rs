use crate::error::{Error, Result};
use crate::posit::{PositFormat, PositWord};
use crate::reference::quantize_f64;

/// Row-major tensor. `data.len()` always equals the product of `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }
}

/// Maps every element to the nearest posit, ties to the even pattern.
/// Non-finite elements become NaR.
pub fn quantize(t: &Tensor<f64>, format: PositFormat) -> Tensor<PositWord> {
    t.map(|&x| quantize_f64(x, format))
}

/// Exact values of a posit tensor; NaR reads as NaN.
pub fn dequantize(t: &Tensor<PositWord>) -> Tensor<f64> {
    t.map(|w| w.to_f64())
}
