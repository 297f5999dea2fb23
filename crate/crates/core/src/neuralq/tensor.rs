use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Real;

/// Dense row-major n-d array with an optional gradient buffer of the same
/// shape. The buffer exists iff the tensor requires gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: &[usize], values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(Tensor { shape: shape.to_vec(), values, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), values: vec![T::zero(); n], grad: None }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), values: vec![v; n], grad: None }
    }

    /// Gaussian initialization with the given standard deviation.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let n: usize = shape.iter().product();
        let normal = Normal::new(0.0, std.max(0.0)).expect("valid std");
        let values = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
        Tensor { shape: shape.to_vec(), values, grad: None }
    }

    /// Enables gradient tracking with a zeroed buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![T::zero(); self.values.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Values and gradient buffer borrowed together.
    pub fn split_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (&mut self.values, self.grad.as_deref_mut())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.values.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Sub-tensor along the leading axis.
    pub fn index_first(&self, i: usize) -> Result<Tensor<T>> {
        let (&n, rest) = self
            .shape
            .split_first()
            .ok_or_else(|| Error::Shape("index into a scalar tensor".into()))?;
        if i >= n {
            return Err(Error::Bounds(format!("index {i} of axis with {n} entries")));
        }
        let stride: usize = rest.iter().product();
        Tensor::from_vec(rest, self.values[i * stride..(i + 1) * stride].to_vec())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items.first().ok_or_else(|| Error::Shape("stack of zero tensors".into()))?;
        if items.iter().any(|t| t.shape != first.shape) {
            return Err(Error::Shape("stack of differently shaped tensors".into()));
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let values = items.iter().flat_map(|t| t.values.iter().copied()).collect();
        Tensor::from_vec(&shape, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_grads() {
        let t = Tensor::<f64>::zeros(&[2, 3]);
        assert_eq!(t.numel(), 6);
        assert!(!t.requires_grad());
        let mut g = t.clone().with_grad();
        g.grad_mut().unwrap()[1] = 2.0;
        g.zero_grad();
        assert_eq!(g.grad().unwrap(), &[0.0; 6]);
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        let s = Tensor::stack(&[Tensor::filled(&[2], 1.0f64), Tensor::filled(&[2], 2.0)]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.index_first(1).unwrap().values(), &[2.0, 2.0]);
        assert!(s.clone().reshape(&[3]).is_err());
    }
}
