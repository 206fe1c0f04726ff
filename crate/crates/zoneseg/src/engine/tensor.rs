use std::sync::Arc;

use super::Elem;
use crate::error::{Error, Result};

/// Dense tensor with a shared, immutable data buffer. Feature maps are 4-axis
/// `(channels, depth, height, width)` with width fastest varying; convolution
/// kernels are 5-axis `(out_c, in_c, kd, kh, kw)`; biases are 1-axis; scalars
/// have shape `[1]`.
#[derive(Clone, Debug)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Arc<Vec<E>>,
    /// Tape node id when this tensor participates in a recorded graph.
    pub(crate) node: Option<usize>,
}

impl<E: Elem> Tensor<E> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("all extents must be >= 1, got {shape:?}")));
        }
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {len} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data: Arc::new(data), node: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![E::zero(); len]), node: None }
    }

    pub fn scalar(v: E) -> Self {
        Tensor { shape: vec![1], data: Arc::new(vec![v]), node: None }
    }

    /// Feature-map constructor with the `(C, D, H, W)` layout.
    pub fn volume(c: usize, d: usize, h: usize, w: usize, data: Vec<E>) -> Result<Self> {
        Self::from_vec(vec![c, d, h, w], data)
    }

    pub(crate) fn new_internal(shape: Vec<usize>, data: Vec<E>, node: Option<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data: Arc::new(data), node }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<E>> {
        Arc::clone(&self.data)
    }

    pub fn item(&self) -> E {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    /// Extents of a 4-axis feature map as `(c, d, h, w)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, d, h, w] => Ok((c, d, h, w)),
            other => Err(Error::Shape(format!("expected a 4-axis feature map, got {other:?}"))),
        }
    }

    /// Converts the element type, dropping any tape linkage.
    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        let data: Vec<F> = self.data.iter().map(|&v| F::from_f64(v.to_f64())).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data), node: None }
    }
}
