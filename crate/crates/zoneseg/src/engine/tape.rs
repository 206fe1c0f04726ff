use std::cell::RefCell;

use super::tensor::Tensor;
use super::Elem;
use crate::error::{Error, Result};

/// Gradient contributions for each tracked parent of a node, in parent order.
pub(crate) type BackFn<E> = Box<dyn Fn(&[E]) -> Vec<Vec<E>>>;

pub(crate) struct Node<E> {
    parents: Vec<usize>,
    len: usize,
    backward: BackFn<E>,
}

/// Records the computation graph for one forward pass. Create with
/// [`Tape::new`] for training or [`Tape::inference`] to run the same ops
/// without building backward closures.
pub struct Tape<E: Elem> {
    nodes: RefCell<Vec<Node<E>>>,
    recording: bool,
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), recording: true }
    }

    pub fn inference() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Registers a tensor as a leaf (parameter or input) so gradients can be
    /// read for it after [`Tape::backward`].
    pub fn watch(&self, t: &Tensor<E>) -> Tensor<E> {
        let mut out = t.clone();
        out.node = self.push(Vec::new(), t.len(), Box::new(|_| Vec::new()));
        out
    }

    pub(crate) fn push(&self, parents: Vec<usize>, len: usize, backward: BackFn<E>) -> Option<usize> {
        if !self.recording {
            return None;
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { parents, len, backward });
        Some(id)
    }

    /// Reverse traversal from a scalar loss. Gradients accumulate additively
    /// across fan-out; intermediate buffers are freed as soon as consumed.
    pub fn backward(&self, loss: &Tensor<E>) -> Result<Gradients<E>> {
        if loss.len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let loss_id = loss
            .node
            .ok_or_else(|| Error::Usage("loss is not attached to this tape".into()))?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<E>>> = vec![None; nodes.len()];
        grads[loss_id] = Some(vec![E::one()]);
        for id in (0..=loss_id).rev() {
            if nodes[id].parents.is_empty() {
                continue; // leaf: keep its gradient for the caller
            }
            let Some(g) = grads[id].take() else { continue };
            let parent_grads = (nodes[id].backward)(&g);
            debug_assert_eq!(parent_grads.len(), nodes[id].parents.len());
            for (&pid, pg) in nodes[id].parents.iter().zip(parent_grads) {
                debug_assert_eq!(pg.len(), nodes[pid].len);
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&pg) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of a backward pass; indexed by the tensors handed out by
/// [`Tape::watch`].
pub struct Gradients<E> {
    grads: Vec<Option<Vec<E>>>,
}

impl<E: Elem> Gradients<E> {
    pub fn get(&self, t: &Tensor<E>) -> Option<&[E]> {
        let id = t.node?;
        self.grads.get(id)?.as_deref()
    }
}
