//! Reverse-mode automatic differentiation over [`Array`] values.
//!
//! A [`Tensor`] is an immutable node in a dynamically recorded graph. Leaves
//! created with [`Tensor::parameter`] accumulate gradients across calls to
//! [`Tensor::backward`] until they are replaced or reset; intermediate
//! gradients are discarded once propagated.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

use super::{Array, Element};

/// Local derivative of one recorded operation.
pub(crate) trait Backward<T: Element>: Send + Sync {
    /// Given the gradient w.r.t. the op's output, return one optional gradient
    /// per parent, in parent order. `None` means "no contribution".
    fn backward(&self, grad_out: &Array<T>, parents: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>>;
}

struct GradFn<T: Element> {
    parents: Vec<Tensor<T>>,
    op: Box<dyn Backward<T>>,
}

struct Node<T: Element> {
    value: Array<T>,
    requires_grad: bool,
    grad: Mutex<Option<Array<T>>>,
    grad_fn: Option<GradFn<T>>,
}

pub struct Tensor<T: Element>(Arc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Run `f` without recording any graph; every produced tensor is a constant.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

impl<T: Element> Tensor<T> {
    pub fn constant(value: Array<T>) -> Self {
        Tensor(Arc::new(Node {
            value,
            requires_grad: false,
            grad: Mutex::new(None),
            grad_fn: None,
        }))
    }

    /// Trainable leaf.
    pub fn parameter(value: Array<T>) -> Self {
        Tensor(Arc::new(Node {
            value,
            requires_grad: true,
            grad: Mutex::new(None),
            grad_fn: None,
        }))
    }

    pub(crate) fn from_op(
        value: Array<T>,
        parents: Vec<Tensor<T>>,
        op: impl Backward<T> + 'static,
    ) -> Self {
        let requires_grad = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            parents,
            op: Box::new(op),
        });
        Tensor(Arc::new(Node {
            value,
            requires_grad,
            grad: Mutex::new(None),
            grad_fn,
        }))
    }

    pub fn value(&self) -> &Array<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Array<T>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        match self.0.value.data() {
            [v] => Ok(*v),
            _ => Err(Error::shape(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            ))),
        }
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Propagate `d self / d leaf` into every reachable trainable leaf.
    pub fn backward(&self) -> Result<()> {
        if self.0.value.len() != 1 {
            return Err(Error::NonScalarBackward(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topological_order();
        let mut pending: HashMap<usize, Array<T>> = HashMap::new();
        pending.insert(self.key(), Array::full(self.shape(), T::one()));

        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&node.key()) else {
                continue;
            };
            match &node.0.grad_fn {
                None => {
                    let mut slot = node.0.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&grad)?,
                        None => *slot = Some(grad),
                    }
                }
                Some(gf) => {
                    let parent_grads = gf.op.backward(&grad, &gf.parents)?;
                    for (parent, pg) in gf.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        if pg.shape() != parent.shape() {
                            return Err(Error::shape(format!(
                                "internal: gradient shape {:?} for parent of shape {:?}",
                                pg.shape(),
                                parent.shape()
                            )));
                        }
                        match pending.get_mut(&parent.key()) {
                            Some(acc) => acc.add_assign(&pg)?,
                            None => {
                                pending.insert(parent.key(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over grad-requiring nodes (parents before children).
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.key()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(gf) = &node.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}
