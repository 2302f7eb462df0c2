//! Dense f64 tensors with reverse-mode gradient tracking.
//!
//! The graph is define-by-run: every op allocates a fresh node holding its
//! parents and a backward closure, and the whole graph is dropped at the end
//! of the step. Parameters are long-lived leaf tensors whose grads accumulate
//! until `zero_grad`.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: bad argument: {msg}")]
    BadArg { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter `{0}` has no gradient; run backward first")]
    MissingGrad(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, DiffError>;

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

pub(crate) struct Inner {
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Shared handle to a graph node. Cloning is cheap and aliases the node.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Inner>);

impl Tensor {
    pub fn leaf(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "leaf: shape/value length mismatch"
        );
        Tensor(Rc::new(Inner {
            shape,
            values: RefCell::new(values),
            grad: RefCell::new(None),
            requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        Tensor::leaf(shape, values, true)
    }

    pub fn constant(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        Tensor::leaf(shape, values, false)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(vec![1], vec![v])
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        values: Vec<f64>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64], &[Tensor]) + 'static,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        Tensor(Rc::new(Inner {
            shape,
            values: RefCell::new(values),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        self.0.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.0.shape.len() > 1 {
            self.0.shape[1]
        } else {
            1
        }
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.values.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.0.values.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Overwrite values in place. Only meaningful for leaves (parameters).
    pub fn set_values(&self, values: &[f64]) {
        let mut v = self.0.values.borrow_mut();
        assert_eq!(v.len(), values.len());
        v.copy_from_slice(values);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, no graph history, no gradient requirement.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.0.shape.clone(), self.to_vec())
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Grads accumulate into every
    /// reachable tensor with `requires_grad`; call `zero_grad` on parameters
    /// between steps.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(DiffError::NonScalarLoss(self.0.shape.clone()));
        }
        // Topological order over parent edges, identified by node address.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: std::collections::HashSet<*const Inner> = std::collections::HashSet::new();
        // Iterative DFS; graphs here can be thousands of nodes deep.
        enum Frame {
            Enter(Tensor),
            Exit(Tensor),
        }
        let mut stack = vec![Frame::Enter(self.clone())];
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Enter(t) => {
                    let ptr = Rc::as_ptr(&t.0);
                    if visited.contains(&ptr) {
                        continue;
                    }
                    visited.insert(ptr);
                    stack.push(Frame::Exit(t.clone()));
                    for p in &t.0.parents {
                        if p.0.requires_grad {
                            stack.push(Frame::Enter(p.clone()));
                        }
                    }
                }
                Frame::Exit(t) => order.push(t),
            }
        }
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            if let Some(back) = &t.0.backward {
                let g = t.0.grad.borrow().clone();
                if let Some(g) = g {
                    back(&g, &t.0.parents);
                }
            }
        }
        // Intermediate grads are only needed during the sweep.
        for t in order.iter() {
            if t.0.backward.is_some() {
                *t.0.grad.borrow_mut() = None;
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("values", &self.0.values.borrow())
            .finish()
    }
}
