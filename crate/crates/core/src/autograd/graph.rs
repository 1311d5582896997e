use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::Tensor;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Computes parent gradients from the output gradient. The mask tells which
/// parents actually need a gradient so expensive branches can be skipped.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    id: usize,
    value: Tensor,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// A value in a dynamically recorded computation graph.
///
/// Operations on variables that do not require gradients record nothing, so
/// inference keeps only the live intermediates in memory.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn with(value: Tensor, requires_grad: bool, parents: Vec<Var>, backward: Option<BackwardFn>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            parents,
            backward,
        }))
    }

    /// A value that never receives a gradient.
    pub fn constant(value: Tensor) -> Self {
        Self::with(value, false, Vec::new(), None)
    }

    /// A trainable leaf.
    pub fn leaf(value: Tensor) -> Self {
        Self::with(value, true, Vec::new(), None)
    }

    pub(crate) fn from_op(
        value: Tensor,
        parents: Vec<Var>,
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Self {
        if parents.iter().any(Var::requires_grad) {
            Self::with(value, true, parents, Some(Box::new(backward)))
        } else {
            Self::constant(value)
        }
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.value.dim(axis)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    /// Reverse-mode differentiation of a single-element output.
    pub fn backward(&self) -> Grads {
        assert_eq!(self.value().numel(), 1, "backward() needs a scalar output");
        let mut grads = HashMap::new();
        if !self.requires_grad() {
            return Grads(grads);
        }

        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((var, expanded)) = stack.pop() {
            if expanded {
                order.push(var);
                continue;
            }
            if !visited.insert(var.id()) {
                continue;
            }
            stack.push((var.clone(), true));
            for p in &var.0.parents {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }

        grads.insert(self.id(), Tensor::full(self.shape(), 1.0));
        for var in order.iter().rev() {
            let Some(backward) = &var.0.backward else {
                continue;
            };
            let Some(g) = grads.remove(&var.id()) else {
                continue;
            };
            let mask: Vec<bool> = var.0.parents.iter().map(Var::requires_grad).collect();
            let parent_grads = backward(&g, &mask);
            debug_assert_eq!(parent_grads.len(), var.0.parents.len());
            for ((parent, pg), needed) in var.0.parents.iter().zip(parent_grads).zip(mask) {
                let Some(pg) = pg else { continue };
                if !needed {
                    continue;
                }
                debug_assert_eq!(pg.shape(), parent.shape());
                match grads.get_mut(&parent.id()) {
                    Some(acc) => acc.add_assign(&pg),
                    None => {
                        grads.insert(parent.id(), pg);
                    }
                }
            }
        }
        Grads(grads)
    }
}

/// Gradients of the leaves reached by a backward pass.
#[derive(Debug, Default)]
pub struct Grads(HashMap<usize, Tensor>);

impl Grads {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.0.get(&var.id())
    }

    /// Gradient, or zeros when the variable did not influence the output.
    pub fn get_or_zeros(&self, var: &Var) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}
