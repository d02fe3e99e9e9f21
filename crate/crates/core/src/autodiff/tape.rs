use std::cell::RefCell;
use std::rc::Rc;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adjoint of one recorded op: given the output gradient, the parent values
/// and the output value, returns one optional gradient per parent.
pub type Backward<T> = Box<dyn Fn(&Tensor<T>, &[Rc<Tensor<T>>], &Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<Backward<T>>,
    requires_grad: bool,
}

/// Linear record of executed ops. Node ids are assigned in execution order,
/// so replaying ids in descending order is exact reverse execution order.
pub struct Tape<T: Scalar = f64> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar = f64> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that gradients are not propagated into.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node(Rc::new(value), Vec::new(), None, false)
    }

    /// A leaf whose gradient is collected by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node(Rc::new(value), Vec::new(), None, true)
    }

    /// Records an op. The backward closure is dropped when no parent needs a
    /// gradient.
    pub fn push_op(&self, value: Tensor<T>, parents: &[Var<'_, T>], backward: Backward<T>) -> Var<'_, T> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        let bw = if requires_grad { Some(backward) } else { None };
        self.push_node(Rc::new(value), ids, bw, requires_grad)
    }

    fn push_node(
        &self,
        value: Rc<Tensor<T>>,
        parents: Vec<usize>,
        backward: Option<Backward<T>>,
        requires_grad: bool,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse sweep from a one-element output. Every `requires_grad` node
    /// reachable from the output receives a gradient; leaves that do not
    /// influence the output get zeros.
    pub fn backward(&self, output: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.numel(), 1, "backward from non-scalar output");
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::full(nodes[output.id].value.shape().to_vec(), T::one()));
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(bw) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let parent_vals: Vec<Rc<Tensor<T>>> = node.parents.iter().map(|&p| Rc::clone(&nodes[p].value)).collect();
            let pg = bw(&g, &parent_vals, &node.value);
            debug_assert_eq!(pg.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(pg) {
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape(), "gradient shape of node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && node.parents.is_empty() && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Gradients { grads }
    }
}

/// Gradients produced by one reverse sweep, indexed by leaf.
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}
