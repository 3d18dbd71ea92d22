use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Tensor};

/// What a backward rule sees: the gradient of the node's output, its input
/// values, its output value and which inputs need a gradient.
pub struct BackwardArgs<'a> {
    pub grad: &'a Tensor,
    pub inputs: &'a [&'a Tensor],
    pub output: &'a Tensor,
    pub needs: &'a [bool],
}

/// Returns one optional gradient per input, in input order.
pub type BackwardFn = Box<dyn Fn(&BackwardArgs<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so node ids are a topological
/// order of the graph. A tape is single-threaded; build one per batch.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bindings: RefCell<HashMap<usize, usize>>,
    training: bool,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new(false)
    }
}

impl Tape {
    pub fn new(training: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            bindings: RefCell::new(HashMap::new()),
            training,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A value that is not differentiated.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        })
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
        })
    }

    /// Binds a named parameter as a leaf. Binding the same name twice returns
    /// the same node.
    pub fn param<'t>(&'t self, params: &ParameterSet, name: &str) -> Result<Var<'t>> {
        let idx = params
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if let Some(&id) = self.bindings.borrow().get(&idx) {
            return Ok(Var { tape: self, id });
        }
        let entry = params.entry(idx);
        let var = if entry.requires_grad {
            self.leaf(entry.value.clone())
        } else {
            self.constant(entry.value.clone())
        };
        self.bindings.borrow_mut().insert(idx, var.id);
        Ok(var)
    }

    /// Records an operation with a custom backward rule.
    pub fn custom<'t>(&'t self, value: Tensor, inputs: &[Var<'t>], backward: BackwardFn) -> Var<'t> {
        let (parents, requires_grad) = {
            let nodes = self.nodes.borrow();
            let parents: Vec<usize> = inputs.iter().map(|v| v.id).collect();
            let rg = parents.iter().any(|&p| nodes[p].requires_grad);
            (parents, rg)
        };
        self.push_node(Node {
            value,
            parents,
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    pub(crate) fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(root.value.shape().to_vec()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &nodes[p].value).collect();
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&BackwardArgs {
                grad: &g,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            });
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape());
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients {
            grads,
            bindings: self.bindings.borrow().clone(),
        })
    }
}

/// Gradients of leaves after a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    bindings: HashMap<usize, usize>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// `(parameter index, node gradient)` for every bound parameter.
    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (usize, Option<&Tensor>)> + '_ {
        self.bindings
            .iter()
            .map(|(&pi, &id)| (pi, self.grads.get(id).and_then(Option::as_ref)))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }
}

/// Runs the reverse sweep and adds the parameter gradients into `params`.
pub fn backward(loss: Var<'_>, params: &mut ParameterSet) -> Result<()> {
    let grads = loss.tape.gradients(loss)?;
    params.accumulate(&grads);
    Ok(())
}
