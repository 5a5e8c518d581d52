use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use super::ops::backward_op;
use super::{Element, Result, Tensor, TensorError};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Disables graph recording on this thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

/// Nodes reachable from `root` through recorded ops, inputs before users.
fn topo_order<T: Element>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(root.clone(), 0)];
    seen.insert(root.id());
    while let Some((node, next)) = stack.pop() {
        let inputs = node.node().op.as_ref().map(|op| op.inputs.as_slice()).unwrap_or(&[]);
        if next < inputs.len() {
            let child = inputs[next].clone();
            stack.push((node, next + 1));
            if child.requires_grad() && seen.insert(child.id()) {
                stack.push((child, 0));
            }
        } else {
            order.push(node);
        }
    }
    order
}

/// Gradients of the scalar `output` with respect to `inputs`.
///
/// With `create_graph`, the returned gradients are themselves recorded and
/// can be differentiated again. Entries are `None` for inputs that do not
/// influence `output`.
pub fn grad<T: Element>(
    output: &Tensor<T>,
    inputs: &[Tensor<T>],
    create_graph: bool,
) -> Result<Vec<Option<Tensor<T>>>> {
    if output.numel() != 1 {
        return Err(TensorError::NotScalar(output.shape().to_vec()));
    }
    let targets: HashSet<usize> = inputs.iter().map(Tensor::id).collect();
    let order = topo_order(output);

    // Only propagate along paths that lead to a requested input.
    let mut needed: HashSet<usize> = HashSet::new();
    for node in &order {
        let hit = targets.contains(&node.id())
            || node
                .node()
                .op
                .as_ref()
                .is_some_and(|op| op.inputs.iter().any(|i| needed.contains(&i.id())));
        if hit {
            needed.insert(node.id());
        }
    }

    let _guard = (!create_graph).then(no_grad);
    let mut grads: HashMap<usize, Tensor<T>> = HashMap::new();
    if needed.contains(&output.id()) {
        grads.insert(output.id(), Tensor::ones(output.shape()));
    }
    for node in order.iter().rev() {
        let Some(op) = node.node().op.as_ref() else { continue };
        if !needed.contains(&node.id()) {
            continue;
        }
        let Some(g) = grads.remove(&node.id()) else { continue };
        let input_grads = backward_op(op, node, &g)?;
        for (inp, gi) in op.inputs.iter().zip(input_grads) {
            let Some(gi) = gi else { continue };
            if !needed.contains(&inp.id()) {
                continue;
            }
            let acc = match grads.remove(&inp.id()) {
                Some(prev) => prev.add(&gi)?,
                None => gi,
            };
            grads.insert(inp.id(), acc);
        }
        // Keep gradients of requested non-leaf tensors.
        if targets.contains(&node.id()) {
            grads.insert(node.id(), g);
        }
    }
    Ok(inputs.iter().map(|t| grads.get(&t.id()).cloned()).collect())
}

/// `Σᵢ (∂d_out/∂xᵢ)²`, kept on the graph so it can be trained through.
pub fn second_order_grad_norm<T: Element>(d_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let g = grad(d_out, std::slice::from_ref(x), true)?
        .pop()
        .flatten()
        .ok_or(TensorError::NotOnGraph)?;
    Ok(g.mul(&g)?.sum())
}

impl<T: Element> Tensor<T> {
    fn reachable_leaves(&self) -> Vec<Tensor<T>> {
        topo_order(self)
            .into_iter()
            .filter(|t| t.is_leaf() && t.requires_grad())
            .collect()
    }

    /// Populates `grad` on every leaf that requires gradients and feeds this
    /// scalar. A second call without [`reset_grad`](Self::reset_grad) fails.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if self.node().consumed.get() {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let leaves = self.reachable_leaves();
        let grads = grad(self, &leaves, false)?;
        for (leaf, g) in leaves.iter().zip(grads) {
            let Some(g) = g else { continue };
            let mut slot = leaf.node().grad.borrow_mut();
            match slot.as_mut() {
                Some(acc) => acc.iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b),
                None => *slot = Some(g.to_vec()),
            }
        }
        self.node().consumed.set(true);
        Ok(())
    }

    /// Clears leaf gradients reachable from this output and re-arms `backward`.
    pub fn reset_grad(&self) {
        for leaf in self.reachable_leaves() {
            leaf.node().grad.borrow_mut().take();
        }
        self.node().consumed.set(false);
    }
}
