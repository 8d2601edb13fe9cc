//! Define-by-run autodiff.
//!
//! Ops on tensors that require gradients record their inputs as they execute,
//! building a graph on the fly. `backward` walks that graph from a scalar loss
//! and accumulates into every reachable node that requires gradients. The
//! graph is retained, so a second `backward` adds the same gradients again
//! until `zero_grad` clears them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use super::{Backend, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::kernel;
use crate::op::OpDescriptor;
use crate::vjp::{self, RuleTable};

#[derive(Clone)]
pub struct Tensor(Arc<GradNode>);

/// Per-tensor autodiff state.
pub struct GradNode {
    value: Arc<Dense>,
    requires_grad: AtomicBool,
    grad: Mutex<Option<Dense>>,
    origin: Option<Origin>,
}

struct Origin {
    op: OpDescriptor,
    parents: Vec<Tensor>,
}

impl Tensor {
    /// A new leaf that does not require gradients.
    pub fn new(value: Dense) -> Self {
        Tensor::leaf(Arc::new(value))
    }

    fn leaf(value: Arc<Dense>) -> Self {
        Tensor(Arc::new(GradNode {
            value,
            requires_grad: AtomicBool::new(false),
            grad: Mutex::new(None),
            origin: None,
        }))
    }

    pub fn value(&self) -> &Dense {
        &self.0.value
    }

    /// Marks the tensor as requiring gradients, in place.
    pub fn requires_grad_(&self) -> &Self {
        self.0.requires_grad.store(true, Ordering::Relaxed);
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad.load(Ordering::Relaxed)
    }

    pub fn is_leaf(&self) -> bool {
        self.0.origin.is_none()
    }

    /// The accumulated gradient, absent until a backward pass reached this tensor.
    pub fn grad(&self) -> Option<Dense> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// A fresh leaf sharing this tensor's buffer, cut off from its graph.
    pub fn detach(&self) -> Tensor {
        Tensor::leaf(Arc::clone(&self.0.value))
    }

    pub fn backward(&self) -> Result<()> {
        self.backward_with(RuleTable::standard())
    }

    pub fn backward_with(&self, rules: &RuleTable) -> Result<()> {
        if self.value().rank() != 0 {
            return Err(Error::NotScalarLoss(self.value().shape().clone()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topological_order();
        let mut pending: HashMap<*const GradNode, Dense> = HashMap::new();
        pending.insert(
            Arc::as_ptr(&self.0),
            Dense::filled(self.value().shape().clone(), 1.0, self.value().dtype()),
        );
        let mut finished: Vec<(&Tensor, Dense)> = Vec::with_capacity(order.len());

        for node in order.iter().rev() {
            let Some(g) = pending.remove(&Arc::as_ptr(&node.0)) else {
                continue;
            };
            if let Some(origin) = &node.0.origin {
                let inputs: Vec<&Dense> = origin.parents.iter().map(Tensor::value).collect();
                let cots = rules.vjp(&origin.op, &inputs, node.value(), &g)?;
                for (parent, c) in origin.parents.iter().zip(cots) {
                    if !parent.requires_grad() {
                        continue;
                    }
                    accumulate(&mut pending, Arc::as_ptr(&parent.0), c)?;
                }
            }
            finished.push((node, g));
        }

        for (node, g) in finished {
            let mut slot = node.0.grad.lock().expect("grad lock");
            *slot = Some(match slot.take() {
                None => g,
                Some(old) => vjp::add(&old, &g)?,
            });
        }
        Ok(())
    }

    // parents before children, restricted to nodes that require gradients
    fn topological_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const GradNode> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !seen.insert(Arc::as_ptr(&node.0)) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(origin) = &node.0.origin {
                for p in origin.parents.iter().rev() {
                    if p.requires_grad() && !seen.contains(&Arc::as_ptr(&p.0)) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

fn accumulate(pending: &mut HashMap<*const GradNode, Dense>, key: *const GradNode, c: Dense) -> Result<()> {
    let next = match pending.remove(&key) {
        Some(acc) => vjp::add(&acc, &c)?,
        None => c,
    };
    pending.insert(key, next);
    Ok(())
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ImperativeTensor({:?}, requires_grad={})",
            self.value(),
            self.requires_grad()
        )
    }
}

pub struct Imperative;

impl Backend for Imperative {
    const ID: BackendId = BackendId::Imperative;
    type Tensor = Tensor;

    fn from_dense(value: Dense) -> Tensor {
        Tensor::new(value)
    }

    fn value(tensor: &Tensor) -> &Dense {
        tensor.value()
    }

    fn apply(op: &OpDescriptor, inputs: &[&Tensor]) -> Result<Tensor> {
        let values: Vec<&Dense> = inputs.iter().map(|t| t.value()).collect();
        let out = Arc::new(kernel::apply(op, &values)?);
        let tracked = inputs.iter().any(|t| t.requires_grad());
        let origin = tracked.then(|| Origin {
            op: op.clone(),
            parents: inputs.iter().map(|&t| t.clone()).collect(),
        });
        Ok(Tensor(Arc::new(GradNode {
            value: out,
            requires_grad: AtomicBool::new(tracked),
            grad: Mutex::new(None),
            origin,
        })))
    }

    fn same_object(a: &Tensor, b: &Tensor) -> bool {
        Arc::ptr_eq(&a.0, &b.0)
    }

    fn embed(tensor: Tensor) -> NativeTensor {
        NativeTensor::Imperative(tensor)
    }

    fn extract(native: &NativeTensor) -> Option<&Tensor> {
        match native {
            NativeTensor::Imperative(t) => Some(t),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::OpKind;
    use crate::shape::DType;

    fn leaf(values: &[f64]) -> Tensor {
        Tensor::new(Dense::from_f64([values.len()], values, DType::F64).unwrap())
    }

    fn sum_square(x: &Tensor) -> Tensor {
        let sq = Imperative::apply(&OpDescriptor::new(OpKind::Square), &[x]).unwrap();
        Imperative::apply(&OpDescriptor::reduce(OpKind::Sum, None, false), &[&sq]).unwrap()
    }

    #[test]
    fn backward_then_accumulate_then_reset() {
        let x = leaf(&[1., 2., 3.]);
        x.requires_grad_();
        let loss = sum_square(&x);
        assert!(x.grad().is_none());
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().to_f64_vec(), vec![2., 4., 6.]);
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().to_f64_vec(), vec![4., 8., 12.]);
        x.zero_grad();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().to_f64_vec(), vec![2., 4., 6.]);
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let x = leaf(&[1., 2.]);
        let loss = sum_square(&x);
        assert!(loss.is_leaf());
        assert!(!loss.requires_grad());
        loss.backward().unwrap();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = leaf(&[1., 2.]);
        x.requires_grad_();
        let y = Imperative::apply(&OpDescriptor::new(OpKind::Square), &[&x]).unwrap();
        assert!(matches!(y.backward(), Err(Error::NotScalarLoss(_))));
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        // loss = sum(x * x) with x used twice
        let x = leaf(&[3., -1.]);
        x.requires_grad_();
        let y = Imperative::apply(&OpDescriptor::new(OpKind::Mul), &[&x, &x]).unwrap();
        let loss = Imperative::apply(&OpDescriptor::reduce(OpKind::Sum, None, false), &[&y]).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().to_f64_vec(), vec![6., -2.]);
    }

    #[test]
    fn detach_shares_buffer_but_not_graph() {
        let x = leaf(&[1., 2.]);
        x.requires_grad_();
        let d = x.detach();
        assert!(!d.requires_grad());
        assert!(std::ptr::eq(x.value(), d.value()));
    }
}
