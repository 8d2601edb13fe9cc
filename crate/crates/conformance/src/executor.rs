//! Things the harness can run cases on.

use tensorbridge::functions::apply;
use tensorbridge::{autodiff, BackendId, Dense, OpDescriptor, Result, RuleTable, TensorHandle};

/// A differentiable test function of one tensor.
pub type ScalarFn = fn(&TensorHandle) -> Result<TensorHandle>;

pub trait Executor: Send + Sync {
    fn name(&self) -> &str;

    fn has_autodiff(&self) -> bool;

    fn eval(&self, op: &OpDescriptor, inputs: &[Dense]) -> Result<Dense>;

    fn value_and_grad(&self, f: ScalarFn, x: &Dense) -> Result<(Dense, Dense)>;
}

/// Runs everything on one backend through the public facade.
pub struct BackendExecutor {
    backend: BackendId,
    name: String,
    rules: Option<RuleTable>,
}

impl BackendExecutor {
    pub fn new(backend: BackendId) -> Self {
        BackendExecutor {
            backend,
            name: backend.name().to_string(),
            rules: None,
        }
    }

    /// Same backend, but differentiating with `rules` under another name.
    pub fn with_rules(backend: BackendId, name: impl Into<String>, rules: RuleTable) -> Self {
        BackendExecutor {
            backend,
            name: name.into(),
            rules: Some(rules),
        }
    }

    pub fn backend(&self) -> BackendId {
        self.backend
    }
}

impl Executor for BackendExecutor {
    fn name(&self) -> &str {
        &self.name
    }

    fn has_autodiff(&self) -> bool {
        self.backend.has_autodiff()
    }

    fn eval(&self, op: &OpDescriptor, inputs: &[Dense]) -> Result<Dense> {
        let handles: Vec<TensorHandle> = inputs
            .iter()
            .map(|d| TensorHandle::from_dense(self.backend, d.clone()))
            .collect();
        let refs: Vec<&TensorHandle> = handles.iter().collect();
        apply(self.backend, op, &refs).map(|h| h.value().clone())
    }

    fn value_and_grad(&self, f: ScalarFn, x: &Dense) -> Result<(Dense, Dense)> {
        let rules = self.rules.as_ref().unwrap_or_else(|| RuleTable::standard());
        let x = TensorHandle::from_dense(self.backend, x.clone());
        let (v, g) = autodiff::value_and_grad_with(rules, f, &x)?;
        Ok((v.value().clone(), g.value().clone()))
    }
}

/// One executor per backend, in the canonical order.
pub fn all_backends() -> Vec<Box<dyn Executor>> {
    BackendId::ALL
        .iter()
        .map(|&b| Box::new(BackendExecutor::new(b)) as Box<dyn Executor>)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensorbridge::{DType, OpKind};

    #[test]
    fn eval_matches_kernel() {
        let x = Dense::from_f64([3], &[1., 2., 3.], DType::F64).unwrap();
        for e in all_backends() {
            let y = e.eval(&OpDescriptor::new(OpKind::Square), std::slice::from_ref(&x)).unwrap();
            assert_eq!(y.to_f64_vec(), vec![1., 4., 9.]);
        }
    }

    #[test]
    fn norm_goes_through_the_facade() {
        let x = Dense::from_f64([2], &[3., 4.], DType::F64).unwrap();
        let e = BackendExecutor::new(BackendId::Functional);
        assert_eq!(e.eval(&OpDescriptor::new(OpKind::Norm), &[x]).unwrap().item(), Some(5.0));
    }
}
