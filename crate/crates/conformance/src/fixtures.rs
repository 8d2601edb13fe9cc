//! Deliberately broken executors. A harness that cannot tell these apart
//! from the real backends is not testing anything.

use tensorbridge::kernel;
use tensorbridge::vjp::{self, VjpArgs};
use tensorbridge::{BackendId, Dense, OpDescriptor, OpKind, Result, RuleTable};

use crate::executor::{BackendExecutor, Executor, ScalarFn};

/// Computes `x + 1` for `square`.
pub struct WrongKernel {
    inner: BackendExecutor,
}

impl WrongKernel {
    pub fn new(backend: BackendId) -> Self {
        WrongKernel {
            inner: BackendExecutor::new(backend),
        }
    }
}

impl Executor for WrongKernel {
    fn name(&self) -> &str {
        "wrong-kernel"
    }

    fn has_autodiff(&self) -> bool {
        self.inner.has_autodiff()
    }

    fn eval(&self, op: &OpDescriptor, inputs: &[Dense]) -> Result<Dense> {
        if op.kind == OpKind::Square {
            return kernel::apply(&OpDescriptor::with_scalar(OpKind::Add, 1.0), &[&inputs[0]]);
        }
        self.inner.eval(op, inputs)
    }

    fn value_and_grad(&self, f: ScalarFn, x: &Dense) -> Result<(Dense, Dense)> {
        self.inner.value_and_grad(f, x)
    }
}

fn negated_square(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let two = Dense::scalar(-2.0, a.cotangent.dtype());
    Ok(vec![vjp::mul(a.cotangent, &vjp::mul(&two, a.inputs[0])?)?])
}

/// The `square` rule with its sign flipped.
pub fn flipped_vjp_sign(backend: BackendId) -> BackendExecutor {
    let rules = RuleTable::builtin().with_rule(OpKind::Square, negated_square);
    BackendExecutor::with_rules(backend, "flipped-vjp-sign", rules)
}

fn scalar_factor(a: &VjpArgs<'_>, s: f64) -> Dense {
    Dense::scalar(s, a.cotangent.dtype())
}

fn add_no_reduce(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![a.cotangent.clone(); a.inputs.len()])
}

fn mul_no_reduce(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    if let Some(s) = a.op.scalar {
        return Ok(vec![vjp::mul(a.cotangent, &scalar_factor(a, s))?]);
    }
    Ok(vec![
        vjp::mul(a.cotangent, a.inputs[1])?,
        vjp::mul(a.cotangent, a.inputs[0])?,
    ])
}

/// `add` and `mul` rules that hand the broadcast cotangent back unreduced.
pub fn missing_broadcast_reduction(backend: BackendId) -> BackendExecutor {
    let rules = RuleTable::builtin()
        .with_rule(OpKind::Add, add_no_reduce)
        .with_rule(OpKind::Mul, mul_no_reduce);
    BackendExecutor::with_rules(backend, "missing-broadcast-reduction", rules)
}
