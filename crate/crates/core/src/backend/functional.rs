//! Function-transformation autodiff.
//!
//! [`value_and_grad`] runs the user function on a tracer: a tensor that
//! computes eagerly like any other but also carries a [`TraceExpr`] node.
//! The finished expression is then differentiated with the shared rule
//! table. Every call traces afresh.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Backend, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::kernel;
use crate::op::OpDescriptor;
use crate::vjp::{self, RuleTable};

static NEXT_TRACE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceId(u64);

/// Symbolic expression recorded while tracing. Subexpressions are shared.
pub enum TraceExpr {
    Input { slot: usize, value: Arc<Dense> },
    Constant(Arc<Dense>),
    Op {
        op: OpDescriptor,
        args: Vec<Arc<TraceExpr>>,
        value: Arc<Dense>,
    },
}

impl TraceExpr {
    /// The value observed while tracing.
    pub fn traced_value(&self) -> &Dense {
        match self {
            TraceExpr::Input { value, .. } | TraceExpr::Constant(value) | TraceExpr::Op { value, .. } => value,
        }
    }

    /// Re-evaluates the expression with fresh values bound to the input slots.
    pub fn evaluate(&self, inputs: &[&Dense]) -> Result<Dense> {
        let mut memo: HashMap<*const TraceExpr, Dense> = HashMap::new();
        self.eval_memo(inputs, &mut memo)
    }

    fn eval_memo(&self, inputs: &[&Dense], memo: &mut HashMap<*const TraceExpr, Dense>) -> Result<Dense> {
        let key = self as *const TraceExpr;
        if let Some(v) = memo.get(&key) {
            return Ok(v.clone());
        }
        let v = match self {
            TraceExpr::Input { slot, .. } => inputs
                .get(*slot)
                .map(|d| (*d).clone())
                .ok_or_else(|| Error::UntraceableOp(format!("no value bound to input slot {slot}")))?,
            TraceExpr::Constant(value) => (**value).clone(),
            TraceExpr::Op { op, args, .. } => {
                let vals = args
                    .iter()
                    .map(|a| a.eval_memo(inputs, memo))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Dense> = vals.iter().collect();
                kernel::apply(op, &refs)?
            }
        };
        memo.insert(key, v.clone());
        Ok(v)
    }

    /// Number of distinct op nodes.
    pub fn op_count(&self) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![self];
        let mut n = 0;
        while let Some(e) = stack.pop() {
            if !seen.insert(e as *const TraceExpr) {
                continue;
            }
            if let TraceExpr::Op { args, .. } = e {
                n += 1;
                stack.extend(args.iter().map(Arc::as_ref));
            }
        }
        n
    }
}

impl fmt::Debug for TraceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceExpr::Input { slot, .. } => write!(f, "in{slot}"),
            TraceExpr::Constant(v) => write!(f, "const{}", v.shape()),
            TraceExpr::Op { op, args, .. } => {
                write!(f, "{}(", op.kind)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a:?}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone)]
struct Tracer {
    trace: TraceId,
    expr: Arc<TraceExpr>,
}

#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

struct Inner {
    value: Arc<Dense>,
    tracer: Option<Tracer>,
}

impl Tensor {
    pub fn new(value: Dense) -> Self {
        Tensor::concrete(Arc::new(value))
    }

    fn concrete(value: Arc<Dense>) -> Self {
        Tensor(Arc::new(Inner { value, tracer: None }))
    }

    pub fn value(&self) -> &Dense {
        &self.0.value
    }

    pub fn trace_id(&self) -> Option<TraceId> {
        self.0.tracer.as_ref().map(|t| t.trace)
    }

    pub fn is_traced(&self) -> bool {
        self.0.tracer.is_some()
    }

    fn expr(&self) -> Arc<TraceExpr> {
        match &self.0.tracer {
            Some(t) => Arc::clone(&t.expr),
            None => Arc::new(TraceExpr::Constant(Arc::clone(&self.0.value))),
        }
    }

    /// Same buffer, no trace attached.
    pub fn untraced(&self) -> Tensor {
        Tensor::concrete(Arc::clone(&self.0.value))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FunctionalTensor({:?}, traced={})", self.0.value, self.is_traced())
    }
}

/// Result of tracing a one-argument function.
pub struct Trace {
    pub id: TraceId,
    pub output: Tensor,
}

impl Trace {
    pub fn expr(&self) -> Arc<TraceExpr> {
        self.output.expr()
    }
}

/// Runs `f` once on a tracer bound to input slot 0.
pub fn trace<F>(f: F, x: &Tensor) -> Result<Trace>
where
    F: FnOnce(&Tensor) -> Result<Tensor>,
{
    let id = TraceId(NEXT_TRACE.fetch_add(1, Ordering::Relaxed));
    let value = Arc::clone(&x.0.value);
    let tracer = Tensor(Arc::new(Inner {
        value: Arc::clone(&value),
        tracer: Some(Tracer {
            trace: id,
            expr: Arc::new(TraceExpr::Input { slot: 0, value }),
        }),
    }));
    let output = f(&tracer)?;
    match output.trace_id() {
        Some(other) if other != id => Err(Error::UntraceableOp(
            "function returned a tensor from a different trace".into(),
        )),
        _ => Ok(Trace { id, output }),
    }
}

/// Reverse sweep over a trace, returning the cotangent of input slot 0.
fn backprop(rules: &RuleTable, root: &Arc<TraceExpr>, x: &Dense) -> Result<Dense> {
    // children before parents
    let mut order: Vec<&TraceExpr> = Vec::new();
    let mut seen: HashSet<*const TraceExpr> = HashSet::new();
    let mut stack: Vec<(&TraceExpr, bool)> = vec![(root.as_ref(), false)];
    while let Some((e, expanded)) = stack.pop() {
        if expanded {
            order.push(e);
            continue;
        }
        if !seen.insert(e as *const TraceExpr) {
            continue;
        }
        stack.push((e, true));
        if let TraceExpr::Op { args, .. } = e {
            for a in args.iter().rev() {
                stack.push((a.as_ref(), false));
            }
        }
    }

    let mut cot: HashMap<*const TraceExpr, Dense> = HashMap::new();
    let seed = root.traced_value();
    cot.insert(
        Arc::as_ptr(root),
        Dense::filled(seed.shape().clone(), 1.0, seed.dtype()),
    );
    let mut grad: Option<Dense> = None;

    for e in order.into_iter().rev() {
        let Some(g) = cot.remove(&(e as *const TraceExpr)) else {
            continue;
        };
        match e {
            TraceExpr::Input { slot: 0, .. } => grad = Some(g),
            TraceExpr::Input { .. } | TraceExpr::Constant(_) => {}
            TraceExpr::Op { op, args, value } => {
                let inputs: Vec<&Dense> = args.iter().map(|a| a.traced_value()).collect();
                let cots = rules.vjp(op, &inputs, value, &g)?;
                for (a, c) in args.iter().zip(cots) {
                    if matches!(a.as_ref(), TraceExpr::Constant(_)) {
                        continue;
                    }
                    let key = Arc::as_ptr(a);
                    let next = match cot.remove(&key) {
                        Some(acc) => vjp::add(&acc, &c)?,
                        None => c,
                    };
                    cot.insert(key, next);
                }
            }
        }
    }
    Ok(grad.unwrap_or_else(|| kernel::zeros_like(x)))
}

pub fn value_and_grad_with<F>(rules: &RuleTable, f: F, x: &Tensor) -> Result<(Tensor, Tensor)>
where
    F: FnOnce(&Tensor) -> Result<Tensor>,
{
    let traced = trace(f, x)?;
    let out = traced.output.value();
    if out.rank() != 0 {
        return Err(Error::NonScalarOutput(out.shape().clone()));
    }
    let grad = if traced.output.is_traced() {
        backprop(rules, &traced.expr(), x.value())?
    } else {
        kernel::zeros_like(x.value())
    };
    Ok((traced.output.untraced(), Tensor::new(grad)))
}

/// Transforms `f` into a function returning `(f(x), df/dx)`.
pub fn value_and_grad<F>(f: F) -> impl Fn(&Tensor) -> Result<(Tensor, Tensor)>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    move |x| value_and_grad_with(RuleTable::standard(), &f, x)
}

/// Transforms `f` into its gradient function.
pub fn grad<F>(f: F) -> impl Fn(&Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    move |x| value_and_grad_with(RuleTable::standard(), &f, x).map(|(_, g)| g)
}

pub struct Functional;

impl Backend for Functional {
    const ID: BackendId = BackendId::Functional;
    type Tensor = Tensor;

    fn from_dense(value: Dense) -> Tensor {
        Tensor::new(value)
    }

    fn value(tensor: &Tensor) -> &Dense {
        tensor.value()
    }

    fn apply(op: &OpDescriptor, inputs: &[&Tensor]) -> Result<Tensor> {
        let mut trace = None;
        for t in inputs {
            match (trace, t.trace_id()) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::UntraceableOp(
                        "operands belong to different traces".into(),
                    ))
                }
                (None, Some(b)) => trace = Some(b),
                _ => {}
            }
        }
        let values: Vec<&Dense> = inputs.iter().map(|t| t.value()).collect();
        let value = Arc::new(kernel::apply(op, &values)?);
        let tracer = trace.map(|id| Tracer {
            trace: id,
            expr: Arc::new(TraceExpr::Op {
                op: op.clone(),
                args: inputs.iter().map(|t| t.expr()).collect(),
                value: Arc::clone(&value),
            }),
        });
        Ok(Tensor(Arc::new(Inner { value, tracer })))
    }

    fn same_object(a: &Tensor, b: &Tensor) -> bool {
        Arc::ptr_eq(&a.0, &b.0)
    }

    fn embed(tensor: Tensor) -> NativeTensor {
        NativeTensor::Functional(tensor)
    }

    fn extract(native: &NativeTensor) -> Option<&Tensor> {
        match native {
            NativeTensor::Functional(t) => Some(t),
            _ => None,
        }
    }
}
