//! Gradient-tape autodiff.
//!
//! Tensors carry only an id. While a [`GradientTape`] scope is open on the
//! current thread, every op whose inputs the tape is tracking (watched
//! tensors and anything computed from them) is appended to the tape.
//! Gradients are queried afterwards with [`GradientTape::gradient`].

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use super::{Backend, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::kernel;
use crate::op::OpDescriptor;
use crate::vjp::{self, RuleTable};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static ACTIVE: RefCell<Vec<Arc<Mutex<TapeState>>>> = const { RefCell::new(Vec::new()) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

struct Inner {
    id: TensorId,
    value: Arc<Dense>,
}

impl Tensor {
    pub fn new(value: Dense) -> Self {
        Tensor(Arc::new(Inner {
            id: TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed)),
            value: Arc::new(value),
        }))
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn value(&self) -> &Dense {
        &self.0.value
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TapeTensor(#{}, {:?})", self.0.id.0, self.0.value)
    }
}

/// One recorded op.
#[derive(Clone)]
pub struct Record {
    pub op: OpDescriptor,
    pub inputs: Vec<Tensor>,
    pub output: Tensor,
}

impl Record {
    pub fn input_ids(&self) -> Vec<TensorId> {
        self.inputs.iter().map(Tensor::id).collect()
    }
}

struct TapeState {
    records: Vec<Record>,
    watched: HashSet<TensorId>,
    // watched tensors plus every recorded output
    tracked: HashSet<TensorId>,
    active: bool,
    persistent: bool,
    consumed: bool,
}

pub struct GradientTape {
    state: Arc<Mutex<TapeState>>,
}

struct ScopeGuard(Arc<Mutex<TapeState>>);

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        ACTIVE.with(|stack| {
            stack.borrow_mut().retain(|s| !Arc::ptr_eq(s, &self.0));
        });
        if let Ok(mut s) = self.0.lock() {
            s.active = false;
        }
    }
}

/// Runs `body` with a new tape recording on this thread, and returns the
/// body's result together with the (now inactive) tape.
pub fn tape_scope<T>(
    persistent: bool,
    body: impl FnOnce(&GradientTape) -> Result<T>,
) -> Result<(T, GradientTape)> {
    let tape = GradientTape {
        state: Arc::new(Mutex::new(TapeState {
            records: Vec::new(),
            watched: HashSet::new(),
            tracked: HashSet::new(),
            active: true,
            persistent,
            consumed: false,
        })),
    };
    ACTIVE.with(|stack| stack.borrow_mut().push(Arc::clone(&tape.state)));
    let guard = ScopeGuard(Arc::clone(&tape.state));
    let out = body(&tape);
    drop(guard);
    Ok((out?, tape))
}

impl GradientTape {
    fn lock(&self) -> MutexGuard<'_, TapeState> {
        self.state.lock().expect("tape lock")
    }

    pub fn watch(&self, tensor: &Tensor) {
        let mut s = self.lock();
        s.watched.insert(tensor.id());
        s.tracked.insert(tensor.id());
    }

    pub fn is_watched(&self, tensor: &Tensor) -> bool {
        self.lock().watched.contains(&tensor.id())
    }

    pub fn is_active(&self) -> bool {
        self.lock().active
    }

    pub fn is_persistent(&self) -> bool {
        self.lock().persistent
    }

    pub fn records(&self) -> Vec<Record> {
        self.lock().records.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gradients of `target` (summed, if it is not a scalar) with respect to each source.
    pub fn gradient(&self, target: &Tensor, sources: &[&Tensor]) -> Result<Vec<Tensor>> {
        self.gradient_with(RuleTable::standard(), target, sources)
    }

    pub fn gradient_with(
        &self,
        rules: &RuleTable,
        target: &Tensor,
        sources: &[&Tensor],
    ) -> Result<Vec<Tensor>> {
        let mut s = self.lock();
        if s.consumed && !s.persistent {
            return Err(Error::TapeConsumed);
        }
        s.consumed = true;
        if sources.iter().any(|t| !s.tracked.contains(&t.id())) {
            return Err(Error::NotWatched);
        }
        if !s.tracked.contains(&target.id()) {
            return Err(Error::NotRecorded);
        }

        let mut cot: HashMap<TensorId, Dense> = HashMap::new();
        let seed = Dense::filled(target.value().shape().clone(), 1.0, target.value().dtype());
        cot.insert(target.id(), seed);

        for record in s.records.iter().rev() {
            let Some(g) = cot.get(&record.output.id()).cloned() else {
                continue;
            };
            let inputs: Vec<&Dense> = record.inputs.iter().map(Tensor::value).collect();
            let cots = rules.vjp(&record.op, &inputs, record.output.value(), &g)?;
            for (input, c) in record.inputs.iter().zip(cots) {
                if !s.tracked.contains(&input.id()) {
                    continue;
                }
                let next = match cot.remove(&input.id()) {
                    Some(acc) => vjp::add(&acc, &c)?,
                    None => c,
                };
                cot.insert(input.id(), next);
            }
        }

        Ok(sources
            .iter()
            .map(|src| {
                let g = cot
                    .get(&src.id())
                    .cloned()
                    .unwrap_or_else(|| kernel::zeros_like(src.value()));
                Tensor::new(g)
            })
            .collect())
    }
}

impl fmt::Debug for GradientTape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.lock();
        f.debug_struct("GradientTape")
            .field("records", &s.records.len())
            .field("watched", &s.watched.len())
            .field("active", &s.active)
            .field("persistent", &s.persistent)
            .finish()
    }
}

pub struct Tape;

impl Backend for Tape {
    const ID: BackendId = BackendId::Tape;
    type Tensor = Tensor;

    fn from_dense(value: Dense) -> Tensor {
        Tensor::new(value)
    }

    fn value(tensor: &Tensor) -> &Dense {
        tensor.value()
    }

    fn apply(op: &OpDescriptor, inputs: &[&Tensor]) -> Result<Tensor> {
        let values: Vec<&Dense> = inputs.iter().map(|t| t.value()).collect();
        let out = Tensor::new(kernel::apply(op, &values)?);
        ACTIVE.with(|stack| {
            for state in stack.borrow().iter() {
                let mut s = state.lock().expect("tape lock");
                if s.active && inputs.iter().any(|t| s.tracked.contains(&t.id())) {
                    s.tracked.insert(out.id());
                    s.records.push(Record {
                        op: op.clone(),
                        inputs: inputs.iter().map(|&t| t.clone()).collect(),
                        output: out.clone(),
                    });
                }
            }
        });
        Ok(out)
    }

    fn same_object(a: &Tensor, b: &Tensor) -> bool {
        Arc::ptr_eq(&a.0, &b.0)
    }

    fn embed(tensor: Tensor) -> NativeTensor {
        NativeTensor::Tape(tensor)
    }

    fn extract(native: &NativeTensor) -> Option<&Tensor> {
        match native {
            NativeTensor::Tape(t) => Some(t),
            _ => None,
        }
    }
}
