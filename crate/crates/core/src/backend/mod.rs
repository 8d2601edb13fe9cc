//! The four execution engines.
//!
//! All of them evaluate through [`crate::kernel`]; they differ in the native
//! tensor type they hand out and in their autodiff idiom:
//!
//! * [`plain`] has no autodiff at all.
//! * [`imperative`] builds a define-by-run graph: mark leaves with
//!   `requires_grad_`, call `backward`, read `.grad`, reset with `zero_grad`.
//! * [`tape`] records ops on a gradient tape scope and answers `gradient` queries.
//! * [`functional`] traces a function and differentiates the trace.

use std::fmt;
use std::str::FromStr;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::op::OpDescriptor;

pub mod functional;
pub mod imperative;
pub mod plain;
pub mod tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackendId {
    Plain,
    Imperative,
    Tape,
    Functional,
}

impl BackendId {
    pub const ALL: [BackendId; 4] = [
        BackendId::Plain,
        BackendId::Imperative,
        BackendId::Tape,
        BackendId::Functional,
    ];

    /// Backends that can differentiate.
    pub const AUTODIFF: [BackendId; 3] = [BackendId::Imperative, BackendId::Tape, BackendId::Functional];

    pub fn name(self) -> &'static str {
        match self {
            BackendId::Plain => "plain",
            BackendId::Imperative => "imperative",
            BackendId::Tape => "tape",
            BackendId::Functional => "functional",
        }
    }

    pub fn has_autodiff(self) -> bool {
        self != BackendId::Plain
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackendId::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownBackend(s.to_string()))
    }
}

/// One backend's native tensor type and kernel entry point.
pub trait Backend: 'static {
    const ID: BackendId;
    type Tensor: Clone + Send + Sync + fmt::Debug + 'static;

    /// Wraps an already materialized value as a native tensor.
    fn from_dense(value: Dense) -> Self::Tensor;

    fn value(tensor: &Self::Tensor) -> &Dense;

    /// Runs one primitive op, including whatever autodiff bookkeeping the backend does.
    fn apply(op: &OpDescriptor, inputs: &[&Self::Tensor]) -> Result<Self::Tensor>;

    /// Object identity (not value equality).
    fn same_object(a: &Self::Tensor, b: &Self::Tensor) -> bool;

    fn embed(tensor: Self::Tensor) -> NativeTensor;

    fn extract(native: &NativeTensor) -> Option<&Self::Tensor>;
}

/// A backend-native tensor of any registered backend.
#[derive(Debug, Clone)]
pub enum NativeTensor {
    Plain(plain::Tensor),
    Imperative(imperative::Tensor),
    Tape(tape::Tensor),
    Functional(functional::Tensor),
}

impl NativeTensor {
    pub fn backend(&self) -> BackendId {
        match self {
            NativeTensor::Plain(_) => BackendId::Plain,
            NativeTensor::Imperative(_) => BackendId::Imperative,
            NativeTensor::Tape(_) => BackendId::Tape,
            NativeTensor::Functional(_) => BackendId::Functional,
        }
    }

    pub fn value(&self) -> &Dense {
        match self {
            NativeTensor::Plain(t) => plain::Plain::value(t),
            NativeTensor::Imperative(t) => imperative::Imperative::value(t),
            NativeTensor::Tape(t) => tape::Tape::value(t),
            NativeTensor::Functional(t) => functional::Functional::value(t),
        }
    }

    pub fn from_dense(backend: BackendId, value: Dense) -> NativeTensor {
        match backend {
            BackendId::Plain => NativeTensor::Plain(plain::Plain::from_dense(value)),
            BackendId::Imperative => NativeTensor::Imperative(imperative::Imperative::from_dense(value)),
            BackendId::Tape => NativeTensor::Tape(tape::Tape::from_dense(value)),
            BackendId::Functional => NativeTensor::Functional(functional::Functional::from_dense(value)),
        }
    }

    /// True iff both refer to the very same backend object.
    pub fn same_object(&self, other: &NativeTensor) -> bool {
        match (self, other) {
            (NativeTensor::Plain(a), NativeTensor::Plain(b)) => plain::Plain::same_object(a, b),
            (NativeTensor::Imperative(a), NativeTensor::Imperative(b)) => {
                imperative::Imperative::same_object(a, b)
            }
            (NativeTensor::Tape(a), NativeTensor::Tape(b)) => tape::Tape::same_object(a, b),
            (NativeTensor::Functional(a), NativeTensor::Functional(b)) => {
                functional::Functional::same_object(a, b)
            }
            _ => false,
        }
    }
}

/// Runs one primitive op on `backend`. Every input must live on that backend.
pub fn run_kernel(backend: BackendId, op: &OpDescriptor, inputs: &[&NativeTensor]) -> Result<NativeTensor> {
    match backend {
        BackendId::Plain => run_on::<plain::Plain>(op, inputs),
        BackendId::Imperative => run_on::<imperative::Imperative>(op, inputs),
        BackendId::Tape => run_on::<tape::Tape>(op, inputs),
        BackendId::Functional => run_on::<functional::Functional>(op, inputs),
    }
}

fn run_on<B: Backend>(op: &OpDescriptor, inputs: &[&NativeTensor]) -> Result<NativeTensor> {
    let natives = inputs
        .iter()
        .map(|n| {
            B::extract(n).ok_or(Error::MixedBackends {
                expected: B::ID,
                found: n.backend(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    B::apply(op, &natives).map(B::embed)
}

macro_rules! native_conversions {
    ($backend:ty, $variant:ident) => {
        impl From<<$backend as Backend>::Tensor> for NativeTensor {
            fn from(t: <$backend as Backend>::Tensor) -> Self {
                NativeTensor::$variant(t)
            }
        }
    };
}

native_conversions!(plain::Plain, Plain);
native_conversions!(imperative::Imperative, Imperative);
native_conversions!(tape::Tape, Tape);
native_conversions!(functional::Functional, Functional);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::OpKind;
    use crate::shape::DType;

    fn t(values: &[f64], shape: &[usize]) -> Dense {
        Dense::from_f64(shape, values, DType::F64).unwrap()
    }

    #[test]
    fn names_are_stable() {
        let names: Vec<_> = BackendId::ALL.iter().map(|b| b.name()).collect();
        assert_eq!(names, ["plain", "imperative", "tape", "functional"]);
        assert_eq!("tape".parse::<BackendId>().unwrap(), BackendId::Tape);
        assert!(matches!("torch".parse::<BackendId>(), Err(Error::UnknownBackend(_))));
    }

    #[test]
    fn square_on_plain() {
        let x = NativeTensor::from_dense(BackendId::Plain, t(&[3.], &[1]));
        let y = run_kernel(BackendId::Plain, &OpDescriptor::new(OpKind::Square), &[&x]).unwrap();
        assert_eq!(y.value().to_f64_vec(), vec![9.]);
        assert_eq!(y.backend(), BackendId::Plain);
    }

    #[test]
    fn sum_on_imperative() {
        let x = NativeTensor::from_dense(BackendId::Imperative, t(&[1., 2., 3., 4.], &[2, 2]));
        let y = run_kernel(
            BackendId::Imperative,
            &OpDescriptor::reduce(OpKind::Sum, None, false),
            &[&x],
        )
        .unwrap();
        assert_eq!(y.value().item(), Some(10.));
    }

    #[test]
    fn mixed_backends_rejected() {
        let a = NativeTensor::from_dense(BackendId::Plain, t(&[1.], &[1]));
        let b = NativeTensor::from_dense(BackendId::Tape, t(&[1.], &[1]));
        assert!(matches!(
            run_kernel(BackendId::Plain, &OpDescriptor::new(OpKind::Add), &[&a, &b]),
            Err(Error::MixedBackends {
                expected: BackendId::Plain,
                found: BackendId::Tape
            })
        ));
    }

    #[test]
    fn creation_lands_on_requested_backend() {
        for backend in BackendId::ALL {
            let z = run_kernel(backend, &OpDescriptor::zeros([2], DType::F64), &[]).unwrap();
            assert_eq!(z.backend(), backend);
            assert_eq!(z.value().to_f64_vec(), vec![0., 0.]);
        }
    }
}
