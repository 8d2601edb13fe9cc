//! Backend-independent `value_and_grad`.
//!
//! Each autodiff backend is driven through its own mechanism: a fresh
//! requires-grad leaf for the imperative backend, a scoped tape for the
//! tape backend, and a trace for the functional backend.

use crate::backend::{functional, imperative, tape, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::kernel;
use crate::tensor::{astensor, TensorHandle};
use crate::vjp::RuleTable;

/// Values that can be cut off from any gradient machinery.
pub trait Detach {
    fn detach(self) -> Self;
}

impl Detach for TensorHandle {
    fn detach(self) -> Self {
        match self.raw() {
            NativeTensor::Imperative(t) => astensor(t.detach()),
            NativeTensor::Functional(t) => astensor(t.untraced()),
            NativeTensor::Plain(_) | NativeTensor::Tape(_) => self,
        }
    }
}

impl Detach for () {
    fn detach(self) -> Self {}
}

impl<T: Detach> Detach for Vec<T> {
    fn detach(self) -> Self {
        self.into_iter().map(Detach::detach).collect()
    }
}

impl<T: Detach> Detach for Option<T> {
    fn detach(self) -> Self {
        self.map(Detach::detach)
    }
}

impl<A: Detach, B: Detach> Detach for (A, B) {
    fn detach(self) -> Self {
        (self.0.detach(), self.1.detach())
    }
}

/// `(f(x), df/dx)` for a function with a rank-0 result.
pub fn value_and_grad<F>(f: F, x: &TensorHandle) -> Result<(TensorHandle, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<TensorHandle>,
{
    value_and_grad_with(RuleTable::standard(), f, x)
}

/// [`value_and_grad`] as a reusable function of `x`.
pub fn value_and_grad_fn<F>(f: F) -> impl Fn(&TensorHandle) -> Result<(TensorHandle, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<TensorHandle>,
{
    move |x| value_and_grad(&f, x)
}

/// For `f` returning `(loss, aux)`: gives `(loss, aux, dloss/dx)`.
/// `aux` is not differentiated and comes back detached.
pub fn value_aux_and_grad<F, A>(f: F, x: &TensorHandle) -> Result<(TensorHandle, A, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<(TensorHandle, A)>,
    A: Detach,
{
    value_aux_and_grad_with(RuleTable::standard(), f, x)
}

pub fn value_aux_and_grad_fn<F, A>(f: F) -> impl Fn(&TensorHandle) -> Result<(TensorHandle, A, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<(TensorHandle, A)>,
    A: Detach,
{
    move |x| value_aux_and_grad(&f, x)
}

pub fn value_and_grad_with<F>(rules: &RuleTable, f: F, x: &TensorHandle) -> Result<(TensorHandle, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<TensorHandle>,
{
    let (value, (), grad) = value_aux_and_grad_with(rules, |t| f(t).map(|v| (v, ())), x)?;
    Ok((value, grad))
}

pub fn value_aux_and_grad_with<F, A>(
    rules: &RuleTable,
    f: F,
    x: &TensorHandle,
) -> Result<(TensorHandle, A, TensorHandle)>
where
    F: Fn(&TensorHandle) -> Result<(TensorHandle, A)>,
    A: Detach,
{
    match x.raw() {
        NativeTensor::Plain(_) => Err(Error::NoAutodiffCapability(BackendId::Plain)),
        NativeTensor::Imperative(t) => {
            let leaf = t.detach();
            leaf.requires_grad_();
            let (out, aux) = f(&astensor(leaf.clone()))?;
            let out = imperative_output(&out)?;
            check_scalar(out.value())?;
            out.backward_with(rules)?;
            let grad = leaf.grad().unwrap_or_else(|| kernel::zeros_like(leaf.value()));
            Ok((
                astensor(out.detach()),
                aux.detach(),
                astensor(imperative::Tensor::new(grad)),
            ))
        }
        NativeTensor::Tape(t) => {
            let ((out, aux), tape) = tape::tape_scope(false, |tape| {
                tape.watch(t);
                f(&astensor(t.clone()))
            })?;
            let NativeTensor::Tape(o) = out.raw() else {
                return Err(mixed(BackendId::Tape, &out));
            };
            check_scalar(o.value())?;
            let grad = match tape.gradient_with(rules, o, &[t]) {
                Ok(mut g) => g.remove(0),
                // output does not depend on x
                Err(Error::NotRecorded) => tape::Tensor::new(kernel::zeros_like(t.value())),
                Err(e) => return Err(e),
            };
            Ok((out, aux.detach(), astensor(grad)))
        }
        NativeTensor::Functional(t) => {
            let mut aux = None;
            let (value, grad) = functional::value_and_grad_with(
                rules,
                |tracer| {
                    let (out, a) = f(&astensor(tracer.clone()))?;
                    aux = Some(a);
                    match out.into_raw() {
                        NativeTensor::Functional(o) => Ok(o),
                        other => Err(Error::MixedBackends {
                            expected: BackendId::Functional,
                            found: other.backend(),
                        }),
                    }
                },
                t,
            )?;
            let aux = aux.expect("traced function ran").detach();
            Ok((astensor(value), aux, astensor(grad)))
        }
    }
}

fn imperative_output(out: &TensorHandle) -> Result<&imperative::Tensor> {
    match out.raw() {
        NativeTensor::Imperative(o) => Ok(o),
        _ => Err(mixed(BackendId::Imperative, out)),
    }
}

fn mixed(expected: BackendId, out: &TensorHandle) -> Error {
    Error::MixedBackends {
        expected,
        found: out.backend(),
    }
}

fn check_scalar(value: &Dense) -> Result<()> {
    if value.rank() == 0 {
        Ok(())
    } else {
        Err(Error::NonScalarOutput(value.shape().clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::from_values;
    use crate::shape::DType;

    fn sum_sq(x: &TensorHandle) -> Result<TensorHandle> {
        x.square()?.sum()
    }

    #[test]
    fn all_autodiff_backends_agree() {
        for backend in BackendId::AUTODIFF {
            let x = from_values(backend, &[1., 2., 3.], [3], DType::F64).unwrap();
            let (v, g) = value_and_grad(sum_sq, &x).unwrap();
            assert_eq!(v.item(), Some(14.0), "{backend}");
            assert_eq!(g.to_vec(), vec![2., 4., 6.], "{backend}");
            assert_eq!(g.backend(), backend);
        }
    }

    #[test]
    fn plain_has_no_autodiff() {
        let x = from_values(BackendId::Plain, &[1.], [1], DType::F64).unwrap();
        assert_eq!(
            value_and_grad(sum_sq, &x).unwrap_err(),
            Error::NoAutodiffCapability(BackendId::Plain)
        );
    }

    #[test]
    fn non_scalar_output_rejected_everywhere() {
        for backend in BackendId::AUTODIFF {
            let x = from_values(backend, &[1., 2.], [2], DType::F64).unwrap();
            let err = value_and_grad(|t| t.square(), &x).unwrap_err();
            assert!(matches!(err, Error::NonScalarOutput(_)), "{backend}: {err:?}");
        }
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        for backend in BackendId::AUTODIFF {
            let x = from_values(backend, &[1., 2.], [2], DType::F64).unwrap();
            let c = from_values(backend, &[5.], [], DType::F64).unwrap();
            let (v, g) = value_and_grad(|_| Ok(c.clone()), &x).unwrap();
            assert_eq!(v.item(), Some(5.0));
            assert_eq!(g.to_vec(), vec![0., 0.], "{backend}");
        }
    }

    #[test]
    fn aux_is_returned_detached() {
        for backend in BackendId::AUTODIFF {
            let x = from_values(backend, &[1., 2., 3.], [3], DType::F64).unwrap();
            let (v, aux, g) =
                value_aux_and_grad(|t| Ok((sum_sq(t)?, t.add_scalar(1.0)?)), &x).unwrap();
            assert_eq!(v.item(), Some(14.0));
            assert_eq!(aux.to_vec(), vec![2., 3., 4.]);
            assert_eq!(g.to_vec(), vec![2., 4., 6.]);
            if let NativeTensor::Functional(a) = aux.raw() {
                assert!(!a.is_traced());
            }
            if let NativeTensor::Imperative(a) = aux.raw() {
                assert!(a.is_leaf());
            }
        }
    }

    #[test]
    fn repeated_calls_do_not_accumulate() {
        let f = value_and_grad_fn(sum_sq);
        let x = from_values(BackendId::Imperative, &[1., 2., 3.], [3], DType::F64).unwrap();
        let (_, g1) = f(&x).unwrap();
        let (_, g2) = f(&x).unwrap();
        assert_eq!(g1.to_vec(), g2.to_vec());
    }
}
