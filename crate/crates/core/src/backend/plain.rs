//! Eager evaluation with no autodiff state.

use std::fmt;
use std::sync::Arc;

use super::{Backend, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::Result;
use crate::kernel;
use crate::op::OpDescriptor;

#[derive(Clone)]
pub struct Tensor(Arc<Dense>);

impl Tensor {
    pub fn new(value: Dense) -> Self {
        Tensor(Arc::new(value))
    }

    pub fn value(&self) -> &Dense {
        &self.0
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PlainTensor({:?})", self.0)
    }
}

pub struct Plain;

impl Backend for Plain {
    const ID: BackendId = BackendId::Plain;
    type Tensor = Tensor;

    fn from_dense(value: Dense) -> Tensor {
        Tensor::new(value)
    }

    fn value(tensor: &Tensor) -> &Dense {
        &tensor.0
    }

    fn apply(op: &OpDescriptor, inputs: &[&Tensor]) -> Result<Tensor> {
        let values: Vec<&Dense> = inputs.iter().map(|t| t.value()).collect();
        kernel::apply(op, &values).map(Tensor::new)
    }

    fn same_object(a: &Tensor, b: &Tensor) -> bool {
        Arc::ptr_eq(&a.0, &b.0)
    }

    fn embed(tensor: Tensor) -> NativeTensor {
        NativeTensor::Plain(tensor)
    }

    fn extract(native: &NativeTensor) -> Option<&Tensor> {
        match native {
            NativeTensor::Plain(t) => Some(t),
            _ => None,
        }
    }
}
