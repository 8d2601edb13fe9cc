//! Free-function forms of the facade ops, so `sqrt(&sum(&square(&x)?)?)?`
//! reads the same as `x.square()?.sum()?.sqrt()?`.

use crate::backend::BackendId;
use crate::dense::Dense;
use crate::error::Result;
use crate::op::{OpDescriptor, OpKind};
use crate::shape::{DType, Shape};
use crate::tensor::{apply_on, TensorHandle};

macro_rules! unary {
    ($($name:ident),*) => {$(
        pub fn $name(x: &TensorHandle) -> Result<TensorHandle> {
            x.$name()
        }
    )*};
}

macro_rules! binary {
    ($($name:ident),*) => {$(
        pub fn $name(a: &TensorHandle, b: &TensorHandle) -> Result<TensorHandle> {
            a.$name(b)
        }
    )*};
}

unary!(square, sqrt, exp, log, abs, neg, sign, reciprocal);
unary!(sum, mean, prod, min, max, flatten, transpose, squeeze, norm);
binary!(add, sub, mul, div, pow, minimum, maximum);

pub fn argmax(x: &TensorHandle, axis: usize) -> Result<TensorHandle> {
    x.argmax(axis)
}

pub fn argmin(x: &TensorHandle, axis: usize) -> Result<TensorHandle> {
    x.argmin(axis)
}

pub fn reshape(x: &TensorHandle, shape: impl Into<Shape>) -> Result<TensorHandle> {
    x.reshape(shape)
}

pub fn expand_dims(x: &TensorHandle, axis: usize) -> Result<TensorHandle> {
    x.expand_dims(axis)
}

pub fn clip(x: &TensorHandle, lo: f64, hi: f64) -> Result<TensorHandle> {
    x.clip(lo, hi)
}

pub fn where_(cond: &TensorHandle, a: &TensorHandle, b: &TensorHandle) -> Result<TensorHandle> {
    cond.where_(a, b)
}

pub fn zeros(backend: BackendId, shape: impl Into<Shape>, dtype: DType) -> Result<TensorHandle> {
    apply_on(backend, &OpDescriptor::zeros(shape, dtype), &[])
}

pub fn ones(backend: BackendId, shape: impl Into<Shape>, dtype: DType) -> Result<TensorHandle> {
    apply_on(backend, &OpDescriptor::ones(shape, dtype), &[])
}

pub fn full(backend: BackendId, shape: impl Into<Shape>, fill: f64, dtype: DType) -> Result<TensorHandle> {
    apply_on(backend, &OpDescriptor::full(shape, fill, dtype), &[])
}

/// `[0, 1, ..., n-1]`
pub fn arange(backend: BackendId, n: usize, dtype: DType) -> Result<TensorHandle> {
    apply_on(backend, &OpDescriptor::arange(n, dtype), &[])
}

pub fn from_values(
    backend: BackendId,
    values: &[f64],
    shape: impl Into<Shape>,
    dtype: DType,
) -> Result<TensorHandle> {
    apply_on(backend, &OpDescriptor::from_values(values.to_vec(), shape, dtype), &[])
}

/// Wraps an existing buffer on `backend` without going through an op.
pub fn from_dense(backend: BackendId, value: Dense) -> TensorHandle {
    TensorHandle::from_dense(backend, value)
}

/// General dispatch for descriptors built at runtime.
pub fn apply(backend: BackendId, op: &OpDescriptor, inputs: &[&TensorHandle]) -> Result<TensorHandle> {
    apply_on(backend, op, inputs)
}

pub fn scalar_op(x: &TensorHandle, kind: OpKind, s: f64) -> Result<TensorHandle> {
    x.apply(&OpDescriptor::with_scalar(kind, s), &[])
}
