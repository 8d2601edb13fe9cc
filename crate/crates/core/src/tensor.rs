//! The unified tensor facade.
//!
//! A [`TensorHandle`] is a backend tag plus the backend's own native tensor,
//! held by reference. Wrapping and unwrapping never touch element data, and
//! every op is forwarded to the owning backend.

use std::any::Any;
use std::marker::PhantomData;

use crate::backend::{self, functional, imperative, plain, tape, Backend, BackendId, NativeTensor};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::op::{OpDescriptor, OpKind};
use crate::shape::{DType, Shape};

#[derive(Debug, Clone)]
pub struct TensorHandle {
    native: NativeTensor,
}

impl TensorHandle {
    /// Materializes `value` as a fresh native tensor on `backend`.
    pub fn from_dense(backend: BackendId, value: Dense) -> Self {
        TensorHandle {
            native: NativeTensor::from_dense(backend, value),
        }
    }

    pub fn backend(&self) -> BackendId {
        self.native.backend()
    }

    /// The wrapped native tensor itself.
    pub fn raw(&self) -> &NativeTensor {
        &self.native
    }

    pub fn into_raw(self) -> NativeTensor {
        self.native
    }

    /// Read-only view of the element buffer.
    pub fn value(&self) -> &Dense {
        self.native.value()
    }

    pub fn shape(&self) -> &Shape {
        self.value().shape()
    }

    pub fn dtype(&self) -> DType {
        self.value().dtype()
    }

    pub fn rank(&self) -> usize {
        self.shape().rank()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.value().to_f64_vec()
    }

    pub fn item(&self) -> Option<f64> {
        self.value().item()
    }

    /// Applies `op` with `self` as the first input.
    pub fn apply(&self, op: &OpDescriptor, rest: &[&TensorHandle]) -> Result<TensorHandle> {
        let mut inputs = Vec::with_capacity(rest.len() + 1);
        inputs.push(self);
        inputs.extend_from_slice(rest);
        apply_on(self.backend(), op, &inputs)
    }

    fn unary(&self, kind: OpKind) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::new(kind), &[])
    }

    fn binary(&self, kind: OpKind, other: &TensorHandle) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::new(kind), &[other])
    }

    fn scalar(&self, kind: OpKind, s: f64) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::with_scalar(kind, s), &[])
    }

    fn reduce(&self, kind: OpKind, axes: Option<&[usize]>, keepdims: bool) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::reduce(kind, axes.map(<[usize]>::to_vec), keepdims), &[])
    }

    pub fn square(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Square)
    }
    pub fn sqrt(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Sqrt)
    }
    pub fn exp(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Exp)
    }
    pub fn log(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Log)
    }
    pub fn abs(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Abs)
    }
    pub fn neg(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Neg)
    }
    pub fn sign(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Sign)
    }
    pub fn reciprocal(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Reciprocal)
    }

    pub fn add(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Add, other)
    }
    pub fn sub(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Sub, other)
    }
    pub fn mul(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Mul, other)
    }
    pub fn div(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Div, other)
    }
    pub fn pow(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Pow, other)
    }
    pub fn minimum(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Minimum, other)
    }
    pub fn maximum(&self, other: &TensorHandle) -> Result<TensorHandle> {
        self.binary(OpKind::Maximum, other)
    }

    pub fn add_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Add, s)
    }
    pub fn sub_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Sub, s)
    }
    pub fn mul_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Mul, s)
    }
    pub fn div_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Div, s)
    }
    pub fn pow_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Pow, s)
    }
    pub fn minimum_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Minimum, s)
    }
    pub fn maximum_scalar(&self, s: f64) -> Result<TensorHandle> {
        self.scalar(OpKind::Maximum, s)
    }

    /// Sum over all elements, giving a rank-0 tensor.
    pub fn sum(&self) -> Result<TensorHandle> {
        self.reduce(OpKind::Sum, None, false)
    }
    pub fn mean(&self) -> Result<TensorHandle> {
        self.reduce(OpKind::Mean, None, false)
    }
    pub fn prod(&self) -> Result<TensorHandle> {
        self.reduce(OpKind::Prod, None, false)
    }
    pub fn min(&self) -> Result<TensorHandle> {
        self.reduce(OpKind::Min, None, false)
    }
    pub fn max(&self) -> Result<TensorHandle> {
        self.reduce(OpKind::Max, None, false)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdims: bool) -> Result<TensorHandle> {
        self.reduce(OpKind::Sum, Some(axes), keepdims)
    }
    pub fn mean_axes(&self, axes: &[usize], keepdims: bool) -> Result<TensorHandle> {
        self.reduce(OpKind::Mean, Some(axes), keepdims)
    }
    pub fn prod_axes(&self, axes: &[usize], keepdims: bool) -> Result<TensorHandle> {
        self.reduce(OpKind::Prod, Some(axes), keepdims)
    }
    pub fn min_axes(&self, axes: &[usize], keepdims: bool) -> Result<TensorHandle> {
        self.reduce(OpKind::Min, Some(axes), keepdims)
    }
    pub fn max_axes(&self, axes: &[usize], keepdims: bool) -> Result<TensorHandle> {
        self.reduce(OpKind::Max, Some(axes), keepdims)
    }

    pub fn argmax(&self, axis: usize) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::with_axis(OpKind::Argmax, axis), &[])
    }
    pub fn argmin(&self, axis: usize) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::with_axis(OpKind::Argmin, axis), &[])
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::reshape(shape), &[])
    }
    pub fn flatten(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Flatten)
    }
    pub fn transpose(&self) -> Result<TensorHandle> {
        self.unary(OpKind::Transpose)
    }
    pub fn expand_dims(&self, axis: usize) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::with_axis(OpKind::ExpandDims, axis), &[])
    }
    /// Removes every extent-1 axis.
    pub fn squeeze(&self) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::squeeze(None), &[])
    }
    pub fn squeeze_axis(&self, axis: usize) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::squeeze(Some(axis)), &[])
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::clip(lo, hi), &[])
    }

    /// Elementwise `if self != 0 { a } else { b }`, broadcasting all three.
    pub fn where_(&self, a: &TensorHandle, b: &TensorHandle) -> Result<TensorHandle> {
        self.apply(&OpDescriptor::new(OpKind::Where), &[a, b])
    }

    /// L2 norm over all elements.
    pub fn norm(&self) -> Result<TensorHandle> {
        self.square()?.sum()?.sqrt()
    }
}

/// Applies `op` to handles on `backend`. Creation ops take no inputs;
/// `norm` is expanded into its chain.
pub fn apply_on(backend: BackendId, op: &OpDescriptor, inputs: &[&TensorHandle]) -> Result<TensorHandle> {
    for h in inputs {
        if h.backend() != backend {
            return Err(Error::MixedBackends {
                expected: backend,
                found: h.backend(),
            });
        }
    }
    if op.kind == OpKind::Norm {
        op.validate()?;
        return match inputs {
            [x] => x.norm(),
            _ => Err(Error::InvalidParams {
                kind: "norm",
                reason: format!("expected 1 tensor input, got {}", inputs.len()),
            }),
        };
    }
    let natives: Vec<&NativeTensor> = inputs.iter().map(|h| h.raw()).collect();
    backend::run_kernel(backend, op, &natives).map(|native| TensorHandle { native })
}

// ---------------------------------------------------------------------------
// Conversion between native tensors and handles.

/// Anything that can be wrapped as a handle and restored afterwards.
pub trait TensorKind: Sized {
    fn is_native(&self) -> bool;

    fn into_handle(self) -> TensorHandle;

    /// Converts a result handle back into this kind.
    ///
    /// `native` records whether the original input was a native tensor; only
    /// kinds that can be either (like [`AnyTensor`]) look at it.
    fn restore(handle: TensorHandle, native: bool) -> Result<Self>;
}

impl TensorKind for TensorHandle {
    fn is_native(&self) -> bool {
        false
    }
    fn into_handle(self) -> TensorHandle {
        self
    }
    fn restore(handle: TensorHandle, _native: bool) -> Result<Self> {
        Ok(handle)
    }
}

impl TensorKind for NativeTensor {
    fn is_native(&self) -> bool {
        true
    }
    fn into_handle(self) -> TensorHandle {
        TensorHandle { native: self }
    }
    fn restore(handle: TensorHandle, _native: bool) -> Result<Self> {
        Ok(handle.native)
    }
}

macro_rules! backend_tensor_kind {
    ($backend:ty) => {
        impl TensorKind for <$backend as Backend>::Tensor {
            fn is_native(&self) -> bool {
                true
            }
            fn into_handle(self) -> TensorHandle {
                TensorHandle {
                    native: <$backend>::embed(self),
                }
            }
            fn restore(handle: TensorHandle, _native: bool) -> Result<Self> {
                <$backend>::extract(&handle.native)
                    .cloned()
                    .ok_or(Error::MixedBackends {
                        expected: <$backend>::ID,
                        found: handle.backend(),
                    })
            }
        }
    };
}

backend_tensor_kind!(plain::Plain);
backend_tensor_kind!(imperative::Imperative);
backend_tensor_kind!(tape::Tape);
backend_tensor_kind!(functional::Functional);

/// Either a native tensor or a handle, for call sites that accept both.
#[derive(Debug, Clone)]
pub enum AnyTensor {
    Native(NativeTensor),
    Handle(TensorHandle),
}

impl AnyTensor {
    pub fn as_native(&self) -> Option<&NativeTensor> {
        match self {
            AnyTensor::Native(n) => Some(n),
            AnyTensor::Handle(_) => None,
        }
    }

    pub fn as_handle(&self) -> Option<&TensorHandle> {
        match self {
            AnyTensor::Handle(h) => Some(h),
            AnyTensor::Native(_) => None,
        }
    }

    pub fn backend(&self) -> BackendId {
        match self {
            AnyTensor::Native(n) => n.backend(),
            AnyTensor::Handle(h) => h.backend(),
        }
    }
}

impl TensorKind for AnyTensor {
    fn is_native(&self) -> bool {
        matches!(self, AnyTensor::Native(_))
    }
    fn into_handle(self) -> TensorHandle {
        match self {
            AnyTensor::Native(native) => TensorHandle { native },
            AnyTensor::Handle(h) => h,
        }
    }
    fn restore(handle: TensorHandle, native: bool) -> Result<Self> {
        Ok(if native {
            AnyTensor::Native(handle.native)
        } else {
            AnyTensor::Handle(handle)
        })
    }
}

impl From<NativeTensor> for AnyTensor {
    fn from(n: NativeTensor) -> Self {
        AnyTensor::Native(n)
    }
}

impl From<TensorHandle> for AnyTensor {
    fn from(h: TensorHandle) -> Self {
        AnyTensor::Handle(h)
    }
}

/// Restores results to the kind of the original input.
pub struct RestoreFn<T> {
    native: bool,
    _kind: PhantomData<fn() -> T>,
}

impl<T: TensorKind> RestoreFn<T> {
    fn new(native: bool) -> Self {
        RestoreFn {
            native,
            _kind: PhantomData,
        }
    }

    /// Whether results are unwrapped to native tensors.
    pub fn restores_native(&self) -> bool {
        self.native
    }

    pub fn restore(&self, handle: TensorHandle) -> Result<T> {
        T::restore(handle, self.native)
    }
}

impl<T> Clone for RestoreFn<T> {
    fn clone(&self) -> Self {
        RestoreFn {
            native: self.native,
            _kind: PhantomData,
        }
    }
}

impl<T> std::fmt::Debug for RestoreFn<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RestoreFn").field("native", &self.native).finish()
    }
}

/// Wraps a native tensor without copying; a handle is returned unchanged.
pub fn astensor<T: TensorKind>(x: T) -> TensorHandle {
    x.into_handle()
}

pub fn astensors<T, I>(xs: I) -> Vec<TensorHandle>
where
    T: TensorKind,
    I: IntoIterator<Item = T>,
{
    xs.into_iter().map(TensorKind::into_handle).collect()
}

/// Like [`astensor`], plus a function that converts results back to the input's kind.
pub fn astensor_<T: TensorKind>(x: T) -> (TensorHandle, RestoreFn<T>) {
    let native = x.is_native();
    (x.into_handle(), RestoreFn::new(native))
}

/// Converts several inputs at once. The restore kind follows the first input,
/// and all inputs must live on one backend.
pub fn astensors_<T, I>(xs: I) -> Result<(Vec<TensorHandle>, RestoreFn<T>)>
where
    T: TensorKind,
    I: IntoIterator<Item = T>,
{
    let mut native = None;
    let mut handles: Vec<TensorHandle> = Vec::new();
    for x in xs {
        native.get_or_insert(x.is_native());
        let h = x.into_handle();
        if let Some(first) = handles.first() {
            if first.backend() != h.backend() {
                return Err(Error::MixedBackends {
                    expected: first.backend(),
                    found: h.backend(),
                });
            }
        }
        handles.push(h);
    }
    let native = native.ok_or_else(|| Error::InvalidParams {
        kind: "astensors_",
        reason: "needs at least one input".into(),
    })?;
    Ok((handles, RestoreFn::new(native)))
}

/// The native tensor held by `h`.
pub fn raw(h: &TensorHandle) -> &NativeTensor {
    h.raw()
}

/// Recognizes a dynamically typed value as a tensor of a registered backend.
pub fn astensor_any(x: &dyn Any) -> Result<AnyTensor> {
    if let Some(h) = x.downcast_ref::<TensorHandle>() {
        return Ok(AnyTensor::Handle(h.clone()));
    }
    if let Some(n) = x.downcast_ref::<NativeTensor>() {
        return Ok(AnyTensor::Native(n.clone()));
    }
    if let Some(t) = x.downcast_ref::<plain::Tensor>() {
        return Ok(AnyTensor::Native(t.clone().into()));
    }
    if let Some(t) = x.downcast_ref::<imperative::Tensor>() {
        return Ok(AnyTensor::Native(t.clone().into()));
    }
    if let Some(t) = x.downcast_ref::<tape::Tensor>() {
        return Ok(AnyTensor::Native(t.clone().into()));
    }
    if let Some(t) = x.downcast_ref::<functional::Tensor>() {
        return Ok(AnyTensor::Native(t.clone().into()));
    }
    Err(Error::UnknownBackend(
        "value is not a tensor of any registered backend".into(),
    ))
}

/// Elementwise [`astensor_any`]; the error names the first offending index.
pub fn astensors_any(xs: &[&dyn Any]) -> Result<Vec<AnyTensor>> {
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            astensor_any(*x).map_err(|_| {
                Error::UnknownBackend(format!(
                    "argument {i} is not a tensor of any registered backend"
                ))
            })
        })
        .collect()
}
