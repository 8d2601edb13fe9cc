//! Contiguous row-major element storage shared by every backend.

use std::cell::Cell;
use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::shape::{DType, Shape};

thread_local! {
    static BUFFERS_ALLOCATED: Cell<u64> = const { Cell::new(0) };
}

/// Number of element buffers created on the current thread so far.
///
/// Every `Dense` constructor goes through one counting path, so the delta of
/// this value around a piece of code is the number of element buffers it
/// materialized.
pub fn buffers_allocated() -> u64 {
    BUFFERS_ALLOCATED.with(Cell::get)
}

#[derive(Clone, PartialEq)]
pub enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::F32(v) => v.len(),
            Data::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            Data::F32(_) => DType::F32,
            Data::F64(_) => DType::F64,
        }
    }
}

/// Floating element types a tensor can hold.
pub trait Element: Float + Send + Sync + fmt::Debug + fmt::Display + 'static {
    const DTYPE: DType;

    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn slice(data: &Data) -> Option<&[Self]>;
    fn wrap(values: Vec<Self>) -> Data;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    fn of(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    fn slice(data: &Data) -> Option<&[Self]> {
        match data {
            Data::F32(v) => Some(v),
            Data::F64(_) => None,
        }
    }
    fn wrap(values: Vec<Self>) -> Data {
        Data::F32(values)
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    fn of(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn slice(data: &Data) -> Option<&[Self]> {
        match data {
            Data::F64(v) => Some(v),
            Data::F32(_) => None,
        }
    }
    fn wrap(values: Vec<Self>) -> Data {
        Data::F64(values)
    }
}

/// Immutable dense tensor value: shape plus row-major elements.
#[derive(PartialEq)]
pub struct Dense {
    shape: Shape,
    data: Data,
}

impl Dense {
    pub fn new(shape: impl Into<Shape>, data: Data) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} elements cannot fill shape {shape}",
                data.len()
            )));
        }
        BUFFERS_ALLOCATED.with(|c| c.set(c.get() + 1));
        Ok(Dense { shape, data })
    }

    pub fn from_vec<T: Element>(shape: impl Into<Shape>, values: Vec<T>) -> Result<Self> {
        Dense::new(shape, T::wrap(values))
    }

    pub fn from_f64(shape: impl Into<Shape>, values: &[f64], dtype: DType) -> Result<Self> {
        let data = match dtype {
            DType::F32 => Data::F32(values.iter().map(|&v| v as f32).collect()),
            DType::F64 => Data::F64(values.to_vec()),
        };
        Dense::new(shape, data)
    }

    pub fn filled(shape: impl Into<Shape>, value: f64, dtype: DType) -> Self {
        let shape = shape.into();
        let n = shape.numel();
        let data = match dtype {
            DType::F32 => Data::F32(vec![value as f32; n]),
            DType::F64 => Data::F64(vec![value; n]),
        };
        Dense::new(shape, data).expect("filled buffer matches its shape")
    }

    pub fn scalar(value: f64, dtype: DType) -> Self {
        Dense::filled(Shape::scalar(), value, dtype)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn data(&self) -> &Data {
        &self.data
    }

    pub fn as_slice<T: Element>(&self) -> Option<&[T]> {
        T::slice(&self.data)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            Data::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Data::F64(v) => v.clone(),
        }
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.numel() == 1).then(|| self.to_f64_vec()[0])
    }

    /// Same shape, same dtype and identical bit patterns (NaN payloads included).
    pub fn bitwise_eq(&self, other: &Dense) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (Data::F32(a), Data::F32(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (Data::F64(a), Data::F64(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            _ => false,
        }
    }
}

impl Clone for Dense {
    fn clone(&self) -> Self {
        Dense::new(self.shape.clone(), self.data.clone()).expect("clone preserves length")
    }
}

impl fmt::Debug for Dense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dense({}, {}, {})", self.dtype(), self.shape, crate::literal::format(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Dense::from_vec([2, 2], vec![1.0f64, 2.0, 3.0]).is_err());
        assert!(Dense::from_vec([3], vec![1.0f64, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn counter_tracks_constructed_buffers() {
        let before = buffers_allocated();
        let a = Dense::scalar(1.0, DType::F64);
        let _b = a.clone();
        assert_eq!(buffers_allocated() - before, 2);
    }

    #[test]
    fn bitwise_eq_distinguishes_dtype() {
        let a = Dense::scalar(1.0, DType::F64);
        let b = Dense::scalar(1.0, DType::F32);
        assert!(!a.bitwise_eq(&b));
        assert!(a.bitwise_eq(&a.clone()));
    }
}
