//! The closed op table and the descriptor that names one primitive call.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::shape::{DType, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Square,
    Sqrt,
    Exp,
    Log,
    Abs,
    Neg,
    Sign,
    Reciprocal,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Minimum,
    Maximum,
    Sum,
    Mean,
    Prod,
    Min,
    Max,
    Argmax,
    Argmin,
    Reshape,
    Flatten,
    Transpose,
    ExpandDims,
    Squeeze,
    Clip,
    Where,
    Zeros,
    Ones,
    Full,
    Arange,
    FromValues,
    Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpCategory {
    Unary,
    Binary,
    Reduction,
    ArgReduction,
    Shape,
    Misc,
    Creation,
    Derived,
}

impl OpKind {
    pub const ALL: [OpKind; 35] = [
        OpKind::Square,
        OpKind::Sqrt,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Abs,
        OpKind::Neg,
        OpKind::Sign,
        OpKind::Reciprocal,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Pow,
        OpKind::Minimum,
        OpKind::Maximum,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Prod,
        OpKind::Min,
        OpKind::Max,
        OpKind::Argmax,
        OpKind::Argmin,
        OpKind::Reshape,
        OpKind::Flatten,
        OpKind::Transpose,
        OpKind::ExpandDims,
        OpKind::Squeeze,
        OpKind::Clip,
        OpKind::Where,
        OpKind::Zeros,
        OpKind::Ones,
        OpKind::Full,
        OpKind::Arange,
        OpKind::FromValues,
        OpKind::Norm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Abs => "abs",
            OpKind::Neg => "neg",
            OpKind::Sign => "sign",
            OpKind::Reciprocal => "reciprocal",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Pow => "pow",
            OpKind::Minimum => "minimum",
            OpKind::Maximum => "maximum",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Prod => "prod",
            OpKind::Min => "min",
            OpKind::Max => "max",
            OpKind::Argmax => "argmax",
            OpKind::Argmin => "argmin",
            OpKind::Reshape => "reshape",
            OpKind::Flatten => "flatten",
            OpKind::Transpose => "transpose",
            OpKind::ExpandDims => "expand_dims",
            OpKind::Squeeze => "squeeze",
            OpKind::Clip => "clip",
            OpKind::Where => "where",
            OpKind::Zeros => "zeros",
            OpKind::Ones => "ones",
            OpKind::Full => "full",
            OpKind::Arange => "arange",
            OpKind::FromValues => "from_values",
            OpKind::Norm => "norm",
        }
    }

    pub fn category(self) -> OpCategory {
        use OpKind::*;
        match self {
            Square | Sqrt | Exp | Log | Abs | Neg | Sign | Reciprocal => OpCategory::Unary,
            Add | Sub | Mul | Div | Pow | Minimum | Maximum => OpCategory::Binary,
            Sum | Mean | Prod | Min | Max => OpCategory::Reduction,
            Argmax | Argmin => OpCategory::ArgReduction,
            Reshape | Flatten | Transpose | ExpandDims | Squeeze => OpCategory::Shape,
            Clip | Where => OpCategory::Misc,
            Zeros | Ones | Full | Arange | FromValues => OpCategory::Creation,
            Norm => OpCategory::Derived,
        }
    }

    /// Whether a gradient meaningfully flows through the op.
    ///
    /// `sign` is differentiable with an identically zero derivative; the
    /// arg-reductions and creation ops are not differentiable at all.
    pub fn is_differentiable(self) -> bool {
        !matches!(
            self.category(),
            OpCategory::ArgReduction | OpCategory::Creation
        )
    }

    /// Primitive ops run as a single kernel; `norm` is composed at the facade.
    pub fn is_primitive(self) -> bool {
        self != OpKind::Norm
    }

    /// Tensor-input count (binary ops take one tensor when given a scalar operand).
    pub fn arity(self) -> usize {
        match self.category() {
            OpCategory::Binary => 2,
            OpCategory::Creation => 0,
            _ if self == OpKind::Where => 3,
            _ => 1,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self.category() {
            OpCategory::Binary => &["scalar?"],
            OpCategory::Reduction => &["axes?", "keepdims"],
            OpCategory::ArgReduction => &["axis"],
            _ => match self {
                OpKind::Reshape => &["shape"],
                OpKind::ExpandDims => &["axis"],
                OpKind::Squeeze => &["axis?"],
                OpKind::Clip => &["lo", "hi"],
                OpKind::Zeros | OpKind::Ones => &["shape", "dtype"],
                OpKind::Full => &["shape", "fill", "dtype"],
                OpKind::Arange => &["n", "dtype"],
                OpKind::FromValues => &["values", "shape", "dtype"],
                _ => &[],
            },
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

/// One primitive call: the op kind plus whichever parameters it accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct OpDescriptor {
    pub kind: OpKind,
    pub axes: Option<Vec<usize>>,
    pub keepdims: bool,
    pub axis: Option<usize>,
    pub scalar: Option<f64>,
    pub clip: Option<(f64, f64)>,
    pub shape: Option<Shape>,
    pub fill: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub dtype: Option<DType>,
}

impl OpDescriptor {
    pub fn new(kind: OpKind) -> Self {
        OpDescriptor {
            kind,
            axes: None,
            keepdims: false,
            axis: None,
            scalar: None,
            clip: None,
            shape: None,
            fill: None,
            values: None,
            dtype: None,
        }
    }

    pub fn with_scalar(kind: OpKind, scalar: f64) -> Self {
        OpDescriptor {
            scalar: Some(scalar),
            ..OpDescriptor::new(kind)
        }
    }

    pub fn reduce(kind: OpKind, axes: Option<Vec<usize>>, keepdims: bool) -> Self {
        OpDescriptor {
            axes,
            keepdims,
            ..OpDescriptor::new(kind)
        }
    }

    pub fn with_axis(kind: OpKind, axis: usize) -> Self {
        OpDescriptor {
            axis: Some(axis),
            ..OpDescriptor::new(kind)
        }
    }

    pub fn reshape(shape: impl Into<Shape>) -> Self {
        OpDescriptor {
            shape: Some(shape.into()),
            ..OpDescriptor::new(OpKind::Reshape)
        }
    }

    pub fn squeeze(axis: Option<usize>) -> Self {
        OpDescriptor {
            axis,
            ..OpDescriptor::new(OpKind::Squeeze)
        }
    }

    pub fn clip(lo: f64, hi: f64) -> Self {
        OpDescriptor {
            clip: Some((lo, hi)),
            ..OpDescriptor::new(OpKind::Clip)
        }
    }

    pub fn zeros(shape: impl Into<Shape>, dtype: DType) -> Self {
        OpDescriptor {
            shape: Some(shape.into()),
            dtype: Some(dtype),
            ..OpDescriptor::new(OpKind::Zeros)
        }
    }

    pub fn ones(shape: impl Into<Shape>, dtype: DType) -> Self {
        OpDescriptor {
            shape: Some(shape.into()),
            dtype: Some(dtype),
            ..OpDescriptor::new(OpKind::Ones)
        }
    }

    pub fn full(shape: impl Into<Shape>, fill: f64, dtype: DType) -> Self {
        OpDescriptor {
            shape: Some(shape.into()),
            fill: Some(fill),
            dtype: Some(dtype),
            ..OpDescriptor::new(OpKind::Full)
        }
    }

    pub fn arange(n: usize, dtype: DType) -> Self {
        OpDescriptor {
            shape: Some(Shape::from([n])),
            dtype: Some(dtype),
            ..OpDescriptor::new(OpKind::Arange)
        }
    }

    pub fn from_values(values: Vec<f64>, shape: impl Into<Shape>, dtype: DType) -> Self {
        OpDescriptor {
            values: Some(values),
            shape: Some(shape.into()),
            dtype: Some(dtype),
            ..OpDescriptor::new(OpKind::FromValues)
        }
    }

    /// Number of tensor inputs this descriptor consumes.
    pub fn arity(&self) -> usize {
        if self.kind.category() == OpCategory::Binary && self.scalar.is_some() {
            1
        } else {
            self.kind.arity()
        }
    }

    /// Checks that parameters are present exactly when the kind accepts them.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        let bad = |reason: &str| {
            Err(Error::InvalidParams {
                kind: kind.name(),
                reason: reason.to_string(),
            })
        };
        let cat = kind.category();
        let wants_axes = cat == OpCategory::Reduction;
        let wants_axis = matches!(
            kind,
            OpKind::Argmax | OpKind::Argmin | OpKind::ExpandDims | OpKind::Squeeze
        );
        let wants_shape = kind == OpKind::Reshape || cat == OpCategory::Creation;
        let wants_dtype = cat == OpCategory::Creation;

        if self.axes.is_some() && !wants_axes {
            return bad("does not take `axes`");
        }
        if self.keepdims && !wants_axes {
            return bad("does not take `keepdims`");
        }
        if self.axis.is_some() != wants_axis && kind != OpKind::Squeeze {
            return bad(if wants_axis { "requires `axis`" } else { "does not take `axis`" });
        }
        if self.scalar.is_some() && cat != OpCategory::Binary {
            return bad("does not take a scalar operand");
        }
        if self.clip.is_some() != (kind == OpKind::Clip) {
            return bad(if kind == OpKind::Clip { "requires clip bounds" } else { "does not take clip bounds" });
        }
        if self.shape.is_some() != wants_shape {
            return bad(if wants_shape { "requires `shape`" } else { "does not take `shape`" });
        }
        if self.dtype.is_some() != wants_dtype {
            return bad(if wants_dtype { "requires `dtype`" } else { "does not take `dtype`" });
        }
        if self.fill.is_some() != (kind == OpKind::Full) {
            return bad(if kind == OpKind::Full { "requires `fill`" } else { "does not take `fill`" });
        }
        if self.values.is_some() != (kind == OpKind::FromValues) {
            return bad(if kind == OpKind::FromValues { "requires `values`" } else { "does not take `values`" });
        }
        if kind == OpKind::Arange && self.shape.as_ref().map(Shape::rank) != Some(1) {
            return bad("shape must be [n]");
        }
        Ok(())
    }
}

/// Canonical text form; stable, so it can feed case identifiers.
impl fmt::Display for OpDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        let mut parts: Vec<String> = Vec::new();
        if let Some(axes) = &self.axes {
            parts.push(format!("axes={axes:?}"));
        }
        if self.keepdims {
            parts.push("keepdims=true".into());
        }
        if let Some(axis) = self.axis {
            parts.push(format!("axis={axis}"));
        }
        if let Some(s) = self.scalar {
            parts.push(format!("scalar={s:?}"));
        }
        if let Some((lo, hi)) = self.clip {
            parts.push(format!("lo={lo:?},hi={hi:?}"));
        }
        if let Some(shape) = &self.shape {
            parts.push(format!("shape={shape}"));
        }
        if let Some(v) = self.fill {
            parts.push(format!("fill={v:?}"));
        }
        if let Some(values) = &self.values {
            parts.push(format!("values={values:?}"));
        }
        if let Some(d) = self.dtype {
            parts.push(format!("dtype={d}"));
        }
        write!(f, "{})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in OpKind::ALL {
            assert_eq!(kind.name().parse::<OpKind>().unwrap(), kind);
        }
        assert!("matmul".parse::<OpKind>().is_err());
    }

    #[test]
    fn argmax_not_differentiable() {
        assert!(!OpKind::Argmax.is_differentiable());
        assert!(OpKind::Sign.is_differentiable());
        assert!(OpKind::Square.is_differentiable());
    }

    #[test]
    fn scalar_variant_is_unary() {
        assert_eq!(OpDescriptor::new(OpKind::Add).arity(), 2);
        assert_eq!(OpDescriptor::with_scalar(OpKind::Add, 1.0).arity(), 1);
        assert_eq!(OpDescriptor::new(OpKind::Where).arity(), 3);
    }

    #[test]
    fn validate_param_presence() {
        assert!(OpDescriptor::reduce(OpKind::Sum, Some(vec![0]), true).validate().is_ok());
        assert!(OpDescriptor::new(OpKind::Argmax).validate().is_err());
        assert!(OpDescriptor::with_axis(OpKind::Argmax, 0).validate().is_ok());
        assert!(OpDescriptor::with_scalar(OpKind::Square, 2.0).validate().is_err());
        assert!(OpDescriptor::new(OpKind::Clip).validate().is_err());
        assert!(OpDescriptor::squeeze(None).validate().is_ok());
        assert!(OpDescriptor::zeros([2], DType::F64).validate().is_ok());
        assert!(OpDescriptor::new(OpKind::Zeros).validate().is_err());
    }

    #[test]
    fn display_is_canonical() {
        let op = OpDescriptor::reduce(OpKind::Sum, Some(vec![1]), true);
        assert_eq!(op.to_string(), "sum(axes=[1],keepdims=true)");
        assert_eq!(OpDescriptor::new(OpKind::Square).to_string(), "square()");
    }
}
