//! Reference kernels shared by all backends.
//!
//! Every backend computes values through [`apply`], so results for identical
//! inputs are bitwise identical across backends; the backends differ only in
//! how they orchestrate automatic differentiation.
//!
//! Summation and products accumulate sequentially in row-major input order.

use crate::dense::{Data, Dense, Element};
use crate::error::{Error, Result};
use crate::op::{OpCategory, OpDescriptor, OpKind};
use crate::shape::{DType, Shape};

/// Evaluates one primitive op.
pub fn apply(op: &OpDescriptor, inputs: &[&Dense]) -> Result<Dense> {
    op.validate()?;
    if !op.kind.is_primitive() {
        return Err(Error::UnsupportedOp {
            kind: op.kind.name(),
            reason: "composite op has no single kernel".into(),
        });
    }
    if inputs.len() != op.arity() {
        return Err(Error::InvalidParams {
            kind: op.kind.name(),
            reason: format!("expected {} tensor inputs, got {}", op.arity(), inputs.len()),
        });
    }
    let dtype = match inputs.first() {
        Some(x) => same_dtype(inputs, x.dtype())?,
        None => op.dtype.expect("validated creation op carries a dtype"),
    };
    match dtype {
        DType::F32 => run::<f32>(op, inputs),
        DType::F64 => run::<f64>(op, inputs),
    }
}

fn same_dtype(inputs: &[&Dense], dtype: DType) -> Result<DType> {
    for x in inputs {
        if x.dtype() != dtype {
            return Err(Error::DTypeMismatch {
                lhs: dtype,
                rhs: x.dtype(),
            });
        }
    }
    Ok(dtype)
}

fn slices<'a, T: Element>(inputs: &[&'a Dense]) -> Vec<&'a [T]> {
    inputs
        .iter()
        .map(|d| d.as_slice::<T>().expect("dtype checked"))
        .collect()
}

fn run<T: Element>(op: &OpDescriptor, inputs: &[&Dense]) -> Result<Dense> {
    let xs = slices::<T>(inputs);
    let kind = op.kind;
    let (shape, values) = match kind.category() {
        OpCategory::Unary => {
            let f = unary_fn::<T>(kind);
            (inputs[0].shape().clone(), xs[0].iter().map(|&x| f(x)).collect())
        }
        OpCategory::Binary => {
            let f = binary_fn::<T>(kind);
            match op.scalar {
                Some(s) => {
                    let s = T::of(s);
                    (inputs[0].shape().clone(), xs[0].iter().map(|&x| f(x, s)).collect())
                }
                None => {
                    let shape = inputs[0].shape().broadcast(inputs[1].shape())?;
                    let ia = broadcast_map(inputs[0].shape(), &shape);
                    let ib = broadcast_map(inputs[1].shape(), &shape);
                    let values = ia.iter().zip(&ib).map(|(&i, &j)| f(xs[0][i], xs[1][j])).collect();
                    (shape, values)
                }
            }
        }
        OpCategory::Reduction => reduce(kind, xs[0], inputs[0].shape(), op.axes.as_deref(), op.keepdims)?,
        OpCategory::ArgReduction => {
            let axis = op.axis.expect("validated");
            argreduce(kind == OpKind::Argmax, xs[0], inputs[0].shape(), axis)?
        }
        OpCategory::Shape => (reshaped(op, inputs[0].shape())?, shape_values(op, xs[0], inputs[0].shape())),
        OpCategory::Misc => match kind {
            OpKind::Clip => {
                let (lo, hi) = op.clip.expect("validated");
                let (lo, hi) = (T::of(lo), T::of(hi));
                (inputs[0].shape().clone(), xs[0].iter().map(|&x| clip(x, lo, hi)).collect())
            }
            _ => {
                let shape = inputs[0]
                    .shape()
                    .broadcast(inputs[1].shape())?
                    .broadcast(inputs[2].shape())?;
                let ic = broadcast_map(inputs[0].shape(), &shape);
                let ia = broadcast_map(inputs[1].shape(), &shape);
                let ib = broadcast_map(inputs[2].shape(), &shape);
                let values = (0..shape.numel())
                    .map(|i| {
                        if xs[0][ic[i]] != T::zero() {
                            xs[1][ia[i]]
                        } else {
                            xs[2][ib[i]]
                        }
                    })
                    .collect();
                (shape, values)
            }
        },
        OpCategory::Creation => create::<T>(op)?,
        OpCategory::Derived => unreachable!("rejected above"),
    };
    Dense::from_vec(shape, values)
}

fn unary_fn<T: Element>(kind: OpKind) -> fn(T) -> T {
    match kind {
        OpKind::Square => |x| x * x,
        OpKind::Sqrt => |x| x.sqrt(),
        OpKind::Exp => |x| x.exp(),
        OpKind::Log => |x| x.ln(),
        OpKind::Abs => |x| x.abs(),
        OpKind::Neg => |x| -x,
        OpKind::Sign => sign,
        OpKind::Reciprocal => |x| T::one() / x,
        _ => unreachable!("not a unary op"),
    }
}

fn binary_fn<T: Element>(kind: OpKind) -> fn(T, T) -> T {
    match kind {
        OpKind::Add => |a, b| a + b,
        OpKind::Sub => |a, b| a - b,
        OpKind::Mul => |a, b| a * b,
        OpKind::Div => |a, b| a / b,
        OpKind::Pow => |a, b| a.powf(b),
        OpKind::Minimum => minimum,
        OpKind::Maximum => maximum,
        _ => unreachable!("not a binary op"),
    }
}

/// -1, 0 or 1; NaN stays NaN (unlike `f64::signum`, zero maps to zero).
fn sign<T: Element>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        x
    }
}

// NaN propagates; ties pick the first operand.
fn minimum<T: Element>(a: T, b: T) -> T {
    if a.is_nan() || b.is_nan() {
        T::nan()
    } else if b < a {
        b
    } else {
        a
    }
}

fn maximum<T: Element>(a: T, b: T) -> T {
    if a.is_nan() || b.is_nan() {
        T::nan()
    } else if b > a {
        b
    } else {
        a
    }
}

fn clip<T: Element>(x: T, lo: T, hi: T) -> T {
    minimum(maximum(x, lo), hi)
}

/// For every element of `dst`, the flat index of the `src` element it reads
/// under broadcasting. `src` must broadcast to `dst`.
pub fn broadcast_map(src: &Shape, dst: &Shape) -> Vec<usize> {
    let rank = dst.rank();
    let lead = rank - src.rank();
    let src_strides = src.strides();
    let mut step = vec![0; rank];
    for (i, (&d, &s)) in src.dims().iter().zip(&src_strides).enumerate() {
        if d != 1 {
            step[lead + i] = s;
        }
    }
    let n = dst.numel();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0; rank];
    let mut offset = 0;
    for _ in 0..n {
        out.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += step[d];
            if idx[d] < dst.dims()[d] {
                break;
            }
            offset -= step[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

/// Validated, sorted reduction axes (all axes when `axes` is `None`).
pub fn reduction_axes(shape: &Shape, axes: Option<&[usize]>) -> Result<Vec<usize>> {
    let rank = shape.rank();
    let mut out: Vec<usize> = match axes {
        None => (0..rank).collect(),
        Some(axes) => axes.to_vec(),
    };
    out.sort_unstable();
    for (i, &a) in out.iter().enumerate() {
        shape.check_axis(a)?;
        if i > 0 && out[i - 1] == a {
            return Err(Error::InvalidAxis { axis: a, rank });
        }
    }
    Ok(out)
}

/// The input shape with every reduced axis set to extent 1.
pub fn keepdims_shape(shape: &Shape, axes: &[usize]) -> Shape {
    let dims = shape
        .dims()
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect::<Vec<_>>();
    Shape::new(dims)
}

fn reduced_shape(shape: &Shape, axes: &[usize], keepdims: bool) -> Shape {
    if keepdims {
        return keepdims_shape(shape, axes);
    }
    let dims = shape
        .dims()
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect::<Vec<_>>();
    Shape::new(dims)
}

fn reduce<T: Element>(
    kind: OpKind,
    x: &[T],
    shape: &Shape,
    axes: Option<&[usize]>,
    keepdims: bool,
) -> Result<(Shape, Vec<T>)> {
    let axes = reduction_axes(shape, axes)?;
    let keep = keepdims_shape(shape, &axes);
    let out_shape = reduced_shape(shape, &axes, keepdims);
    let m = keep.numel();
    let count: usize = axes.iter().map(|&a| shape.dims()[a]).product();
    // input flat index -> output flat index
    let to_out = broadcast_map(&keep, shape);

    let values = match kind {
        OpKind::Sum | OpKind::Mean => {
            let mut acc = vec![T::zero(); m];
            for (&o, &v) in to_out.iter().zip(x) {
                acc[o] = acc[o] + v;
            }
            if kind == OpKind::Mean {
                let c = T::of(count as f64);
                acc.iter_mut().for_each(|a| *a = *a / c);
            }
            acc
        }
        OpKind::Prod => {
            let mut acc = vec![T::one(); m];
            for (&o, &v) in to_out.iter().zip(x) {
                acc[o] = acc[o] * v;
            }
            acc
        }
        OpKind::Min | OpKind::Max => {
            if count == 0 {
                return Err(Error::EmptyReduction);
            }
            let pick = if kind == OpKind::Min { minimum::<T> } else { maximum::<T> };
            let mut acc: Vec<Option<T>> = vec![None; m];
            for (&o, &v) in to_out.iter().zip(x) {
                acc[o] = Some(match acc[o] {
                    None => v,
                    Some(a) => pick(a, v),
                });
            }
            acc.into_iter().map(|a| a.expect("non-empty group")).collect()
        }
        _ => unreachable!("not a reduction"),
    };
    Ok((out_shape, values))
}

// (outer, extent, inner) split of a shape around one axis
fn split_at_axis(shape: &Shape, axis: usize) -> (usize, usize, usize) {
    let dims = shape.dims();
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

fn argreduce<T: Element>(
    is_max: bool,
    x: &[T],
    shape: &Shape,
    axis: usize,
) -> Result<(Shape, Vec<T>)> {
    shape.check_axis(axis)?;
    let (outer, len, inner) = split_at_axis(shape, axis);
    if len == 0 {
        return Err(Error::EmptyReduction);
    }
    let mut dims = shape.dims().to_vec();
    dims.remove(axis);
    let mut values = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for j in 0..inner {
            let at = |k: usize| x[(o * len + k) * inner + j];
            let mut best = 0;
            for k in 1..len {
                let (cur, cand) = (at(best), at(k));
                if cur.is_nan() {
                    break;
                }
                let better = if is_max { cand > cur } else { cand < cur };
                if cand.is_nan() || better {
                    best = k;
                }
            }
            values.push(T::of(best as f64));
        }
    }
    Ok((Shape::new(dims), values))
}

fn reshaped(op: &OpDescriptor, shape: &Shape) -> Result<Shape> {
    let dims = shape.dims();
    match op.kind {
        OpKind::Reshape => {
            let target = op.shape.clone().expect("validated");
            if target.numel() != shape.numel() {
                return Err(Error::ShapeMismatch(format!(
                    "cannot reshape {shape} into {target}"
                )));
            }
            Ok(target)
        }
        OpKind::Flatten => Ok(Shape::from([shape.numel()])),
        OpKind::Transpose => {
            if shape.rank() != 2 {
                return Err(Error::ShapeMismatch(format!(
                    "transpose requires rank 2, got {shape}"
                )));
            }
            Ok(Shape::from([dims[1], dims[0]]))
        }
        OpKind::ExpandDims => {
            let axis = op.axis.expect("validated");
            if axis > shape.rank() {
                return Err(Error::InvalidAxis {
                    axis,
                    rank: shape.rank(),
                });
            }
            let mut d = dims.to_vec();
            d.insert(axis, 1);
            Ok(Shape::new(d))
        }
        OpKind::Squeeze => match op.axis {
            Some(axis) => {
                shape.check_axis(axis)?;
                if dims[axis] != 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "cannot squeeze axis {axis} of {shape}"
                    )));
                }
                let mut d = dims.to_vec();
                d.remove(axis);
                Ok(Shape::new(d))
            }
            None => Ok(Shape::new(
                dims.iter().copied().filter(|&d| d != 1).collect::<Vec<_>>(),
            )),
        },
        _ => unreachable!("not a shape op"),
    }
}

fn shape_values<T: Element>(op: &OpDescriptor, x: &[T], shape: &Shape) -> Vec<T> {
    if op.kind == OpKind::Transpose {
        let (rows, cols) = (shape.dims()[0], shape.dims()[1]);
        let mut out = Vec::with_capacity(x.len());
        for j in 0..cols {
            for i in 0..rows {
                out.push(x[i * cols + j]);
            }
        }
        out
    } else {
        x.to_vec()
    }
}

fn create<T: Element>(op: &OpDescriptor) -> Result<(Shape, Vec<T>)> {
    let shape = op.shape.clone().expect("validated");
    let n = shape.numel();
    let values = match op.kind {
        OpKind::Zeros => vec![T::zero(); n],
        OpKind::Ones => vec![T::one(); n],
        OpKind::Full => vec![T::of(op.fill.expect("validated")); n],
        OpKind::Arange => (0..n).map(|i| T::of(i as f64)).collect(),
        OpKind::FromValues => {
            let values = op.values.as_ref().expect("validated");
            if values.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} values cannot fill shape {shape}",
                    values.len()
                )));
            }
            values.iter().map(|&v| T::of(v)).collect()
        }
        _ => unreachable!("not a creation op"),
    };
    Ok((shape, values))
}

// ---------------------------------------------------------------------------
// Helpers used by gradient rules. They stay dtype-exact like the kernels.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
}

fn map_same<F32F, F64F>(x: &Dense, shape: Shape, f32f: F32F, f64f: F64F) -> Result<Dense>
where
    F32F: FnOnce(&[f32]) -> Vec<f32>,
    F64F: FnOnce(&[f64]) -> Vec<f64>,
{
    let data = match x.data() {
        Data::F32(v) => Data::F32(f32f(v)),
        Data::F64(v) => Data::F64(f64f(v)),
    };
    Dense::new(shape, data)
}

fn compare_typed<T: Element>(a: &[T], b: &[T], ia: &[usize], ib: &[usize], cmp: Cmp) -> Vec<T> {
    ia.iter()
        .zip(ib)
        .map(|(&i, &j)| {
            let hit = match cmp {
                Cmp::Le => a[i] <= b[j],
                Cmp::Ge => a[i] >= b[j],
            };
            if hit {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

/// 1/0 mask of `a cmp b` over the broadcast shape.
pub fn compare(a: &Dense, b: &Dense, cmp: Cmp) -> Result<Dense> {
    same_dtype(&[b], a.dtype())?;
    let shape = a.shape().broadcast(b.shape())?;
    let ia = broadcast_map(a.shape(), &shape);
    let ib = broadcast_map(b.shape(), &shape);
    let data = match (a.data(), b.data()) {
        (Data::F32(x), Data::F32(y)) => Data::F32(compare_typed(x, y, &ia, &ib, cmp)),
        (Data::F64(x), Data::F64(y)) => Data::F64(compare_typed(x, y, &ia, &ib, cmp)),
        _ => unreachable!("dtype checked"),
    };
    Dense::new(shape, data)
}

/// 1/0 mask of `a cmp scalar`.
pub fn compare_scalar(a: &Dense, scalar: f64, cmp: Cmp) -> Result<Dense> {
    let s = Dense::scalar(scalar, a.dtype());
    compare(a, &s, cmp)
}

/// 1/0 mask of `lo <= x <= hi`.
pub fn within(x: &Dense, lo: f64, hi: f64) -> Result<Dense> {
    let lo_mask = compare_scalar(x, lo, Cmp::Ge)?;
    let hi_mask = compare_scalar(x, hi, Cmp::Le)?;
    apply(&OpDescriptor::new(OpKind::Mul), &[&lo_mask, &hi_mask])
}

pub fn zeros_like(x: &Dense) -> Dense {
    Dense::filled(x.shape().clone(), 0.0, x.dtype())
}

/// Sums `g` over its broadcast dimensions so the result has `shape`.
pub fn sum_to_shape(g: &Dense, shape: &Shape) -> Result<Dense> {
    if g.shape() == shape {
        return Ok(g.clone());
    }
    let bshape = shape.broadcast(g.shape())?;
    if &bshape != g.shape() {
        return Err(Error::ShapeMismatch(format!(
            "cannot sum {} down to {shape}",
            g.shape()
        )));
    }
    let map = broadcast_map(shape, g.shape());
    fn fold<T: Element>(g: &[T], map: &[usize], n: usize) -> Vec<T> {
        let mut acc = vec![T::zero(); n];
        for (&o, &v) in map.iter().zip(g) {
            acc[o] = acc[o] + v;
        }
        acc
    }
    let n = shape.numel();
    map_same(g, shape.clone(), |v| fold(v, &map, n), |v| fold(v, &map, n))
}

/// Materializes `x` broadcast to `shape`.
pub fn broadcast_to(x: &Dense, shape: &Shape) -> Result<Dense> {
    let bshape = x.shape().broadcast(shape)?;
    if &bshape != shape {
        return Err(Error::ShapeMismatch(format!(
            "cannot broadcast {} to {shape}",
            x.shape()
        )));
    }
    let map = broadcast_map(x.shape(), shape);
    fn gather<T: Element>(x: &[T], map: &[usize]) -> Vec<T> {
        map.iter().map(|&i| x[i]).collect()
    }
    map_same(x, shape.clone(), |v| gather(v, &map), |v| gather(v, &map))
}

/// For each element, the product of the other elements in its reduction group.
pub fn prod_others(x: &Dense, axes: Option<&[usize]>) -> Result<Dense> {
    let axes = reduction_axes(x.shape(), axes)?;
    let keep = keepdims_shape(x.shape(), &axes);
    let to_out = broadcast_map(&keep, x.shape());
    fn others<T: Element>(x: &[T], to_out: &[usize], groups: usize) -> Vec<T> {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, &o) in to_out.iter().enumerate() {
            members[o].push(i);
        }
        let mut out = vec![T::one(); x.len()];
        for group in &members {
            for &i in group {
                out[i] = group
                    .iter()
                    .filter(|&&j| j != i)
                    .fold(T::one(), |acc, &j| acc * x[j]);
            }
        }
        out
    }
    let groups = keep.numel();
    map_same(
        x,
        x.shape().clone(),
        |v| others(v, &to_out, groups),
        |v| others(v, &to_out, groups),
    )
}

/// 1/0 mask marking the first extremal element of every reduction group.
pub fn extremum_mask(x: &Dense, axes: Option<&[usize]>, is_max: bool) -> Result<Dense> {
    let axes = reduction_axes(x.shape(), axes)?;
    let keep = keepdims_shape(x.shape(), &axes);
    let to_out = broadcast_map(&keep, x.shape());
    fn mask<T: Element>(x: &[T], to_out: &[usize], groups: usize, is_max: bool) -> Vec<T> {
        let mut best: Vec<Option<usize>> = vec![None; groups];
        for (i, &o) in to_out.iter().enumerate() {
            best[o] = match best[o] {
                None => Some(i),
                Some(b) if x[b].is_nan() => Some(b),
                Some(b) => {
                    let better = if is_max { x[i] > x[b] } else { x[i] < x[b] };
                    if x[i].is_nan() || better {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let mut out = vec![T::zero(); x.len()];
        for b in best.into_iter().flatten() {
            out[b] = T::one();
        }
        out
    }
    let groups = keep.numel();
    map_same(
        x,
        x.shape().clone(),
        |v| mask(v, &to_out, groups, is_max),
        |v| mask(v, &to_out, groups, is_max),
    )
}
