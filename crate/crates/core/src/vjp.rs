//! Vector-Jacobian product rules, one per differentiable primitive.
//!
//! The imperative, tape and functional backends all consult a [`RuleTable`];
//! they differ only in how they record the forward computation and walk it
//! backwards.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::kernel::{self, Cmp};
use crate::op::{OpDescriptor, OpKind};
use crate::shape::Shape;

/// Everything a rule may look at for one recorded op.
pub struct VjpArgs<'a> {
    pub op: &'a OpDescriptor,
    pub inputs: &'a [&'a Dense],
    pub output: &'a Dense,
    pub cotangent: &'a Dense,
}

/// Maps an output cotangent to one cotangent per tensor input.
pub type VjpRule = fn(&VjpArgs<'_>) -> Result<Vec<Dense>>;

#[derive(Clone)]
pub struct RuleTable {
    rules: HashMap<OpKind, VjpRule>,
}

impl RuleTable {
    /// The shared built-in table.
    pub fn standard() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(RuleTable::builtin)
    }

    /// A fresh copy of the built-in rules, for callers that want to override some.
    pub fn builtin() -> RuleTable {
        use OpKind::*;
        let entries: [(OpKind, VjpRule); 29] = [
            (Square, square),
            (Sqrt, sqrt),
            (Exp, exp),
            (Log, log),
            (Abs, abs),
            (Neg, neg_rule),
            (Sign, zero_like_input),
            (Reciprocal, reciprocal),
            (Add, add_rule),
            (Sub, sub_rule),
            (Mul, mul_rule),
            (Div, div_rule),
            (Pow, pow),
            (Minimum, minimum),
            (Maximum, maximum),
            (Sum, sum),
            (Mean, mean),
            (Prod, prod),
            (Min, min),
            (Max, max),
            (Argmax, zero_like_input),
            (Argmin, zero_like_input),
            (Reshape, reshape_back),
            (Flatten, reshape_back),
            (ExpandDims, reshape_back),
            (Squeeze, reshape_back),
            (Transpose, transpose),
            (Clip, clip),
            (Where, where_rule),
        ];
        RuleTable {
            rules: entries.into_iter().collect(),
        }
    }

    pub fn with_rule(mut self, kind: OpKind, rule: VjpRule) -> Self {
        self.rules.insert(kind, rule);
        self
    }

    pub fn without_rule(mut self, kind: OpKind) -> Self {
        self.rules.remove(&kind);
        self
    }

    pub fn get(&self, kind: OpKind) -> Option<VjpRule> {
        self.rules.get(&kind).copied()
    }

    /// Applies the rule for `op` and checks that every cotangent has its input's shape.
    pub fn vjp(
        &self,
        op: &OpDescriptor,
        inputs: &[&Dense],
        output: &Dense,
        cotangent: &Dense,
    ) -> Result<Vec<Dense>> {
        let rule = self
            .get(op.kind)
            .ok_or(Error::NonDifferentiableOp(op.kind.name()))?;
        if cotangent.shape() != output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "cotangent {} does not match output {} of `{}`",
                cotangent.shape(),
                output.shape(),
                op.kind
            )));
        }
        let args = VjpArgs {
            op,
            inputs,
            output,
            cotangent,
        };
        let cots = rule(&args)?;
        if cots.len() != inputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "rule for `{}` returned {} cotangents for {} inputs",
                op.kind,
                cots.len(),
                inputs.len()
            )));
        }
        for (c, x) in cots.iter().zip(inputs) {
            if c.shape() != x.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "cotangent {} does not match input {} of `{}`",
                    c.shape(),
                    x.shape(),
                    op.kind
                )));
            }
        }
        Ok(cots)
    }
}

/// Input cotangents of `op` under the built-in rules.
pub fn vjp(op: &OpDescriptor, inputs: &[&Dense], output: &Dense, cotangent: &Dense) -> Result<Vec<Dense>> {
    RuleTable::standard().vjp(op, inputs, output, cotangent)
}

// -- small algebra over Dense, all through the shared kernels

fn k(op: OpDescriptor, xs: &[&Dense]) -> Result<Dense> {
    kernel::apply(&op, xs)
}

pub fn mul(a: &Dense, b: &Dense) -> Result<Dense> {
    k(OpDescriptor::new(OpKind::Mul), &[a, b])
}

pub fn div(a: &Dense, b: &Dense) -> Result<Dense> {
    k(OpDescriptor::new(OpKind::Div), &[a, b])
}

pub fn add(a: &Dense, b: &Dense) -> Result<Dense> {
    k(OpDescriptor::new(OpKind::Add), &[a, b])
}

pub fn neg(a: &Dense) -> Result<Dense> {
    k(OpDescriptor::new(OpKind::Neg), &[a])
}

fn scale(a: &Dense, s: f64) -> Result<Dense> {
    k(OpDescriptor::with_scalar(OpKind::Mul, s), &[a])
}

fn reshape(a: &Dense, shape: &Shape) -> Result<Dense> {
    k(OpDescriptor::reshape(shape.clone()), &[a])
}

fn one_minus(mask: &Dense) -> Result<Dense> {
    let neg = neg(mask)?;
    k(OpDescriptor::with_scalar(OpKind::Add, 1.0), &[&neg])
}

// -- rules

fn square(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let two_x = scale(a.inputs[0], 2.0)?;
    Ok(vec![mul(a.cotangent, &two_x)?])
}

fn sqrt(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let two_out = scale(a.output, 2.0)?;
    Ok(vec![div(a.cotangent, &two_out)?])
}

fn exp(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![mul(a.cotangent, a.output)?])
}

fn log(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![div(a.cotangent, a.inputs[0])?])
}

// abs'(0) = 0 falls out of sign(0) = 0
fn abs(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let s = k(OpDescriptor::new(OpKind::Sign), &[a.inputs[0]])?;
    Ok(vec![mul(a.cotangent, &s)?])
}

fn neg_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![neg(a.cotangent)?])
}

fn zero_like_input(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![kernel::zeros_like(a.inputs[0])])
}

fn reciprocal(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let sq = mul(a.output, a.output)?;
    Ok(vec![neg(&mul(a.cotangent, &sq)?)?])
}

fn unbroadcast(g: Dense, input: &Dense) -> Result<Dense> {
    kernel::sum_to_shape(&g, input.shape())
}

fn add_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    if a.op.scalar.is_some() {
        return Ok(vec![a.cotangent.clone()]);
    }
    Ok(vec![
        unbroadcast(a.cotangent.clone(), a.inputs[0])?,
        unbroadcast(a.cotangent.clone(), a.inputs[1])?,
    ])
}

fn sub_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    if a.op.scalar.is_some() {
        return Ok(vec![a.cotangent.clone()]);
    }
    Ok(vec![
        unbroadcast(a.cotangent.clone(), a.inputs[0])?,
        unbroadcast(neg(a.cotangent)?, a.inputs[1])?,
    ])
}

fn mul_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    if let Some(s) = a.op.scalar {
        return Ok(vec![scale(a.cotangent, s)?]);
    }
    let (x, y) = (a.inputs[0], a.inputs[1]);
    Ok(vec![
        unbroadcast(mul(a.cotangent, y)?, x)?,
        unbroadcast(mul(a.cotangent, x)?, y)?,
    ])
}

fn div_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    if let Some(s) = a.op.scalar {
        return Ok(vec![k(OpDescriptor::with_scalar(OpKind::Div, s), &[a.cotangent])?]);
    }
    let (x, y) = (a.inputs[0], a.inputs[1]);
    // d(x/y)/dy = -(x/y)/y
    let dy = neg(&div(&mul(a.cotangent, a.output)?, y)?)?;
    Ok(vec![unbroadcast(div(a.cotangent, y)?, x)?, unbroadcast(dy, y)?])
}

fn pow(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let x = a.inputs[0];
    if let Some(s) = a.op.scalar {
        let p = k(OpDescriptor::with_scalar(OpKind::Pow, s - 1.0), &[x])?;
        return Ok(vec![mul(a.cotangent, &scale(&p, s)?)?]);
    }
    let y = a.inputs[1];
    let y_minus_one = k(OpDescriptor::with_scalar(OpKind::Sub, 1.0), &[y])?;
    let p = k(OpDescriptor::new(OpKind::Pow), &[x, &y_minus_one])?;
    let dx = mul(a.cotangent, &mul(y, &p)?)?;
    let ln_x = k(OpDescriptor::new(OpKind::Log), &[x])?;
    let dy = mul(a.cotangent, &mul(a.output, &ln_x)?)?;
    Ok(vec![unbroadcast(dx, x)?, unbroadcast(dy, y)?])
}

// ties route the cotangent to the first operand
fn select(a: &VjpArgs<'_>, cmp: Cmp) -> Result<Vec<Dense>> {
    let x = a.inputs[0];
    if let Some(s) = a.op.scalar {
        let mask = kernel::compare_scalar(x, s, cmp)?;
        return Ok(vec![mul(a.cotangent, &mask)?]);
    }
    let y = a.inputs[1];
    let mask = kernel::compare(x, y, cmp)?;
    let rest = one_minus(&mask)?;
    Ok(vec![
        unbroadcast(mul(a.cotangent, &mask)?, x)?,
        unbroadcast(mul(a.cotangent, &rest)?, y)?,
    ])
}

fn minimum(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    select(a, Cmp::Le)
}

fn maximum(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    select(a, Cmp::Ge)
}

// cotangent of a reduction, spread back over the input shape
fn spread(a: &VjpArgs<'_>) -> Result<Dense> {
    let x = a.inputs[0];
    let axes = kernel::reduction_axes(x.shape(), a.op.axes.as_deref())?;
    let keep = kernel::keepdims_shape(x.shape(), &axes);
    let g = reshape(a.cotangent, &keep)?;
    kernel::broadcast_to(&g, x.shape())
}

fn sum(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![spread(a)?])
}

fn mean(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let x = a.inputs[0];
    let axes = kernel::reduction_axes(x.shape(), a.op.axes.as_deref())?;
    let count: usize = axes.iter().map(|&i| x.shape().dims()[i]).product();
    let g = spread(a)?;
    Ok(vec![k(OpDescriptor::with_scalar(OpKind::Div, count as f64), &[&g])?])
}

fn prod(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let others = kernel::prod_others(a.inputs[0], a.op.axes.as_deref())?;
    Ok(vec![mul(&spread(a)?, &others)?])
}

fn extremum(a: &VjpArgs<'_>, is_max: bool) -> Result<Vec<Dense>> {
    let mask = kernel::extremum_mask(a.inputs[0], a.op.axes.as_deref(), is_max)?;
    Ok(vec![mul(&spread(a)?, &mask)?])
}

fn min(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    extremum(a, false)
}

fn max(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    extremum(a, true)
}

fn reshape_back(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![reshape(a.cotangent, a.inputs[0].shape())?])
}

fn transpose(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    Ok(vec![k(OpDescriptor::new(OpKind::Transpose), &[a.cotangent])?])
}

fn clip(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let (lo, hi) = a.op.clip.expect("validated");
    let mask = kernel::within(a.inputs[0], lo, hi)?;
    Ok(vec![mul(a.cotangent, &mask)?])
}

// no gradient flows to the condition
fn where_rule(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
    let (cond, x, y) = (a.inputs[0], a.inputs[1], a.inputs[2]);
    let zero = Dense::scalar(0.0, a.cotangent.dtype());
    let select = OpDescriptor::new(OpKind::Where);
    let dx = k(select.clone(), &[cond, a.cotangent, &zero])?;
    let dy = k(select, &[cond, &zero, a.cotangent])?;
    Ok(vec![
        kernel::zeros_like(cond),
        unbroadcast(dx, x)?,
        unbroadcast(dy, y)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::DType;

    fn t(shape: &[usize], values: &[f64]) -> Dense {
        Dense::from_f64(shape, values, DType::F64).unwrap()
    }

    fn run(op: OpDescriptor, inputs: &[&Dense], cot: &Dense) -> Result<Vec<Dense>> {
        let out = kernel::apply(&op, inputs)?;
        vjp(&op, inputs, &out, cot)
    }

    #[test]
    fn square_rule_on_one_two_three() {
        let x = t(&[3], &[1., 2., 3.]);
        let g = run(OpDescriptor::new(OpKind::Square), &[&x], &t(&[3], &[1., 1., 1.])).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![2., 4., 6.]);
    }

    #[test]
    fn sum_spreads_cotangent() {
        let x = t(&[3], &[1., 2., 3.]);
        let g = run(OpDescriptor::reduce(OpKind::Sum, None, false), &[&x], &t(&[], &[2.5])).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![2.5, 2.5, 2.5]);
    }

    #[test]
    fn broadcast_operand_is_sum_reduced() {
        // a:[2,2], b:[2]; d/db sum(a*b) = column sums of a
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2], &[10., 20.]);
        let g = run(OpDescriptor::new(OpKind::Mul), &[&a, &b], &t(&[2, 2], &[1., 1., 1., 1.])).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![10., 20., 10., 20.]);
        assert_eq!(g[1].shape(), b.shape());
        assert_eq!(g[1].to_f64_vec(), vec![4., 6.]);
    }

    #[test]
    fn non_smooth_conventions() {
        let x = t(&[3], &[-1., 0., 2.]);
        let ones = t(&[3], &[1., 1., 1.]);
        let g = run(OpDescriptor::new(OpKind::Abs), &[&x], &ones).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![-1., 0., 1.]);
        let g = run(OpDescriptor::new(OpKind::Sign), &[&x], &ones).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![0., 0., 0.]);
        // tie goes to the first operand
        let y = t(&[3], &[-1., 5., 2.]);
        let g = run(OpDescriptor::new(OpKind::Minimum), &[&x, &y], &ones).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![1., 1., 1.]);
        assert_eq!(g[1].to_f64_vec(), vec![0., 0., 0.]);
        let g = run(OpDescriptor::new(OpKind::Maximum), &[&x, &y], &ones).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![1., 0., 1.]);
        assert_eq!(g[1].to_f64_vec(), vec![0., 1., 0.]);
    }

    #[test]
    fn where_gives_condition_no_gradient() {
        let c = t(&[2], &[1., 0.]);
        let x = t(&[2], &[3., 4.]);
        let y = t(&[], &[7.]);
        let g = run(OpDescriptor::new(OpKind::Where), &[&c, &x, &y], &t(&[2], &[1., 1.])).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![0., 0.]);
        assert_eq!(g[1].to_f64_vec(), vec![1., 0.]);
        assert_eq!(g[2].to_f64_vec(), vec![1.]);
    }

    #[test]
    fn argmax_has_zero_cotangent() {
        let x = t(&[3], &[1., 3., 2.]);
        let g = run(OpDescriptor::with_axis(OpKind::Argmax, 0), &[&x], &t(&[], &[1.])).unwrap();
        assert_eq!(g[0].to_f64_vec(), vec![0., 0., 0.]);
    }

    #[test]
    fn creation_has_no_rule() {
        let op = OpDescriptor::zeros([2], DType::F64);
        let out = kernel::apply(&op, &[]).unwrap();
        assert!(matches!(
            vjp(&op, &[], &out, &out),
            Err(Error::NonDifferentiableOp("zeros"))
        ));
    }

    #[test]
    fn cotangent_shape_is_checked() {
        fn broken(a: &VjpArgs<'_>) -> Result<Vec<Dense>> {
            Ok(vec![a.cotangent.clone(), a.cotangent.clone()])
        }
        let table = RuleTable::builtin().with_rule(OpKind::Add, broken);
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2], &[1., 1.]);
        let op = OpDescriptor::new(OpKind::Add);
        let out = kernel::apply(&op, &[&a, &b]).unwrap();
        let cot = kernel::zeros_like(&out);
        assert!(matches!(
            table.vjp(&op, &[&a, &b], &out, &cot),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
