//! Finite-difference gradient oracle and the corpus of functions it checks.

use tensorbridge::functions::{self as tf, from_values};
use tensorbridge::{BackendId, DType, Dense, OpKind, Result, TensorHandle};

use crate::executor::ScalarFn;
use crate::rng::SplitMix64;

/// Central differences: `(f(x + h·e_i) - f(x - h·e_i)) / 2h` per coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// [`finite_diff_grad`] of a corpus function, evaluated on the plain backend.
pub fn fd_on_plain(f: ScalarFn, x: &Dense, h: f64) -> Result<Dense> {
    let shape = x.shape().clone();
    let eval = |v: &[f64]| -> Result<f64> {
        let t = from_values(BackendId::Plain, v, shape.clone(), DType::F64)?;
        let out = f(&t)?;
        Ok(out.item().unwrap_or(f64::NAN))
    };
    // surface errors once instead of per probe
    eval(&x.to_f64_vec())?;
    let g = finite_diff_grad(|v| eval(v).unwrap_or(f64::NAN), &x.to_f64_vec(), h);
    Dense::from_f64(shape, &g, DType::F64)
}

pub struct GradFn {
    pub name: &'static str,
    /// Every op kind the function exercises, for `--ops` filtering.
    pub ops: &'static [OpKind],
    pub shape: &'static [usize],
    pub f: ScalarFn,
}

impl GradFn {
    /// Deterministic input for this function, away from its kinks.
    pub fn input(&self, seed: u64, index: usize) -> Dense {
        let mut rng = SplitMix64::new(seed ^ (0x6772_6164 << 32 | index as u64));
        let n: usize = self.shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.next_input()).collect();
        Dense::from_f64(self.shape.to_vec(), &v, DType::F64).expect("corpus shape")
    }
}

fn mask_like(x: &TensorHandle) -> Result<TensorHandle> {
    let v: Vec<f64> = (0..x.numel()).map(|i| (i % 2) as f64).collect();
    from_values(x.backend(), &v, x.shape().clone(), x.dtype())
}

use OpKind::*;

pub fn corpus() -> Vec<GradFn> {
    vec![
        GradFn { name: "sum_square", ops: &[Square, Sum], shape: &[3], f: |x| x.square()?.sum() },
        GradFn { name: "norm", ops: &[Norm, Square, Sum, Sqrt], shape: &[2, 3], f: |x| x.norm() },
        GradFn { name: "exp_mean", ops: &[Exp, Mean], shape: &[2, 3], f: |x| x.exp()?.mean() },
        GradFn { name: "log_abs", ops: &[Log, Abs, Sum], shape: &[4], f: |x| x.abs()?.log()?.sum() },
        GradFn { name: "sqrt_abs", ops: &[Sqrt, Abs, Sum], shape: &[3], f: |x| x.abs()?.sqrt()?.sum() },
        GradFn { name: "reciprocal", ops: &[Reciprocal, Sum], shape: &[3], f: |x| x.reciprocal()?.sum() },
        GradFn {
            name: "neg_sign",
            ops: &[Neg, Sign, Mul, Sum],
            shape: &[4],
            f: |x| x.neg()?.mul(&x.sign()?)?.sum(),
        },
        GradFn { name: "prod", ops: &[Prod], shape: &[4], f: |x| x.prod() },
        GradFn {
            name: "min_rows",
            ops: &[Min, Sum],
            shape: &[2, 3],
            f: |x| x.min_axes(&[1], false)?.sum(),
        },
        GradFn { name: "max_all", ops: &[Max], shape: &[2, 3], f: |x| x.max() },
        GradFn {
            name: "mul_exp_div",
            ops: &[Mul, Exp, Div, Square, Add, Sum],
            shape: &[3],
            f: |x| x.mul(&x.exp()?)?.div(&x.square()?.add_scalar(2.0)?)?.sum(),
        },
        GradFn {
            name: "center_columns",
            ops: &[Sub, Mean, Square, Sum],
            shape: &[3, 2],
            f: |x| x.sub(&x.mean_axes(&[0], true)?)?.square()?.sum(),
        },
        GradFn {
            name: "scale_rows",
            ops: &[Mul, Sum],
            shape: &[2, 3],
            f: |x| x.mul(&x.sum_axes(&[1], true)?)?.sum(),
        },
        GradFn {
            name: "shift_by_column_max",
            ops: &[Add, Max, Square, Sum],
            shape: &[2, 3],
            f: |x| x.add(&x.max_axes(&[0], true)?)?.square()?.sum(),
        },
        GradFn {
            name: "outer_product",
            ops: &[Mul, Reshape, Sum],
            shape: &[3],
            f: |x| x.reshape([3, 1])?.mul(&x.reshape([1, 3])?)?.sum(),
        },
        GradFn {
            name: "row_normalize",
            ops: &[Div, Square, Sum, Add],
            shape: &[2, 3],
            f: |x| x.div(&x.square()?.sum_axes(&[1], true)?.add_scalar(1.0)?)?.sum(),
        },
        GradFn {
            name: "pow_scalar",
            ops: &[Pow, Abs, Sum],
            shape: &[3],
            f: |x| x.abs()?.pow_scalar(1.5)?.sum(),
        },
        GradFn {
            name: "pow_tensor",
            ops: &[Pow, Abs, Add, Sum],
            shape: &[3],
            f: |x| x.abs()?.add_scalar(0.5)?.pow(x)?.sum(),
        },
        GradFn {
            name: "minimum_maximum",
            ops: &[Minimum, Maximum, Square, Sub, Add, Sum],
            shape: &[4],
            f: |x| {
                let y = x.square()?.sub_scalar(1.0)?;
                x.minimum(&y)?.add(&x.maximum(&y)?.mul_scalar(0.5)?)?.sum()
            },
        },
        GradFn {
            name: "clip_times_x",
            ops: &[Clip, Mul, Sum],
            shape: &[4],
            f: |x| x.clip(-0.5, 0.5)?.mul(x)?.sum(),
        },
        GradFn {
            name: "where_square_exp",
            ops: &[Where, Square, Exp, Sum, FromValues],
            shape: &[2, 2],
            f: |x| mask_like(x)?.where_(&x.square()?, &x.exp()?)?.sum(),
        },
        GradFn {
            name: "shape_round_trip",
            ops: &[Reshape, Transpose, ExpandDims, Squeeze, Flatten, Mul, Arange, Sum],
            shape: &[2, 3],
            f: |x| {
                let y = x.reshape([3, 2])?.transpose()?.expand_dims(0)?.squeeze()?.flatten()?;
                y.mul(&tf::arange(x.backend(), 6, x.dtype())?)?.sum()
            },
        },
        GradFn {
            name: "argmax_weight",
            ops: &[Argmax, Mul, Sum],
            shape: &[4],
            f: |x| x.argmax(0)?.add_scalar(1.0)?.mul(&x.sum()?),
        },
        GradFn {
            name: "creation_constants",
            ops: &[Ones, Zeros, Full, Mul, Add, Sum],
            shape: &[3],
            f: |x| {
                let (b, s, d) = (x.backend(), x.shape().clone(), x.dtype());
                x.mul(&tf::full(b, s.clone(), 3.0, d)?)?
                    .add(&tf::ones(b, s.clone(), d)?)?
                    .add(&tf::zeros(b, s, d)?)?
                    .sum()
            },
        },
        GradFn {
            name: "squeeze_axis",
            ops: &[Squeeze, ExpandDims, Exp, Sum],
            shape: &[3],
            f: |x| x.expand_dims(1)?.squeeze_axis(1)?.exp()?.sum(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_sum_of_squares() {
        let g = finite_diff_grad(|v| v.iter().map(|x| x * x).sum(), &[1., 2., 3.], 1e-5);
        for (a, b) in g.iter().zip([2., 4., 6.]) {
            assert!((a - b).abs() <= 1e-8, "{g:?}");
        }
    }

    #[test]
    fn fd_of_sum_and_constant() {
        let g = finite_diff_grad(|v| v.iter().sum(), &[0.3, -1.0, 7.0], 1e-6);
        assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-8));
        let z = finite_diff_grad(|_| 0.0, &[1.0, 2.0], 1e-6);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn corpus_names_are_unique_and_all_tagged() {
        let c = corpus();
        let mut names: Vec<_> = c.iter().map(|g| g.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), c.len());
        for g in &c {
            assert!(!g.ops.is_empty());
        }
    }

    #[test]
    fn corpus_covers_every_differentiable_primitive() {
        let c = corpus();
        for kind in OpKind::ALL {
            if kind.is_differentiable() {
                assert!(c.iter().any(|g| g.ops.contains(&kind)), "{kind}");
            }
        }
    }

    #[test]
    fn every_corpus_function_is_scalar_valued_on_plain() {
        for (i, g) in corpus().iter().enumerate() {
            let x = g.input(42, i);
            fd_on_plain(g.f, &x, 1e-6).unwrap_or_else(|e| panic!("{}: {e}", g.name));
        }
    }
}
