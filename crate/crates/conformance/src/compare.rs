//! Elementwise comparison with NaN-equal semantics.

use tensorbridge::Dense;

/// Largest elementwise absolute difference.
///
/// Two NaNs, or two infinities of the same sign, count as equal. A shape or
/// dtype difference, or any other non-finite disagreement, is infinite error.
pub fn max_abs_err(a: &Dense, b: &Dense) -> f64 {
    if a.shape() != b.shape() || a.dtype() != b.dtype() {
        return f64::INFINITY;
    }
    a.to_f64_vec()
        .iter()
        .zip(b.to_f64_vec())
        .map(|(&x, y)| {
            if x.is_nan() && y.is_nan() {
                0.0
            } else if x.is_finite() && y.is_finite() {
                (x - y).abs()
            } else if x == y {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// `tol · max(1, |reference|∞)`, taking the norm over finite entries only.
pub fn scaled_tol(tol: f64, reference: &Dense) -> f64 {
    let norm = reference
        .to_f64_vec()
        .iter()
        .filter(|x| x.is_finite())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    tol * norm.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensorbridge::DType;

    fn d(v: &[f64]) -> Dense {
        Dense::from_f64([v.len()], v, DType::F64).unwrap()
    }

    #[test]
    fn nan_and_inf_semantics() {
        assert_eq!(max_abs_err(&d(&[f64::NAN, f64::INFINITY]), &d(&[f64::NAN, f64::INFINITY])), 0.0);
        assert_eq!(max_abs_err(&d(&[f64::INFINITY]), &d(&[f64::NEG_INFINITY])), f64::INFINITY);
        assert_eq!(max_abs_err(&d(&[f64::NAN]), &d(&[1.0])), f64::INFINITY);
        assert_eq!(max_abs_err(&d(&[1.0, 2.0]), &d(&[1.5, 2.0])), 0.5);
    }

    #[test]
    fn shape_and_dtype_differences_are_infinite() {
        assert_eq!(max_abs_err(&d(&[1.0]), &d(&[1.0, 1.0])), f64::INFINITY);
        let f = Dense::from_f64([1], &[1.0], DType::F32).unwrap();
        assert_eq!(max_abs_err(&d(&[1.0]), &f), f64::INFINITY);
    }

    #[test]
    fn tolerance_scales_with_magnitude() {
        assert_eq!(scaled_tol(1e-12, &d(&[0.001])), 1e-12);
        assert_eq!(scaled_tol(1e-12, &d(&[-100.0, f64::INFINITY])), 1e-10);
    }
}
