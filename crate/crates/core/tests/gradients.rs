use proptest::prelude::*;
use tensorbridge::backend::{imperative, tape, NativeTensor};
use tensorbridge::functions::from_values;
use tensorbridge::{value_and_grad, value_aux_and_grad, BackendId, DType, Dense, Error, Result, TensorHandle};

type Fun = fn(&TensorHandle) -> Result<TensorHandle>;

fn fns() -> Vec<(&'static str, Fun)> {
    vec![
        ("sum_square", |x| x.square()?.sum()),
        ("norm", |x| x.norm()),
        ("exp_mean", |x| x.exp()?.mean()),
        ("log_abs", |x| x.abs()?.add_scalar(1.0)?.log()?.sum()),
        ("recip", |x| x.square()?.add_scalar(1.0)?.reciprocal()?.sum()),
        ("product", |x| x.prod()),
        ("max", |x| x.max()),
        ("self_mul_div", |x| x.mul(&x.exp()?)?.div(&x.square()?.add_scalar(2.0)?)?.sum()),
        ("pow", |x| x.abs()?.add_scalar(0.5)?.pow_scalar(1.5)?.sum()),
        ("clip", |x| x.clip(-0.5, 0.5)?.mul(x)?.sum()),
        ("broadcast", |x| {
            let row = x.reshape([1, x.numel()])?;
            let col = x.reshape([x.numel(), 1])?;
            row.mul(&col)?.sum_axes(&[0], false)?.sum()
        }),
        ("minimum", |x| x.minimum(&x.neg()?.add_scalar(0.3)?)?.sum()),
        ("where", |x| x.where_(&x.square()?, &x.exp()?)?.sum()),
    ]
}

// Central differences on the plain backend: independent of every VJP rule.
fn fd_grad(f: Fun, values: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let eval = |v: &[f64]| {
        let x = from_values(BackendId::Plain, v, [v.len()], DType::F64).unwrap();
        f(&x).unwrap().item().unwrap()
    };
    (0..values.len())
        .map(|i| {
            let mut up = values.to_vec();
            let mut down = values.to_vec();
            up[i] += h;
            down[i] -= h;
            (eval(&up) - eval(&down)) / (2.0 * h)
        })
        .collect()
}

fn ad_grad(f: Fun, backend: BackendId, values: &[f64]) -> (f64, Vec<f64>) {
    let x = from_values(backend, values, [values.len()], DType::F64).unwrap();
    let (v, g) = value_and_grad(f, &x).unwrap();
    (v.item().unwrap(), g.to_vec())
}

// Keeps samples off kinks (abs at 0, ties in max/minimum, clip bounds).
fn smooth_inputs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.15f64..1.8, 1..5).prop_flat_map(|mags| {
        let n = mags.len();
        (Just(mags), prop::collection::vec(any::<bool>(), n))
    })
    .prop_map(|(mags, signs)| {
        mags.iter()
            .zip(signs)
            .enumerate()
            .map(|(i, (m, s))| (if s { *m } else { -m }) + i as f64 * 1e-3)
            .collect()
    })
    .prop_filter("away from clip bounds and ties", |v: &Vec<f64>| {
        v.iter().all(|x| (x.abs() - 0.5).abs() > 0.05 && (x - 0.15).abs() > 0.05)
            && v.iter().enumerate().all(|(i, a)| v[..i].iter().all(|b| (a - b).abs() > 0.05))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ad_matches_finite_differences(values in smooth_inputs()) {
        for (name, f) in fns() {
            let fd = fd_grad(f, &values);
            for backend in BackendId::AUTODIFF {
                let (_, g) = ad_grad(f, backend, &values);
                for (a, b) in g.iter().zip(&fd) {
                    prop_assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{} on {}: {:?} vs {:?}", name, backend, g, fd);
                }
            }
        }
    }

    #[test]
    fn backends_agree(values in smooth_inputs()) {
        for (name, f) in fns() {
            let (v0, g0) = ad_grad(f, BackendId::Imperative, &values);
            for backend in [BackendId::Tape, BackendId::Functional] {
                let (v, g) = ad_grad(f, backend, &values);
                prop_assert!((v - v0).abs() <= 1e-12 * v0.abs().max(1.0), "{}", name);
                for (a, b) in g.iter().zip(&g0) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{} on {}", name, backend);
                }
            }
        }
    }

    #[test]
    fn gradient_is_linear(values in smooth_inputs(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = |x: &TensorHandle| x.square()?.sum();
        let g = |x: &TensorHandle| x.exp()?.sum();
        for backend in BackendId::AUTODIFF {
            let x = from_values(backend, &values, [values.len()], DType::F64).unwrap();
            let combined = |t: &TensorHandle| f(t)?.mul_scalar(a)?.add(&g(t)?.mul_scalar(b)?);
            let (_, gc) = value_and_grad(combined, &x).unwrap();
            let (_, gf) = value_and_grad(f, &x).unwrap();
            let (_, gg) = value_and_grad(g, &x).unwrap();
            for ((c, p), q) in gc.to_vec().iter().zip(gf.to_vec()).zip(gg.to_vec()) {
                let want = a * p + b * q;
                prop_assert!((c - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn norm_gradient_of_three_four() {
    let fd = fd_grad(|x| x.norm(), &[3.0, 4.0]);
    for backend in BackendId::AUTODIFF {
        let (v, g) = ad_grad(|x| x.norm(), backend, &[3.0, 4.0]);
        assert!((v - 5.0).abs() <= 1e-12);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6, "{backend}: {g:?} vs {fd:?}");
        }
    }
}

#[test]
fn sum_of_squares_is_exact() {
    for backend in BackendId::AUTODIFF {
        let (v, g) = ad_grad(|x| x.square()?.sum(), backend, &[1.0, 2.0, 3.0]);
        assert_eq!(v, 14.0);
        assert_eq!(g, vec![2.0, 4.0, 6.0]);
    }
}

#[test]
fn aux_comes_back_alongside() {
    for backend in BackendId::AUTODIFF {
        let x = from_values(backend, &[1., 2., 3.], [3], DType::F64).unwrap();
        let (v, aux, g) = value_aux_and_grad(|t| Ok((t.square()?.sum()?, t.add_scalar(1.0)?)), &x).unwrap();
        assert_eq!(v.item(), Some(14.0));
        assert_eq!(aux.to_vec(), vec![2., 3., 4.]);
        assert_eq!(g.to_vec(), vec![2., 4., 6.]);
    }
}

#[test]
fn f32_gradients_stay_f32() {
    for backend in BackendId::AUTODIFF {
        let x = from_values(backend, &[1., 2., 3.], [3], DType::F32).unwrap();
        let (v, g) = value_and_grad(|t| t.square()?.sum(), &x).unwrap();
        assert_eq!(v.dtype(), DType::F32);
        assert_eq!(g.dtype(), DType::F32);
        assert_eq!(g.to_vec(), vec![2., 4., 6.]);
    }
}

#[test]
fn argmax_contributes_no_gradient() {
    for backend in BackendId::AUTODIFF {
        let x = from_values(backend, &[1., 5., 3.], [3], DType::F64).unwrap();
        let (_, g) = value_and_grad(|t| t.argmax(0)?.mul(&t.sum()?), &x).unwrap();
        assert_eq!(g.to_vec(), vec![1., 1., 1.]);
    }
}

#[test]
fn imperative_backward_accumulates() {
    let x = imperative::Tensor::new(Dense::from_f64([3], &[1., 2., 3.], DType::F64).unwrap());
    x.requires_grad_();
    let h = tensorbridge::astensor(x.clone());
    let loss = h.square().unwrap().sum().unwrap();
    let NativeTensor::Imperative(l) = loss.raw() else { unreachable!() };
    for k in 1..=3 {
        l.backward().unwrap();
        let g = x.grad().unwrap().to_f64_vec();
        assert_eq!(g, vec![2. * k as f64, 4. * k as f64, 6. * k as f64]);
    }
    x.zero_grad();
    assert!(x.grad().is_none());
    let v = tensorbridge::astensor(x.clone()).square().unwrap();
    let NativeTensor::Imperative(v) = v.raw() else { unreachable!() };
    assert!(matches!(v.backward(), Err(Error::NotScalarLoss(_))));
}

#[test]
fn tape_semantics() {
    let x = tape::Tensor::new(Dense::from_f64([2], &[1., 2.], DType::F64).unwrap());
    let (y, t) = tape::tape_scope(false, |tp| {
        tp.watch(&x);
        let h = tensorbridge::astensor(x.clone()).square()?.sum()?;
        match h.into_raw() {
            NativeTensor::Tape(y) => Ok(y),
            _ => unreachable!(),
        }
    })
    .unwrap();
    assert_eq!(t.gradient(&y, &[&x]).unwrap()[0].value().to_f64_vec(), vec![2., 4.]);
    assert_eq!(t.gradient(&y, &[&x]).unwrap_err(), Error::TapeConsumed);

    let other = tape::Tensor::new(Dense::scalar(1.0, DType::F64));
    let (y, t) = tape::tape_scope(true, |tp| {
        tp.watch(&x);
        match tensorbridge::astensor(x.clone()).sum()?.into_raw() {
            NativeTensor::Tape(y) => Ok(y),
            _ => unreachable!(),
        }
    })
    .unwrap();
    assert_eq!(t.gradient(&y, &[&other]).unwrap_err(), Error::NotWatched);
    assert!(t.gradient(&y, &[&x]).is_ok());
    assert!(t.gradient(&y, &[&x]).is_ok());
}
