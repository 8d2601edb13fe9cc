use tensorbridge::{BackendId, DType, OpKind};
use tensorbridge_conformance::fixtures::{flipped_vjp_sign, missing_broadcast_reduction, WrongKernel};
use tensorbridge_conformance::{
    all_backends, generate_cases, run_check, run_differential, BackendExecutor, CheckConfig, CheckError, Executor,
    Record, ShapeBudget, Status,
};

fn failures(records: &[Record]) -> Vec<&Record> {
    records.iter().filter(|r| r.status != Status::Pass).collect()
}

fn jsonl(cfg: &CheckConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    run_check(cfg).unwrap().write_jsonl(&mut buf).unwrap();
    buf
}

#[test]
fn full_suite_is_green_in_both_dtypes() {
    for dtype in [DType::F64, DType::F32] {
        let report = run_check(&CheckConfig::new(42, dtype, all_backends())).unwrap();
        let bad = failures(&report.records);
        assert!(bad.is_empty(), "{dtype}: {:#?}", &bad[..bad.len().min(5)]);
        assert!(report.cases >= OpKind::ALL.len() * 4);
        assert!(report.summary().passed > 0);
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = jsonl(&CheckConfig::new(42, DType::F64, all_backends()));
    let b = jsonl(&CheckConfig::new(42, DType::F64, all_backends()));
    assert_eq!(a, b);
}

#[test]
fn records_are_sorted_by_case() {
    let report = run_check(&CheckConfig::new(3, DType::F64, all_backends())).unwrap();
    assert!(report.records.windows(2).all(|w| w[0].case <= w[1].case));
}

#[test]
fn square_gives_six_passing_pairs() {
    let cases = generate_cases(42, DType::F64, ShapeBudget::default());
    let sq = cases.iter().find(|c| c.op.kind == OpKind::Square).unwrap();
    let recs = run_differential(sq, &all_backends(), 1e-12);
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.status == Status::Pass));
}

#[test]
fn ieee_edges_are_unanimous() {
    let cases = generate_cases(42, DType::F64, ShapeBudget::default());
    let execs = all_backends();
    let mut seen = 0;
    for c in cases.iter().filter(|c| c.specs.iter().any(|s| matches!(s.domain, tensorbridge_conformance::cases::Domain::Exact(_)))) {
        seen += 1;
        let results: Vec<_> = execs.iter().map(|e| e.eval(&c.op, &c.inputs).unwrap()).collect();
        let first = results[0].to_f64_vec();
        for r in &results {
            let v = r.to_f64_vec();
            assert!(v.iter().zip(&first).all(|(a, b)| a.to_bits() == b.to_bits()), "{}", c.description());
        }
        assert!(run_differential(c, &execs, 1e-12).iter().all(|r| r.status == Status::Pass));
    }
    assert!(seen >= 6);
}

#[test]
fn error_cases_pass_only_when_unanimous() {
    let cases = generate_cases(42, DType::F64, ShapeBudget::default());
    let mismatched = cases
        .iter()
        .find(|c| c.op.kind == OpKind::Add && c.specs.len() == 2 && c.specs[1].shape.dims() == [4])
        .unwrap();
    let recs = run_differential(mismatched, &all_backends(), 1e-12);
    assert!(recs.iter().all(|r| r.status == Status::Pass && r.error.as_deref() == Some("ShapeMismatch")));
}

#[test]
fn wrong_kernel_fails_against_every_backend() {
    let mut execs = all_backends();
    execs.push(Box::new(WrongKernel::new(BackendId::Plain)));
    let mut cfg = CheckConfig::new(42, DType::F64, execs);
    cfg.ops = Some(vec![OpKind::Square]);
    let report = run_check(&cfg).unwrap();
    let bad = failures(&report.records);
    for b in BackendId::ALL {
        assert!(bad.iter().any(|r| r.a == b.name() && r.b == "wrong-kernel"), "{b}");
    }
}

#[test]
fn vjp_fixtures_are_caught() {
    for fixture in [flipped_vjp_sign(BackendId::Tape), missing_broadcast_reduction(BackendId::Functional)] {
        let name = fixture.name().to_string();
        let cfg = CheckConfig::new(42, DType::F64, vec![Box::new(BackendExecutor::new(BackendId::Imperative)), Box::new(fixture)]);
        let report = run_check(&cfg).unwrap();
        let bad = failures(&report.records);
        assert!(bad.iter().any(|r| r.b == "fd-oracle" && r.a == name), "{name}");
        // the forward pass is untouched
        assert!(bad.iter().all(|r| r.op.starts_with("grad:")), "{name}");
    }
}

#[test]
fn op_filter_limits_records() {
    let mut cfg = CheckConfig::new(42, DType::F64, vec![Box::new(BackendExecutor::new(BackendId::Plain)), Box::new(BackendExecutor::new(BackendId::Tape))]);
    cfg.ops = Some(vec![OpKind::Square]);
    let report = run_check(&cfg).unwrap();
    assert!(!report.records.is_empty());
    for r in &report.records {
        assert!(r.op == "square" || r.op.starts_with("grad:"), "{}", r.op);
        if !r.op.starts_with("grad:") {
            assert_eq!((r.a.as_str(), r.b.as_str()), ("plain", "tape"));
        }
    }
}

#[test]
fn needs_two_executors() {
    let cfg = CheckConfig::new(42, DType::F64, vec![Box::new(BackendExecutor::new(BackendId::Plain))]);
    assert_eq!(run_check(&cfg).unwrap_err(), CheckError::TooFewExecutors(1));
}

#[test]
fn plain_backend_reports_missing_autodiff() {
    let x = tensorbridge::Dense::scalar(1.0, DType::F64);
    let err = BackendExecutor::new(BackendId::Plain).value_and_grad(|t| t.square(), &x).unwrap_err();
    assert_eq!(err, tensorbridge::Error::NoAutodiffCapability(BackendId::Plain));
}
