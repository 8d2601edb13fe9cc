//! Differential runs, the gradient suite, and the full check.

use std::fmt;

use rayon::prelude::*;
use tensorbridge::{DType, Dense, OpKind, Result};

use crate::cases::{case_id, generate_cases, Case, ShapeBudget};
use crate::compare::{max_abs_err, scaled_tol};
use crate::executor::Executor;
use crate::gradcheck::{corpus, fd_on_plain, GradFn};
use crate::report::{Record, Status, Summary};

pub const FD_ORACLE: &str = "fd-oracle";
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;
/// Agreement required between AD backends, which share every rule.
pub const AD_PAIR_TOL: f64 = 1e-12;

pub fn default_tol(dtype: DType) -> f64 {
    match dtype {
        DType::F64 => 1e-12,
        DType::F32 => 1e-5,
    }
}

fn verdict(case: &str, op: &str, a: &str, b: &str, x: &Dense, y: &Dense, tol: f64) -> Record {
    let err = max_abs_err(x, y);
    let tol = scaled_tol(tol, y);
    Record {
        case: case.to_string(),
        op: op.to_string(),
        a: a.to_string(),
        b: b.to_string(),
        max_abs_err: err.is_finite().then_some(err),
        tol,
        status: if err <= tol { Status::Pass } else { Status::Fail },
        error: None,
    }
}

fn describe(r: &Result<Dense>) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(e) => e.kind(),
    }
}

/// One record per unordered executor pair, in executor order.
pub fn run_differential(case: &Case, executors: &[Box<dyn Executor>], tol: f64) -> Vec<Record> {
    let results: Vec<Result<Dense>> = executors.iter().map(|e| e.eval(&case.op, &case.inputs)).collect();
    let first_kind = results.first().map(describe);
    let unanimous_error =
        results.iter().all(|r| r.is_err()) && results.iter().all(|r| Some(describe(r)) == first_kind);
    let op = case.op.kind.name();

    let mut out = Vec::new();
    for i in 0..executors.len() {
        for j in i + 1..executors.len() {
            let (a, b) = (executors[i].name(), executors[j].name());
            let rec = match (&results[i], &results[j]) {
                (Ok(x), Ok(y)) => verdict(&case.id, op, a, b, x, y, tol),
                (ra, rb) => Record {
                    case: case.id.clone(),
                    op: op.to_string(),
                    a: a.to_string(),
                    b: b.to_string(),
                    max_abs_err: unanimous_error.then_some(0.0),
                    tol,
                    status: if unanimous_error { Status::Pass } else { Status::Fail },
                    error: Some(if unanimous_error {
                        describe(ra).to_string()
                    } else {
                        format!("{}|{}", describe(ra), describe(rb))
                    }),
                },
            };
            out.push(rec);
        }
    }
    out
}

fn grad_case_id(g: &GradFn, seed: u64) -> String {
    let shape: Vec<String> = g.shape.iter().map(usize::to_string).collect();
    case_id(&format!("grad:{}|[{}]|f64", g.name, shape.join(",")), seed)
}

/// Checks each AD executor against finite differences, then against each other.
pub fn run_gradient_case(g: &GradFn, index: usize, seed: u64, executors: &[&dyn Executor]) -> Vec<Record> {
    let id = grad_case_id(g, seed);
    let op = format!("grad:{}", g.name);
    let x = g.input(seed, index);
    let fd = fd_on_plain(g.f, &x, FD_STEP);
    let grads: Vec<Result<Dense>> = executors
        .iter()
        .map(|e| e.value_and_grad(g.f, &x).map(|(_, grad)| grad))
        .collect();

    let record = |a: &str, b: &str, tol: f64, status: Status, error: String| Record {
        case: id.clone(),
        op: op.clone(),
        a: a.to_string(),
        b: b.to_string(),
        max_abs_err: None,
        tol,
        status,
        error: Some(error),
    };

    let mut out = Vec::new();
    for (e, grad) in executors.iter().zip(&grads) {
        out.push(match (grad, &fd) {
            (_, Err(oracle)) => record(e.name(), FD_ORACLE, FD_TOL, Status::Error, oracle.kind().to_string()),
            (Ok(ad), Ok(fd)) => verdict(&id, &op, e.name(), FD_ORACLE, ad, fd, FD_TOL),
            (Err(err), Ok(_)) => record(e.name(), FD_ORACLE, FD_TOL, Status::Fail, err.kind().to_string()),
        });
    }
    for i in 0..executors.len() {
        for j in i + 1..executors.len() {
            let (a, b) = (executors[i].name(), executors[j].name());
            out.push(match (&grads[i], &grads[j]) {
                (Ok(x), Ok(y)) => verdict(&id, &op, a, b, x, y, AD_PAIR_TOL),
                (ra, rb) => record(
                    a,
                    b,
                    AD_PAIR_TOL,
                    Status::Fail,
                    format!("{}|{}", describe(ra), describe(rb)),
                ),
            });
        }
    }
    out
}

/// `executors` that can differentiate, in the given order.
fn autodiff_only(executors: &[Box<dyn Executor>]) -> Vec<&dyn Executor> {
    executors.iter().filter(|e| e.has_autodiff()).map(|e| e.as_ref()).collect()
}

/// Runs the gradient corpus on the AD-capable `executors`. Always in f64:
/// finite differences are too coarse to say anything at f32 precision.
pub fn run_gradients(seed: u64, executors: &[Box<dyn Executor>], ops: Option<&[OpKind]>) -> Vec<Record> {
    let ad = autodiff_only(executors);
    if ad.is_empty() {
        return Vec::new();
    }
    corpus()
        .par_iter()
        .enumerate()
        .filter(|(_, g)| ops.is_none_or(|ops| g.ops.iter().any(|k| ops.contains(k))))
        .map(|(i, g)| run_gradient_case(g, i, seed, &ad))
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckError {
    TooFewExecutors(usize),
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::TooFewExecutors(n) => write!(f, "differential testing needs at least 2 backends, got {n}"),
        }
    }
}

impl std::error::Error for CheckError {}

pub struct CheckConfig {
    pub seed: u64,
    pub dtype: DType,
    pub executors: Vec<Box<dyn Executor>>,
    /// Restrict to these op kinds; `None` runs everything.
    pub ops: Option<Vec<OpKind>>,
    pub budget: ShapeBudget,
    pub gradients: bool,
}

impl CheckConfig {
    pub fn new(seed: u64, dtype: DType, executors: Vec<Box<dyn Executor>>) -> Self {
        CheckConfig {
            seed,
            dtype,
            executors,
            ops: None,
            budget: ShapeBudget::default(),
            gradients: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub seed: u64,
    pub records: Vec<Record>,
    /// Distinct differential cases that produced records.
    pub cases: usize,
}

impl Report {
    pub fn summary(&self) -> Summary {
        Summary::of(&self.records, self.seed)
    }

    pub fn write_jsonl<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        crate::report::emit_report(&self.records, self.seed, out)
    }
}

/// Generates cases, runs them differentially and through the gradient
/// suite, and returns every record sorted by case id.
pub fn run_check(config: &CheckConfig) -> std::result::Result<Report, CheckError> {
    if config.executors.len() < 2 {
        return Err(CheckError::TooFewExecutors(config.executors.len()));
    }
    let tol = default_tol(config.dtype);
    let cases: Vec<Case> = generate_cases(config.seed, config.dtype, config.budget)
        .into_iter()
        .filter(|c| config.ops.as_ref().is_none_or(|ops| ops.contains(&c.op.kind)))
        .collect();

    let mut groups: Vec<Vec<Record>> = cases
        .par_iter()
        .map(|c| run_differential(c, &config.executors, tol))
        .collect();
    if config.gradients {
        let grads = run_gradients(config.seed, &config.executors, config.ops.as_deref());
        let mut by_case: Vec<Vec<Record>> = Vec::new();
        for r in grads {
            match by_case.last_mut() {
                Some(g) if g[0].case == r.case => g.push(r),
                _ => by_case.push(vec![r]),
            }
        }
        groups.extend(by_case);
    }
    groups.sort_by(|a, b| a[0].case.cmp(&b[0].case));
    Ok(Report {
        seed: config.seed,
        records: groups.into_iter().flatten().collect(),
        cases: cases.len(),
    })
}

