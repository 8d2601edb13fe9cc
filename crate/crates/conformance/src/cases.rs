//! Deterministic conformance case generation.

use std::collections::HashSet;

use sha2::{Digest, Sha256};
use tensorbridge::{DType, Dense, OpDescriptor, OpKind, Shape};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeBudget {
    pub max_rank: usize,
    pub max_extent: usize,
}

impl Default for ShapeBudget {
    fn default() -> Self {
        ShapeBudget {
            max_rank: 3,
            max_extent: 8,
        }
    }
}

/// How an input's raw draw is conditioned before use.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Any,
    /// `|x|`, for ops like `log` whose interesting domain is positive.
    Positive,
    /// 0 or 1, for `where` conditions.
    Mask,
    /// Fixed values, for edge cases.
    Exact(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub shape: Shape,
    pub domain: Domain,
}

impl InputSpec {
    fn new(shape: impl Into<Shape>, domain: Domain) -> Self {
        InputSpec {
            shape: shape.into(),
            domain,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub id: String,
    pub index: usize,
    pub op: OpDescriptor,
    pub dtype: DType,
    pub specs: Vec<InputSpec>,
    pub inputs: Vec<Dense>,
}

impl Case {
    pub fn description(&self) -> String {
        describe(&self.op, &self.specs, self.dtype)
    }
}

fn describe(op: &OpDescriptor, specs: &[InputSpec], dtype: DType) -> String {
    let shapes: Vec<String> = specs.iter().map(|s| s.shape.to_string()).collect();
    let mut d = format!("{op}|{}|{dtype}", shapes.join(";"));
    for s in specs {
        if let Domain::Exact(v) = &s.domain {
            d.push_str(&format!("|{v:?}"));
        }
    }
    d
}

/// First 8 bytes of SHA-256 over `description|seed`, as 16 hex digits.
pub fn case_id(description: &str, seed: u64) -> String {
    let digest = Sha256::digest(format!("{description}|{seed}").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn draw(rng: &mut SplitMix64, spec: &InputSpec, dtype: DType) -> Dense {
    let n = spec.shape.numel();
    let values: Vec<f64> = match &spec.domain {
        Domain::Any => (0..n).map(|_| rng.next_input()).collect(),
        Domain::Positive => (0..n).map(|_| rng.next_input().abs()).collect(),
        Domain::Mask => (0..n).map(|_| (rng.next_f64() < 0.5) as u8 as f64).collect(),
        Domain::Exact(v) => v.clone(),
    };
    Dense::from_f64(spec.shape.clone(), &values, dtype).expect("input shape matches values")
}

/// The shapes used for rank `r`: extents 2, 3, 4 (in that order), capped by the budget.
fn shape_of_rank(rank: usize, budget: &ShapeBudget) -> Shape {
    Shape::new(
        [2usize, 3, 4][..rank]
            .iter()
            .map(|&e| e.min(budget.max_extent))
            .collect::<Vec<_>>(),
    )
}

fn unary_domain(kind: OpKind) -> Domain {
    match kind {
        OpKind::Sqrt | OpKind::Log => Domain::Positive,
        _ => Domain::Any,
    }
}

fn lhs_domain(kind: OpKind) -> Domain {
    if kind == OpKind::Pow {
        Domain::Positive
    } else {
        Domain::Any
    }
}

struct Builder {
    seed: u64,
    dtype: DType,
    budget: ShapeBudget,
    cases: Vec<Case>,
    seen: HashSet<String>,
}

impl Builder {
    fn push(&mut self, op: OpDescriptor, specs: Vec<InputSpec>) {
        let fits = specs.iter().all(|s| {
            s.shape.rank() <= self.budget.max_rank && s.shape.dims().iter().all(|&e| e <= self.budget.max_extent)
        }) && op
            .shape
            .as_ref()
            .is_none_or(|s| s.rank() <= self.budget.max_rank);
        if !fits || !self.seen.insert(describe(&op, &specs, self.dtype)) {
            return;
        }
        let index = self.cases.len();
        let mut rng = SplitMix64::new(self.seed ^ index as u64);
        let inputs = specs.iter().map(|s| draw(&mut rng, s, self.dtype)).collect();
        let mut op = op;
        if op.kind == OpKind::FromValues {
            let n = op.shape.as_ref().map_or(0, Shape::numel);
            op.values = Some((0..n).map(|_| rng.next_input()).collect());
        }
        let desc = describe(&op, &specs, self.dtype);
        self.cases.push(Case {
            id: case_id(&desc, self.seed),
            index,
            op,
            dtype: self.dtype,
            specs,
            inputs,
        });
    }

    fn ranks(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.budget.max_rank
    }

    fn shape(&self, rank: usize) -> Shape {
        shape_of_rank(rank, &self.budget)
    }
}

/// Cases for every op kind at every rank the budget allows, plus
/// broadcasting variants, scalar operands, IEEE edge values and error cases.
pub fn generate_cases(seed: u64, dtype: DType, budget: ShapeBudget) -> Vec<Case> {
    let budget = ShapeBudget {
        max_rank: budget.max_rank.min(3),
        max_extent: budget.max_extent.clamp(1, 8),
    };
    let mut b = Builder {
        seed,
        dtype,
        budget,
        cases: Vec::new(),
        seen: HashSet::new(),
    };
    let dt = dtype;

    for kind in OpKind::ALL {
        let op = OpDescriptor::new(kind);
        match kind {
            OpKind::Square
            | OpKind::Sqrt
            | OpKind::Exp
            | OpKind::Log
            | OpKind::Abs
            | OpKind::Neg
            | OpKind::Sign
            | OpKind::Reciprocal
            | OpKind::Norm
            | OpKind::Flatten => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(op.clone(), vec![InputSpec::new(s, unary_domain(kind))]);
                }
            }
            OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::Div
            | OpKind::Pow
            | OpKind::Minimum
            | OpKind::Maximum => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(
                        op.clone(),
                        vec![InputSpec::new(s.clone(), lhs_domain(kind)), InputSpec::new(s.clone(), Domain::Any)],
                    );
                    b.push(
                        OpDescriptor::with_scalar(kind, 1.5),
                        vec![InputSpec::new(s, lhs_domain(kind))],
                    );
                }
                let broadcasts: [(&[usize], &[usize]); 4] =
                    [(&[2, 3], &[3]), (&[2, 1], &[1, 3]), (&[3], &[]), (&[2, 1, 4], &[3, 1])];
                for (x, y) in broadcasts {
                    b.push(
                        op.clone(),
                        vec![InputSpec::new(x, lhs_domain(kind)), InputSpec::new(y, Domain::Any)],
                    );
                }
                b.push(op.clone(), vec![InputSpec::new([2, 3], Domain::Any), InputSpec::new([4], Domain::Any)]);
            }
            OpKind::Sum | OpKind::Mean | OpKind::Prod | OpKind::Min | OpKind::Max => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(OpDescriptor::reduce(kind, None, false), vec![InputSpec::new(s.clone(), Domain::Any)]);
                    if r > 0 {
                        b.push(
                            OpDescriptor::reduce(kind, Some(vec![0]), false),
                            vec![InputSpec::new(s.clone(), Domain::Any)],
                        );
                        b.push(
                            OpDescriptor::reduce(kind, Some(vec![r - 1]), true),
                            vec![InputSpec::new(s, Domain::Any)],
                        );
                    }
                }
                // empty input: sum/mean/prod have identities, min/max do not
                b.push(OpDescriptor::reduce(kind, None, false), vec![InputSpec::new([0], Domain::Any)]);
                b.push(OpDescriptor::reduce(kind, Some(vec![3]), false), vec![InputSpec::new([2, 3], Domain::Any)]);
            }
            OpKind::Argmax | OpKind::Argmin => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(OpDescriptor::with_axis(kind, r.saturating_sub(1)), vec![InputSpec::new(s, Domain::Any)]);
                }
                b.push(OpDescriptor::with_axis(kind, 0), vec![InputSpec::new([3, 2], Domain::Any)]);
            }
            OpKind::Reshape => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    let n = s.numel();
                    b.push(OpDescriptor::reshape([n]), vec![InputSpec::new(s.clone(), Domain::Any)]);
                    b.push(OpDescriptor::reshape([n, 1]), vec![InputSpec::new(s, Domain::Any)]);
                }
                b.push(OpDescriptor::reshape([4]), vec![InputSpec::new([2, 3], Domain::Any)]);
            }
            OpKind::Transpose => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(op.clone(), vec![InputSpec::new(s, Domain::Any)]);
                }
            }
            OpKind::ExpandDims => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(OpDescriptor::with_axis(kind, 0), vec![InputSpec::new(s.clone(), Domain::Any)]);
                    b.push(OpDescriptor::with_axis(kind, r), vec![InputSpec::new(s.clone(), Domain::Any)]);
                    b.push(OpDescriptor::with_axis(kind, r + 1), vec![InputSpec::new(s, Domain::Any)]);
                }
            }
            OpKind::Squeeze => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(OpDescriptor::squeeze(None), vec![InputSpec::new(s, Domain::Any)]);
                }
                b.push(OpDescriptor::squeeze(None), vec![InputSpec::new([1, 3, 1], Domain::Any)]);
                b.push(OpDescriptor::squeeze(Some(2)), vec![InputSpec::new([1, 3, 1], Domain::Any)]);
                b.push(OpDescriptor::squeeze(Some(1)), vec![InputSpec::new([1, 3, 1], Domain::Any)]);
            }
            OpKind::Clip => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(OpDescriptor::clip(-0.5, 0.5), vec![InputSpec::new(s, Domain::Any)]);
                }
            }
            OpKind::Where => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    b.push(
                        op.clone(),
                        vec![
                            InputSpec::new(s.clone(), Domain::Mask),
                            InputSpec::new(s.clone(), Domain::Any),
                            InputSpec::new(s, Domain::Any),
                        ],
                    );
                }
                b.push(
                    op.clone(),
                    vec![
                        InputSpec::new([2, 1], Domain::Mask),
                        InputSpec::new([3], Domain::Any),
                        InputSpec::new([], Domain::Any),
                    ],
                );
            }
            OpKind::Zeros | OpKind::Ones | OpKind::Full | OpKind::FromValues => {
                for r in b.ranks() {
                    let s = b.shape(r);
                    let op = match kind {
                        OpKind::Zeros => OpDescriptor::zeros(s, dt),
                        OpKind::Ones => OpDescriptor::ones(s, dt),
                        OpKind::Full => OpDescriptor::full(s, -0.75, dt),
                        _ => OpDescriptor::from_values(Vec::new(), s, dt),
                    };
                    b.push(op, vec![]);
                }
            }
            OpKind::Arange => {
                for r in b.ranks() {
                    let n = b.shape(r).numel();
                    b.push(OpDescriptor::arange(n, dt), vec![]);
                }
                b.push(OpDescriptor::arange(0, dt), vec![]);
            }
        }
    }

    // IEEE edge values
    let exact = |v: f64| InputSpec::new([], Domain::Exact(vec![v]));
    for (x, y) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 0.0)] {
        b.push(OpDescriptor::new(OpKind::Div), vec![exact(x), exact(y)]);
    }
    b.push(OpDescriptor::new(OpKind::Sqrt), vec![exact(-1.0)]);
    b.push(OpDescriptor::new(OpKind::Log), vec![exact(0.0)]);
    b.push(OpDescriptor::new(OpKind::Log), vec![exact(-1.0)]);
    b.push(OpDescriptor::new(OpKind::Reciprocal), vec![exact(0.0)]);
    b.push(OpDescriptor::new(OpKind::Maximum), vec![exact(f64::NAN), exact(1.0)]);

    b.cases
}
