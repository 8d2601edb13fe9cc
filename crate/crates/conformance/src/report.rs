//! Conformance records and their JSON Lines form.

use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

/// One verdict: `a` against `b` on one case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub case: String,
    pub op: String,
    pub a: String,
    pub b: String,
    /// `None` when the error is not finite (serialized as `null`).
    pub max_abs_err: Option<f64>,
    pub tol: f64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub summary: bool,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
    pub seed: u64,
}

impl Summary {
    pub fn of(records: &[Record], seed: u64) -> Self {
        let count = |s| records.iter().filter(|r| r.status == s).count();
        Summary {
            summary: true,
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            errored: count(Status::Error),
            seed,
        }
    }

    pub fn is_green(&self) -> bool {
        self.failed == 0 && self.errored == 0
    }
}

/// Writes one JSON object per record, then the summary line.
pub fn emit_report<W: Write>(records: &[Record], seed: u64, mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, &Summary::of(records, seed))?;
    out.write_all(b"\n")?;
    out.flush()
}
