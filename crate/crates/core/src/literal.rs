//! Tensor literals: nested JSON-style arrays such as `[[1,2],[3,4]]`.

use serde_json::Value;

use crate::dense::{Data, Dense};
use crate::error::{Error, Result};
use crate::shape::{DType, Shape};

/// Parses a literal into its shape and row-major values.
///
/// A bare number is a rank-0 tensor; `[]` has shape `[0]`.
pub fn parse(text: &str) -> Result<(Shape, Vec<f64>)> {
    let value: Value = serde_json::from_str(text.trim()).map_err(|e| Error::Parse(e.to_string()))?;
    let mut dims = Vec::new();
    probe_dims(&value, &mut dims);
    let mut out = Vec::new();
    collect(&value, &dims, 0, &mut out)?;
    Ok((Shape::new(dims), out))
}

pub fn parse_dense(text: &str, dtype: DType) -> Result<Dense> {
    let (shape, values) = parse(text)?;
    Dense::from_f64(shape, &values, dtype)
}

// Follows the first element at each level; `collect` then checks every
// other element agrees.
fn probe_dims(v: &Value, dims: &mut Vec<usize>) {
    if let Value::Array(items) = v {
        dims.push(items.len());
        if let Some(first) = items.first() {
            probe_dims(first, dims);
        }
    }
}

fn collect(v: &Value, dims: &[usize], depth: usize, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Number(n) if depth == dims.len() => {
            out.push(n.as_f64().ok_or_else(|| Error::Parse(format!("unrepresentable number {n}")))?);
            Ok(())
        }
        Value::Array(items) if depth < dims.len() && items.len() == dims[depth] => {
            items.iter().try_for_each(|item| collect(item, dims, depth + 1, out))
        }
        Value::Number(_) | Value::Array(_) => Err(Error::Parse("ragged nested array".into())),
        other => Err(Error::Parse(format!("expected a number or array, found {other}"))),
    }
}

/// Formats a tensor as a literal, using the shortest decimal that
/// round-trips in the tensor's dtype.
pub fn format(t: &Dense) -> String {
    let cells: Vec<String> = match t.data() {
        Data::F32(v) => v.iter().map(|x| x.to_string()).collect(),
        Data::F64(v) => v.iter().map(|x| x.to_string()).collect(),
    };
    let mut out = String::new();
    write_level(&mut out, t.shape().dims(), &cells);
    out
}

fn write_level(out: &mut String, dims: &[usize], cells: &[String]) {
    let Some((&n, rest)) = dims.split_first() else {
        out.push_str(&cells[0]);
        return;
    };
    let stride: usize = rest.iter().product();
    out.push('[');
    for i in 0..n {
        if i > 0 {
            out.push(',');
        }
        write_level(out, rest, &cells[i * stride..(i + 1) * stride]);
    }
    out.push(']');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested() {
        let (s, v) = parse("[[1, 2, 3], [4, 5, 6]]").unwrap();
        assert_eq!(s.dims(), &[2, 3]);
        assert_eq!(v, vec![1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn scalars_and_empty() {
        let (s, v) = parse("2.5").unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(v, vec![2.5]);
        let (s, v) = parse("[]").unwrap();
        assert_eq!(s.dims(), &[0]);
        assert!(v.is_empty());
    }

    #[test]
    fn rejects_ragged_and_garbage() {
        for bad in ["[[1,2],[3]]", "[1,[2]]", "[[1],2]", "[1,2", "\"x\"", "[true]", ""] {
            assert!(matches!(parse(bad), Err(Error::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn format_round_trips() {
        let t = parse_dense("[[1,2.5],[-3,0.1]]", DType::F64).unwrap();
        assert_eq!(format(&t), "[[1,2.5],[-3,0.1]]");
        assert_eq!(format(&Dense::scalar(14.0f64.sqrt(), DType::F64)), "3.7416573867739413");
        assert_eq!(format(&Dense::scalar(14.0f64.sqrt(), DType::F32)), "3.7416575");
        assert_eq!(format(&Dense::filled([0], 0.0, DType::F64)), "[]");
    }
}
