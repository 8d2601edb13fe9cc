//! One tensor interface over several independent backends.
//!
//! ```
//! use tensorbridge::{functions::from_values, BackendId, DType};
//!
//! let x = from_values(BackendId::Tape, &[1.0, 2.0, 3.0], [3], DType::F64)?;
//! let n = x.norm()?;
//! assert_eq!(n.item(), Some(14f64.sqrt()));
//!
//! let (v, g) = tensorbridge::value_and_grad(|t| t.square()?.sum(), &x)?;
//! assert_eq!(v.item(), Some(14.0));
//! assert_eq!(g.to_vec(), vec![2.0, 4.0, 6.0]);
//! # Ok::<(), tensorbridge::Error>(())
//! ```

pub mod autodiff;
pub mod backend;
pub mod dense;
pub mod error;
pub mod functions;
pub mod kernel;
pub mod literal;
pub mod op;
pub mod shape;
pub mod tensor;
pub mod vjp;

pub use autodiff::{
    value_and_grad, value_and_grad_fn, value_and_grad_with, value_aux_and_grad, value_aux_and_grad_fn,
    Detach,
};
pub use backend::{BackendId, NativeTensor};
pub use dense::Dense;
pub use error::{Error, Result};
pub use op::{OpDescriptor, OpKind};
pub use shape::{DType, Shape};
pub use tensor::{astensor, astensor_, astensor_any, astensors, astensors_, astensors_any, raw, AnyTensor, RestoreFn, TensorHandle, TensorKind};
pub use vjp::RuleTable;
