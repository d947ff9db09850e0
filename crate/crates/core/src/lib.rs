// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod infdet;
pub mod kernels;
pub mod operators;
pub mod pickrell;
pub mod quadrature;
pub mod sampler;
pub mod specfun;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use operators::{DiscretizedOperator, ProjectionBasis};
pub use quadrature::{Grading, Interval, NodeMask, Quadrature};
pub use sampler::{Configuration, SeededRng};
