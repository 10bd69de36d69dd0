//! Candidate-center collections for clustering with (1+eps) guarantees.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod collection;
pub mod covering;
pub mod error;
pub mod exec;
pub mod metric;
pub mod solve;
pub mod verify;
pub mod wspd;

pub use collection::{build_linear, build_quadratic, compute_params, CentersCollection, Params};
pub use covering::CoveringTemplate;
pub use error::{Error, Result};
pub use exec::Exec;
pub use metric::{NormSpec, PointSet};
