//! Formal normal forms of p-adic analytic germs.
//!
//! Maps are truncated power series over ℚ with exact arithmetic; every
//! normal form is returned together with its conjugating map and certified
//! by an exact residual check. p-adic convergence is certified by explicit
//! integrality margins.

pub mod cli;
pub mod dyngroup;
pub mod error;
pub mod field;
mod linalg;
pub mod oned;
pub mod pdj;
pub mod pdulac;
pub mod series;

pub use error::{Error, Result};
pub use field::{NormValue, PrimeContext, Scalar, Valuation};
pub use series::{verify_conjugacy, FormalMap, MultiIndex, Residual, Series};
