//! Finite computational models of presheaves over posets of abelian contexts,
//! unitary group actions on them, and the functors relating the two bases.

#![allow(clippy::needless_range_loop)]

pub mod contexts;
pub mod error;
pub mod lambda_site;
pub mod numerics;
pub mod presheaf;
pub mod quantum;
pub mod report;
pub mod scenario;
pub mod suites;
pub mod symmetry;

pub use error::{Error, Result};
