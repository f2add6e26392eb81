//! Numerical model of martingales over finite-dimensional von Neumann
//! algebras with faithful states: BMO / Hardy / conditioned norms, the
//! John-Nirenberg equivalence, and the large-deviation projection
//! inequality, all at desk scale.
//!
//! The carrier for every operator is a dense complex matrix. A [`algebra::State`]
//! is a full-rank density; a [`algebra::Filtration`] is a validated chain of
//! *-subalgebras with state-preserving conditional expectations. Martingales,
//! their norms, and the theorem harnesses build on those two.

pub mod algebra;
pub mod ascent;
pub mod cli;
pub mod error;
pub mod interval;
pub mod linalg;
pub mod martingale;
pub mod norms;
pub mod report;
pub mod verify;

pub(crate) mod randmat;

pub use error::{NcError, Result};
