//! Stationary analysis of a single-server queue fed by two Poisson streams,
//! where blocked jobs of each stream wait in their own orbit and retry at a
//! constant rate.
//!
//! The analytic path ([`bvp`], [`measures`]) solves the functional equation
//! of the generating functions as a boundary value problem on a circle. The
//! [`oracle`] solves a truncated version of the chain directly and serves as
//! an independent check.

pub mod bvp;
pub mod error;
pub mod kernel;
pub mod measures;
pub mod model;
pub mod oracle;

pub use bvp::{BvpSolution, ContourSpec};
pub use error::{Error, Result};
pub use measures::{compute, MeasureOptions, PerformanceMeasures};
pub use model::{check_stability, derive, normalize_orientation, DerivedParams, StabilityReport, SystemParams, Verdict};
pub use oracle::{solve_stationary, StationarySolution, TruncationSpec};
