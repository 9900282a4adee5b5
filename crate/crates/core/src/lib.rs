//! Numerical core for probing local identifiability in linear blind source
//! separation.
//!
//! The crate is `no_std` (with `alloc`). It covers small dense linear algebra
//! on the orthogonal group, seeded signal generation, second- and fourth-order
//! constraint statistics, the stacked Jacobian probe, Jacobi joint
//! diagonalization, and the per-trial computations behind the Monte Carlo
//! experiments. Scheduling, IO and the command line live in the `stabprobe`
//! crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod experiment;
pub mod linalg;
pub mod probe;
pub mod separation;
pub mod signal;
pub mod stats;

mod fmt;

pub use error::{Error, Result};
pub use fmt::format_f64;
pub use linalg::{Mat, SkewBasis};
pub use probe::{JacobianMode, JacobianReport, ObservationEvaluator};
pub use signal::{RngSeed, SignalBlock, SourceKind, SourceSpec};
pub use stats::{ConstraintSet, ConstraintTag, Family, Whitener};
