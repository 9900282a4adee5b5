//! Std companion to `stabprobe-core`: the parallel Monte Carlo harness,
//! run configuration, CSV/SVG artifacts and the oracle self-test behind
//! the `stabprobe` command.

pub mod config;
pub mod harness;
pub mod output;
pub mod selftest;
pub mod svg;
