//! Link-level simulation of millimetre-wave MIMO with lens antenna arrays.
//!
//! The crate covers the sinc-shaped lens array response, a sparse
//! multi-path channel generator, path division multiplexing transceivers
//! (orthogonal and general, with MRC/MMSE combining and path grouping), a
//! conventional planar-array benchmark and a Monte Carlo experiment harness.

#![allow(clippy::needless_range_loop)]

pub mod array_geometry;
pub mod benchmark_upa;
pub mod channel_model;
pub mod experiments;
pub mod numerics;
pub mod opdm;
pub mod path_grouping;
pub mod pdm;
pub mod selection;

pub use array_geometry::{ArrayResponse, ArraySide, LensArrayConfig, UpaConfig};
pub use benchmark_upa::OfdmConfig;
pub use channel_model::{AngleRule, ChannelStats, Path, PathSet, TappedChannel};
pub use experiments::{ExperimentConfig, ExperimentError, ResultRow, Scenario, Scheme};
pub use num_complex::Complex64;
pub use numerics::{ComplexMatrix, ComplexVector};
