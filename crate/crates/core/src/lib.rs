//! Numerical models for the time and place at which a quantum particle is
//! detected at the boundary of a region.
//!
//! Four models are implemented side by side so they can be checked against
//! each other:
//!
//! * [`abr`]: Schrödinger evolution with the absorbing boundary condition
//!   `n·∇ψ = iκψ`; detections are read off the outward boundary current.
//! * [`grw`]: the GRW collapse process, with a constant rate or a
//!   position-dependent rate `λ(x)`, simulated by Monte Carlo.
//! * [`soft`]: soft detectors modelled by the imaginary potential `-iħλ(x)/2`.
//! * [`limit`]: thin detector layers with λL held at `ħκ/m`, which converge
//!   to the absorbing boundary as `L → 0`.
//!
//! [`cli_io`] reads experiment files and writes reproducible CSV/JSON
//! results; the `abr-lab` binary wraps it.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abr;
pub mod cli_io;
pub mod domain;
pub mod error;
pub mod grw;
pub mod limit;
pub mod propagator;
pub mod soft;
pub mod tridiagonal;

pub use domain::{
    current, gaussian_convolve, squared_norm, DetectionDistribution, DetectionOutcome, DetectorProfile,
    PhysicalConstants, Side, SpatialGrid, WaveFunction,
};
pub use error::{Error, Result};
pub use propagator::{BoundaryCondition, Boundaries, PropagatorConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/absorbing-boundary.md")]
    mod absorbing_boundary {}
    #[doc = include_str!("../../../book/src/grw.md")]
    mod grw {}
    #[doc = include_str!("../../../book/src/soft-detectors.md")]
    mod soft_detectors {}
    #[doc = include_str!("../../../book/src/layer-limit.md")]
    mod layer_limit {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
