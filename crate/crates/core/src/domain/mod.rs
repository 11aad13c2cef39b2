//! Value types shared by every model: the spatial grid, wavefunctions,
//! detector configurations and detection records, plus the elementary
//! observables (norm, probability current, Gaussian smoothing).

mod detection;
mod grid;
mod kernel;
mod profile;
mod wave;

pub use detection::{DetectionDistribution, DetectionOutcome, Side};
pub use grid::{PhysicalConstants, SpatialGrid};
pub use kernel::{gaussian_convolve, gaussian_density, GaussianKernel};
pub use profile::DetectorProfile;
pub use wave::{current, squared_norm, WaveFunction};

/// Default tolerance for conservation checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
