use super::grid::SpatialGrid;
use crate::error::{invalid, Error, Result};

/// Everything that defines a detector model on a grid: the real potential,
/// the local absorption/collapse rate `λ(x)`, the GRW collapse width `σ`
/// and the constant GRW rate `λ₀`.
///
/// Absorbing-boundary strengths `κ` live on the boundary conditions of the
/// propagator, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    potential: Vec<f64>,
    rate: Vec<f64>,
    sigma: f64,
    lambda0: f64,
}

impl DetectorProfile {
    /// No potential, no absorption, `σ = 5 dx`, `λ₀ = 0`.
    pub fn free(grid: &SpatialGrid) -> Self {
        Self {
            potential: vec![0.0; grid.len()],
            rate: vec![0.0; grid.len()],
            sigma: 5.0 * grid.dx(),
            lambda0: 0.0,
        }
    }

    pub fn new(potential: Vec<f64>, rate: Vec<f64>, sigma: f64, lambda0: f64) -> Result<Self> {
        if potential.len() != rate.len() {
            return Err(Error::LengthMismatch {
                expected: potential.len(),
                actual: rate.len(),
            });
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(invalid("potential", "must be finite"));
        }
        if rate.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("rate", "must be finite and nonnegative"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        if !(lambda0.is_finite() && lambda0 >= 0.0) {
            return Err(invalid("lambda0", "must be nonnegative"));
        }
        Ok(Self {
            potential,
            rate,
            sigma,
            lambda0,
        })
    }

    pub fn with_potential(self, potential: Vec<f64>) -> Result<Self> {
        Self::new(potential, self.rate, self.sigma, self.lambda0)
    }

    pub fn with_rate(self, rate: Vec<f64>) -> Result<Self> {
        Self::new(self.potential, rate, self.sigma, self.lambda0)
    }

    pub fn with_rate_fn(self, grid: &SpatialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_rate(grid.sample(f))
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.potential, self.rate, sigma, self.lambda0)
    }

    pub fn with_lambda0(self, lambda0: f64) -> Result<Self> {
        Self::new(self.potential, self.rate, self.sigma, lambda0)
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn rate(&self) -> &[f64] {
        &self.rate
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn len(&self) -> usize {
        self.rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rate.is_empty()
    }

    pub fn has_absorption(&self) -> bool {
        self.rate.iter().any(|&l| l > 0.0)
    }

    pub(crate) fn check_grid(&self, grid: &SpatialGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_fields() {
        let g = SpatialGrid::new(0.0, 1.0, 11).unwrap();
        let p = DetectorProfile::free(&g);
        assert!((p.sigma() - 0.5).abs() < 1e-15);
        assert!(p.clone().with_sigma(0.0).is_err());
        assert!(p.clone().with_lambda0(-1.0).is_err());
        assert!(p.clone().with_rate(vec![-1.0; 11]).is_err());
        assert!(p.clone().with_rate(vec![1.0; 10]).is_err());
        assert!(p.with_rate_fn(&g, |x| x).unwrap().has_absorption());
    }
}
