use super::grid::SpatialGrid;
use crate::error::{invalid, Result};

/// 1D Gaussian density with mean 0 and standard deviation `sigma`.
#[inline]
pub fn gaussian_density(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Discrete Gaussian smoothing kernel on a uniform grid, truncated at `8σ`.
///
/// Taps are rescaled so that they sum to one on the infinite lattice. For
/// `σ ≫ dx` the rescaling factor is 1 to machine precision; for `σ ≪ dx`
/// the kernel degenerates to the identity.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    taps: Vec<f64>,
    dx: f64,
}

impl GaussianKernel {
    pub fn new(grid: &SpatialGrid, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        let dx = grid.dx();
        let reach = ((8.0 * sigma / dx).floor() as usize).min(grid.len() - 1);
        let mut taps: Vec<f64> = (0..=reach)
            .map(|m| gaussian_density(m as f64 * dx, sigma) * dx)
            .collect();
        let lattice_mass = taps[0] + 2.0 * taps[1..].iter().sum::<f64>();
        taps.iter_mut().for_each(|t| *t /= lattice_mass);
        Ok(Self { taps, dx })
    }

    /// Weight of the tap `m` cells from the center; zero beyond the reach.
    #[inline]
    pub fn tap(&self, m: usize) -> f64 {
        self.taps.get(m).copied().unwrap_or(0.0)
    }

    /// Number of taps on each side of the center.
    pub fn reach(&self) -> usize {
        self.taps.len() - 1
    }

    /// `(g ∗ f)` evaluated at node `i`, trapezoidal in the integration variable.
    #[inline]
    pub fn apply_at(&self, grid: &SpatialGrid, f: &[f64], i: usize) -> f64 {
        let n = f.len();
        let lo = i.saturating_sub(self.reach());
        let hi = (i + self.reach()).min(n - 1);
        let mut acc = 0.0;
        for j in lo..=hi {
            acc += self.taps[i.abs_diff(j)] * grid.trapezoid_weight(j) * f[j];
        }
        acc
    }

    /// `(g ∗ f)` at every node. Scatters from the nonzero samples of `f`.
    pub fn apply(&self, grid: &SpatialGrid, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let mut out = vec![0.0; n];
        for (j, &fj) in f.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let src = grid.trapezoid_weight(j) * fj;
            let lo = j.saturating_sub(self.reach());
            let hi = (j + self.reach()).min(n - 1);
            for (i, o) in out[lo..=hi].iter_mut().enumerate() {
                *o += self.taps[(lo + i).abs_diff(j)] * src;
            }
        }
        out
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }
}

/// `g ∗ f` on the grid by direct quadrature.
pub fn gaussian_convolve(grid: &SpatialGrid, f: &[f64], sigma: f64) -> Result<Vec<f64>> {
    Ok(GaussianKernel::new(grid, sigma)?.apply(grid, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_is_preserved_in_the_interior() {
        let g = SpatialGrid::new(-10.0, 10.0, 801).unwrap();
        let f = vec![2.5; g.len()];
        let out = gaussian_convolve(&g, &f, 0.3).unwrap();
        let reach = (8.0 * 0.3 / g.dx()) as usize;
        for &v in &out[reach + 1..g.len() - reach - 1] {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn spike_reproduces_the_kernel() {
        let g = SpatialGrid::new(-5.0, 5.0, 1001).unwrap();
        let i0 = 400;
        let mut f = vec![0.0; g.len()];
        f[i0] = 1.0 / g.dx();
        let sigma = 0.2;
        let out = gaussian_convolve(&g, &f, sigma).unwrap();
        for (i, v) in out.iter().enumerate() {
            let expect = gaussian_density(g.node(i) - g.node(i0), sigma);
            assert!((v - expect).abs() < 1e-10 * (1.0 + expect));
        }
    }

    #[test]
    fn narrow_kernel_is_the_identity() {
        let g = SpatialGrid::new(0.0, 1.0, 101).unwrap();
        let f = g.sample(|x| (3.0 * x).sin().abs());
        let out = gaussian_convolve(&g, &f, 1e-4 * g.dx()).unwrap();
        for i in 1..g.len() - 1 {
            assert!((out[i] - f[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let g = SpatialGrid::new(0.0, 1.0, 11).unwrap();
        assert!(gaussian_convolve(&g, &[0.0; 11], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn mass_and_sign_are_preserved(
            amps in proptest::collection::vec(0.0f64..3.0, 5),
            sigma in 0.05f64..0.5,
        ) {
            let g = SpatialGrid::new(-10.0, 10.0, 1001).unwrap();
            // compactly supported bumps inside [-4, 4], far from the edges
            let f = g.sample(|x| {
                amps.iter().enumerate().map(|(k, a)| {
                    let c = -4.0 + 2.0 * k as f64;
                    let u = (x - c).abs();
                    if u < 1.0 { a * (1.0 - u * u).powi(2) } else { 0.0 }
                }).sum()
            });
            let out = gaussian_convolve(&g, &f, sigma).unwrap();
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            let before = g.integrate(&f);
            prop_assert!((g.integrate(&out) - before).abs() < 1e-10 * (1.0 + before));
        }
    }
}
