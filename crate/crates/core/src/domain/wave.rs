use num_complex::Complex64;

use super::grid::{PhysicalConstants, SpatialGrid};
use crate::error::{invalid, Error, Result};

/// Complex amplitudes sampled on the nodes of a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    /// Normalized Gaussian packet `exp(-(x-x0)²/4w² + i k0 x)`; `|ψ|²` has
    /// standard deviation `width` and the mean momentum is `ħ k0`.
    pub fn gaussian_packet(grid: SpatialGrid, center: f64, width: f64, wavenumber: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid("width", "must be positive"));
        }
        let psi = Self::from_fn(grid, |x| {
            let u = (x - center) / width;
            Complex64::from_polar((-0.25 * u * u).exp(), wavenumber * x)
        })?;
        psi.normalized()
    }

    pub(crate) fn from_parts_unchecked(grid: SpatialGrid, values: Vec<Complex64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `|ψ_i|²`
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn squared_norm(&self) -> f64 {
        squared_norm(self)
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.squared_norm();
        if !(n2 > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let s = n2.sqrt().recip();
        self.values.iter_mut().for_each(|v| *v *= s);
        Ok(self)
    }

    /// Trapezoidal inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        let g = &self.grid;
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| a.conj() * b * g.trapezoid_weight(i))
            .sum::<Complex64>()
            * g.dx()
    }

    /// `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`
    pub fn fidelity(&self, other: &WaveFunction) -> f64 {
        self.inner(other).norm_sqr() / (self.squared_norm() * other.squared_norm())
    }

    /// Zero-pads the state onto a grid that extends this one to the right.
    pub fn padded_to(&self, grid: SpatialGrid) -> Result<Self> {
        if grid.len() < self.len() || (grid.dx() - self.grid.dx()).abs() > 1e-12 * grid.dx() {
            return Err(Error::InvalidGrid("target grid does not extend the source grid".into()));
        }
        let mut values = self.values.clone();
        values.resize(grid.len(), Complex64::new(0.0, 0.0));
        Ok(Self { grid, values })
    }
}

/// `Σ w_i |ψ_i|² dx` with trapezoidal weights `(½, 1, …, 1, ½)`.
pub fn squared_norm(psi: &WaveFunction) -> f64 {
    let v = &psi.values;
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().map(|z| z.norm_sqr()).sum();
    (inner + 0.5 * (v[0].norm_sqr() + v[n - 1].norm_sqr())) * psi.grid.dx()
}

/// Probability current `(ħ/m) Im(ψ* ∂ψ)`, central differences inside and
/// one-sided second-order differences at the two endpoints. Positive values
/// flow toward `+x`.
pub fn current(psi: &WaveFunction, consts: &PhysicalConstants) -> Vec<f64> {
    let v = &psi.values;
    let n = v.len();
    let h = psi.grid.dx();
    let scale = consts.hbar_over_mass();
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i + 1 == n {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            };
            scale * (v[i].conj() * d).im
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane_wave(k: f64) -> WaveFunction {
        let g = SpatialGrid::new(0.0, 10.0, 2001).unwrap();
        WaveFunction::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap()
    }

    #[test]
    fn constant_state_has_unit_norm_on_unit_interval() {
        for n in [3, 4, 17, 1000] {
            let g = SpatialGrid::new(0.0, 1.0, n).unwrap();
            let psi = WaveFunction::from_fn(g, |_| Complex64::new(1.0, 0.0)).unwrap();
            assert!((psi.squared_norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_has_zero_norm() {
        let g = SpatialGrid::new(0.0, 1.0, 50).unwrap();
        assert_eq!(WaveFunction::zeros(g).squared_norm(), 0.0);
        assert_eq!(WaveFunction::zeros(g).normalized(), Err(Error::ZeroNorm));
    }

    #[test]
    fn analytically_normalized_gaussian() {
        // (2πw²)^{-1/4} exp(-(x-x0)²/4w²) has unit L² norm.
        let g = SpatialGrid::new(-20.0, 20.0, 4001).unwrap();
        let w: f64 = 1.3;
        let c = (2.0 * std::f64::consts::PI * w * w).powf(-0.25);
        let psi = WaveFunction::from_fn(g, |x| {
            Complex64::from_polar(c * (-(x - 0.4) * (x - 0.4) / (4.0 * w * w)).exp(), 2.0 * x)
        })
        .unwrap();
        assert!((psi.squared_norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn trapezoid_norm_converges_second_order() {
        // ψ = x on [0,1], ‖ψ‖² = 1/3.
        let errs: Vec<f64> = [11, 21, 41, 81]
            .iter()
            .map(|&n| {
                let g = SpatialGrid::new(0.0, 1.0, n).unwrap();
                let psi = WaveFunction::from_fn(g, |x| Complex64::new(x, 0.0)).unwrap();
                (psi.squared_norm() - 1.0 / 3.0).abs()
            })
            .collect();
        for pair in errs.windows(2) {
            let rate = (pair[0] / pair[1]).log2();
            assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
        }
    }

    #[test]
    fn plane_wave_current() {
        let consts = PhysicalConstants::new(1.0, 2.0).unwrap();
        let k = 1.7;
        for sign in [1.0, -1.0] {
            let psi = plane_wave(sign * k);
            let j = current(&psi, &consts);
            let h = psi.grid().dx();
            // Central difference of e^{ikx} gives sin(k h)/h exactly.
            let discrete = sign * (k * h).sin() / h / consts.mass;
            for &ji in &j[1..j.len() - 1] {
                assert!((ji - discrete).abs() < 1e-12);
                assert!((ji - sign * k / consts.mass).abs() < k * k * k * h * h);
            }
        }
    }

    #[test]
    fn real_state_carries_no_current() {
        let g = SpatialGrid::new(-5.0, 5.0, 301).unwrap();
        let psi = WaveFunction::from_fn(g, |x| Complex64::new((-x * x).exp() * (1.0 + x), 0.0)).unwrap();
        assert!(current(&psi, &PhysicalConstants::default()).iter().all(|&j| j == 0.0));
    }

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        let g = SpatialGrid::new(0.0, 1.0, 4).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 4];
        assert!(WaveFunction::new(g, v[..3].to_vec()).is_err());
        v[2] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(WaveFunction::new(g, v), Err(Error::NonFinite(2)));
    }

    proptest! {
        #[test]
        fn current_is_phase_invariant(theta in -6.3f64..6.3, k in -4.0f64..4.0, x0 in -2.0f64..2.0) {
            let g = SpatialGrid::new(-8.0, 8.0, 401).unwrap();
            let psi = WaveFunction::gaussian_packet(g, x0, 1.0, k).unwrap();
            let phase = Complex64::from_polar(1.0, theta);
            let rotated = WaveFunction::new(g, psi.values().iter().map(|v| v * phase).collect()).unwrap();
            let consts = PhysicalConstants::default();
            let a = current(&psi, &consts);
            let b = current(&rotated, &consts);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
