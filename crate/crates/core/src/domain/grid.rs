use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform 1D grid on `[x_min, x_max]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
            dx: (x_max - x_min) / (n_points - 1) as f64,
        })
    }

    /// Grid with the given spacing starting at `x_min`.
    pub fn with_spacing(x_min: f64, dx: f64, n_points: usize) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(invalid("dx", "must be positive"));
        }
        Self::new(x_min, x_min + dx * (n_points.max(1) - 1) as f64, n_points)
    }

    /// Smallest grid on `[x_min, x_max]` with at least `nodes_per_wavelength`
    /// nodes per de Broglie wavelength `2π/k_max`.
    pub fn resolving(x_min: f64, x_max: f64, k_max: f64, nodes_per_wavelength: usize) -> Result<Self> {
        if !(k_max > 0.0) {
            return Err(invalid("k_max", "must be positive"));
        }
        let dx_max = 2.0 * std::f64::consts::PI / k_max / nodes_per_wavelength as f64;
        let cells = ((x_max - x_min) / dx_max).ceil().max(2.0) as usize;
        Self::new(x_min, x_max, cells + 1)
    }

    /// The same spacing, extended by `extra` nodes past `x_max`.
    pub fn extend_right(&self, extra: usize) -> Self {
        let n_points = self.n_points + extra;
        Self {
            x_min: self.x_min,
            x_max: self.x_min + self.dx * (n_points - 1) as f64,
            n_points,
            dx: self.dx,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn last(&self) -> usize {
        self.n_points - 1
    }

    /// Position of node `i`; the last node is `x_max` exactly.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.node(i))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }

    /// Trapezoidal weight of node `i` (without the `dx` factor).
    #[inline]
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_points {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoidal integral of node samples.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_points);
        let n = f.len();
        let inner: f64 = f[1..n - 1].iter().sum();
        (inner + 0.5 * (f[0] + f[n - 1])) * self.dx
    }

    /// Integral over `[a, b]` of the piecewise-linear interpolant of `f`.
    pub fn integrate_interval(&self, f: &[f64], a: f64, b: f64) -> f64 {
        let a = a.max(self.x_min);
        let b = b.min(self.x_max);
        if b <= a {
            return 0.0;
        }
        let ia = self.cell_of(a);
        let ib = self.cell_of(b);
        let mut total = 0.0;
        for cell in ia..=ib {
            let x0 = self.node(cell);
            let lo = a.max(x0);
            let hi = b.min(self.node(cell + 1));
            if hi > lo {
                let slope = (f[cell + 1] - f[cell]) / self.dx;
                let at = |x: f64| f[cell] + slope * (x - x0);
                total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
            }
        }
        total
    }

    /// Index of the cell `[node(i), node(i+1)]` containing `x`, clamped.
    pub fn cell_of(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.dx).floor();
        (raw.max(0.0) as usize).min(self.n_points - 2)
    }

    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.dx).round();
        (raw.max(0.0) as usize).min(self.n_points - 1)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }
}

/// `ħ` and the particle mass; natural units by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(invalid("hbar", "must be strictly positive"));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(invalid("mass", "must be strictly positive"));
        }
        Ok(Self { hbar, mass })
    }

    /// `ħ/m`
    pub fn hbar_over_mass(&self) -> f64 {
        self.hbar / self.mass
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}
