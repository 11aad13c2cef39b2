//! Thomas algorithm for complex tridiagonal systems.
//!
//! The factorization is computed once and reused for every right-hand side,
//! which is the access pattern of a fixed-step Crank–Nicolson march.

use num_complex::Complex64;

use crate::error::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-300;

/// LU factors of a tridiagonal matrix, without pivoting.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` and `upper[i]` multiplies
/// `x[i+1]`; `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct ThomasFactorization {
    lower: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
    upper_scaled: Vec<Complex64>,
}

impl ThomasFactorization {
    pub fn new(lower: &[Complex64], diag: &[Complex64], upper: &[Complex64]) -> Result<Self> {
        let n = diag.len();
        assert!(n >= 1 && lower.len() == n && upper.len() == n, "band lengths must match");
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        let mut upper_scaled = vec![Complex64::new(0.0, 0.0); n];
        let mut prev = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let pivot = if i == 0 { diag[0] } else { diag[i] - lower[i] * prev };
            if !(pivot.norm() > PIVOT_FLOOR) || !pivot.re.is_finite() || !pivot.im.is_finite() {
                return Err(Error::SingularSolve { row: i });
            }
            let inv = pivot.inv();
            inv_pivot[i] = inv;
            prev = if i + 1 < n { upper[i] * inv } else { Complex64::new(0.0, 0.0) };
            upper_scaled[i] = prev;
        }
        Ok(Self {
            lower: lower.to_vec(),
            inv_pivot,
            upper_scaled,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_scaled[i] * next;
        }
    }
}

/// One-shot tridiagonal solve.
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let f = ThomasFactorization::new(lower, diag, upper)?;
    let mut x = rhs.to_vec();
    f.solve_in_place(&mut x);
    Ok(x)
}
