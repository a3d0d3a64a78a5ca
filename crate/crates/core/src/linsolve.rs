//! Linear solver for the per-step implicit systems.
//!
//! Row layout on the `cells + 1` unknowns:
//!   interior `i`:  `u_i - alpha * (A u)_i = rhs_i` (flux stencil),
//!   boundary:      `beta * (B u) + iota * u = rhs` with the second-order
//!                  one-sided `B` stencil, which reaches two nodes inward.
//! The two inward reaches are eliminated against the adjacent interior rows
//! once (exact Gaussian elimination), leaving a tridiagonal system solved by
//! the Thomas algorithm with precomputed factors.

use crate::error::{Error, Result};
use crate::pde_ops::Coefficients;

#[derive(Debug, Clone)]
pub(crate) struct RobinSystem {
    n: usize,
    sub: Vec<f64>,
    cp: Vec<f64>,        // forward-eliminated upper diagonal
    inv_denom: Vec<f64>, // reciprocal pivots
    f0: f64,             // rhs fold factors from the corner elimination
    fm: f64,
}

impl RobinSystem {
    pub fn new(c: &Coefficients, alpha: f64, beta: f64, iota: f64) -> Result<Self> {
        let g = c.grid();
        let n = g.len();
        let dx = g.dx();
        let dx2 = dx * dx;
        let a = c.a.values();

        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 1..n - 1 {
            let am = 0.5 * (a[i] + a[i - 1]);
            let ap = 0.5 * (a[i] + a[i + 1]);
            sub[i] = -alpha * am / dx2;
            diag[i] = 1.0 + alpha * (am + ap) / dx2;
            sup[i] = -alpha * ap / dx2;
        }

        let a00 = beta * (-3.0 * c.b1_left / (2.0 * dx) + c.b0_left) + iota;
        let a01 = beta * (2.0 * c.b1_left / dx);
        let a02 = beta * (-c.b1_left / (2.0 * dx));
        let amm = beta * (3.0 * c.b1_right / (2.0 * dx) + c.b0_right) + iota;
        let am1 = beta * (-2.0 * c.b1_right / dx);
        let am2 = beta * (c.b1_right / (2.0 * dx));

        if sup[1] == 0.0 || sub[n - 2] == 0.0 {
            return Err(Error::LinearSolve("degenerate interior row".into()));
        }
        let f0 = a02 / sup[1];
        diag[0] = a00 - f0 * sub[1];
        sup[0] = a01 - f0 * diag[1];
        let fm = am2 / sub[n - 2];
        diag[n - 1] = amm - fm * sup[n - 2];
        sub[n - 1] = am1 - fm * diag[n - 2];

        // Thomas prefactorization
        let mut cp = vec![0.0; n - 1];
        let mut inv_denom = vec![0.0; n];
        if diag[0] == 0.0 {
            return Err(Error::LinearSolve("zero pivot in row 0".into()));
        }
        inv_denom[0] = 1.0 / diag[0];
        cp[0] = sup[0] * inv_denom[0];
        for i in 1..n {
            let denom = diag[i] - sub[i] * cp[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot in row {i}")));
            }
            inv_denom[i] = 1.0 / denom;
            if i < n - 1 {
                cp[i] = sup[i] * inv_denom[i];
            }
        }

        Ok(Self { n, sub, cp, inv_denom, f0, fm })
    }

    /// Solve in place; `rhs` holds the right-hand side on entry and the
    /// solution on return.
    pub fn solve(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.n);
        let n = self.n;
        rhs[0] -= self.f0 * rhs[1];
        rhs[n - 1] -= self.fm * rhs[n - 2];
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cp[i] * rhs[i + 1];
        }
    }
}
