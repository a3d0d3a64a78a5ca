//! Causal time convolution, its restriction/splitting algebra on aligned
//! grids, and the scalar second-kind step solve used by the kernel equation.
//!
//! `(h * f)(t) = integral of h(t-s) f(s) ds over [0, t]`, discretized with
//! trapezoid product quadrature: node 0 and node n carry weight 1/2, so the
//! rule is symmetric in `h` and `f` and additive over subintervals. The
//! latter is what makes the splitting identities below hold node-exactly.

use crate::error::{Error, Result};
use crate::grid::{TimeGrid, TimeSeries};

/// Convolution value at a single node from raw slices.
///
/// `out = dt * (h_0 f_n / 2 + sum_{k=1..n-1} h_k f_{n-k} + h_n f_0 / 2)`,
/// zero at `n = 0` (integral over an empty interval).
fn node_value(h: &[f64], f: &[f64], n: usize, dt: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.5 * (h[0] * f[n] + h[n] * f[0]);
    for k in 1..n {
        s += h[k] * f[n - k];
    }
    s * dt
}

/// Lagged middle part `dt * sum_{k=1..n-1} h_k x_{n-k}`, used by the marching
/// solvers that fold the two endpoint terms separately.
pub(crate) fn lag_mid(h: &[f64], x: &[f64], n: usize, dt: f64) -> f64 {
    let mut s = 0.0;
    for k in 1..n {
        s += h[k] * x[n - k];
    }
    s * dt
}

/// Causal trapezoid convolution of two series on the same grid.
pub fn convolve(h: &TimeSeries, f: &TimeSeries) -> Result<TimeSeries> {
    if !h.grid().compatible(&f.grid()) {
        return Err(Error::GridMismatch("convolve arguments on different grids".into()));
    }
    let dt = h.grid().dt();
    let hv = h.values();
    let fv = f.values();
    let values = (0..hv.len()).map(|n| node_value(hv, fv, n, dt)).collect();
    TimeSeries::new(h.grid(), values)
}

/// Single node of [`convolve`] without forming the whole series.
pub fn convolve_at(h: &TimeSeries, f: &TimeSeries, n: usize) -> Result<f64> {
    if !h.grid().compatible(&f.grid()) {
        return Err(Error::GridMismatch("convolve arguments on different grids".into()));
    }
    if n >= h.len() {
        return Err(Error::IndexOutOfRange { index: n, max: h.len() - 1 });
    }
    Ok(node_value(h.values(), f.values(), n, h.grid().dt()))
}

/// Split `h * z` at node `m` into its restriction to `[0, t_m]` and the
/// shifted tail on `[0, T - t_m]`.
///
/// `left[j] = (h*z)(t_j)` for `j <= m`. The tail is assembled from the three
/// pieces of the two-sided restriction algebra,
///
/// `right[n] = (h~0 * z~0)(t_m + t_n) + (h1(.+t_m) * z0)(t_n) + (h0 * z1(.+t_m))(t_n)`,
///
/// where subscripts 0/1 denote restriction to `[0, t_m]` / `[t_m, T]` and `~`
/// trivial extension by zero. The first piece is the trapezoid sum over the
/// window `[t_n, t_m]` (a jump node of a trivially extended factor enters
/// with half weight, which is the quadrature of the discontinuous product);
/// with that convention the sum reproduces the direct convolution exactly at
/// every node. Requires `T - t_m <= t_m` so the tail pieces stay inside the
/// restricted spans.
pub fn split_convolution(
    h: &TimeSeries,
    z: &TimeSeries,
    m: usize,
) -> Result<(TimeSeries, TimeSeries)> {
    if !h.grid().compatible(&z.grid()) {
        return Err(Error::GridMismatch("split arguments on different grids".into()));
    }
    let steps = h.grid().steps();
    if m < 2 || m >= steps {
        return Err(Error::SplitIndex { split: m, steps, reason: "need 2 <= m < steps" });
    }
    if steps - m > m {
        return Err(Error::SplitIndex { split: m, steps, reason: "tail longer than head" });
    }
    let dt = h.grid().dt();
    let hv = h.values();
    let zv = z.values();

    let left_grid = TimeGrid::new(dt * m as f64, m)?;
    let left: Vec<f64> = (0..=m).map(|j| node_value(hv, zv, j, dt)).collect();

    let tail = steps - m;
    let right_grid = TimeGrid::new(dt * tail as f64, tail)?;
    let mut right = Vec::with_capacity(tail + 1);
    for n in 0..=tail {
        // window piece over [t_n, t_m]
        let window = if n == m {
            0.0
        } else {
            let mut s = 0.5 * (hv[n] * zv[m] + hv[m] * zv[n]);
            for k in n + 1..m {
                s += hv[k] * zv[m + n - k];
            }
            s * dt
        };
        let head_tail = node_value(&hv[m..], zv, n, dt); // h1(.+t_m) * z0
        let tail_head = node_value(hv, &zv[m..], n, dt); // h0 * z1(.+t_m)
        right.push(window + head_tail + tail_head);
    }

    Ok((TimeSeries::new(left_grid, left)?, TimeSeries::new(right_grid, right)?))
}

/// Solve the scalar second-kind node equation `x = rhs - weight * a * x`,
/// i.e. `x = rhs / (1 + weight * a)`.
///
/// `a` is the zero-lag value of the convolved factor and `weight` the
/// trapezoid endpoint weight `dt/2`; a near-zero denominator means the step
/// size is too large relative to `|a|` and is reported as an error rather
/// than amplified.
pub fn volterra2_solve_node(a: f64, rhs: f64, weight: f64) -> Result<f64> {
    let denom = 1.0 + weight * a;
    if denom.abs() <= 1e-12 {
        return Err(Error::NearSingular { denom: denom.abs() });
    }
    Ok(rhs / denom)
}
