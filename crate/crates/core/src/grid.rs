//! Uniform time and space grids, sampled fields, and the discrete norms and
//! quadrature shared by every solver module.
//!
//! All integrals use the composite trapezoid rule (endpoint weights 1/2),
//! which keeps the spatial scheme and the time convolutions at a matching
//! second order and makes restriction/concatenation algebra exact on aligned
//! grids. The space domain is the unit interval; physical scaling is folded
//! into the coefficients.

use crate::error::{Error, Result};

/// Uniform grid on `[0, t_end]` with `steps` intervals, nodes `t_n = n*dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidGrid(format!("t_end must be positive, got {t_end}")));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 time steps, got {steps}")));
        }
        Ok(Self { t_end, steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Grids agree up to floating roundoff in `t_end`.
    pub fn compatible(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps
            && (self.t_end - other.t_end).abs() <= 1e-12 * self.t_end.abs().max(1.0)
    }
}

/// Uniform grid on `[0, 1]` with `cells` intervals, nodes `x_i = i*dx`.
/// The boundary index set is `{0, cells}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    cells: usize,
}

impl SpaceGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 cells, got {cells}")));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes, `cells + 1`.
    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
}

/// Scalar function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "time series has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|n| f(grid.node(n))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Keep every `stride`-th node; `steps` must divide evenly.
    pub fn restrict(&self, stride: usize) -> Result<TimeSeries> {
        if stride == 0 || !self.grid.steps.is_multiple_of(stride) {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} steps",
                self.grid.steps
            )));
        }
        let grid = TimeGrid::new(self.grid.t_end, self.grid.steps / stride)?;
        let values = self.values.iter().step_by(stride).copied().collect();
        TimeSeries::new(grid, values)
    }

    /// Restriction to the first `m` steps (nodes `0..=m`).
    pub fn prefix(&self, m: usize) -> Result<TimeSeries> {
        if m < 2 || m > self.grid.steps {
            return Err(Error::IndexOutOfRange { index: m, max: self.grid.steps });
        }
        let grid = TimeGrid::new(self.grid.dt() * m as f64, m)?;
        TimeSeries::new(grid, self.values[..=m].to_vec())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Scalar function sampled on a [`SpaceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceField {
    grid: SpaceGrid,
    values: Vec<f64>,
}

impl SpaceField {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "space field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpaceGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn left(&self) -> f64 {
        self.values[0]
    }

    pub fn right(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Pair of time series living on the two boundary points `x = 0` and `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    pub left: TimeSeries,
    pub right: TimeSeries,
}

impl BoundaryPair {
    pub fn new(left: TimeSeries, right: TimeSeries) -> Result<Self> {
        if !left.grid().compatible(&right.grid()) {
            return Err(Error::GridMismatch("boundary pair on different grids".into()));
        }
        Ok(Self { left, right })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { left: TimeSeries::zeros(grid), right: TimeSeries::zeros(grid) }
    }

    pub fn from_fns(grid: TimeGrid, l: impl FnMut(f64) -> f64, r: impl FnMut(f64) -> f64) -> Self {
        Self { left: TimeSeries::from_fn(grid, l), right: TimeSeries::from_fn(grid, r) }
    }

    pub fn grid(&self) -> TimeGrid {
        self.left.grid()
    }

    pub fn at(&self, n: usize) -> (f64, f64) {
        (self.left.values()[n], self.right.values()[n])
    }
}

/// Space-time field on the tensor grid; row `n` is the snapshot at `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    data: Vec<f64>, // row-major, (steps+1) x (cells+1)
}

impl SpaceTimeField {
    pub fn zeros(tgrid: TimeGrid, sgrid: SpaceGrid) -> Self {
        Self { tgrid, sgrid, data: vec![0.0; tgrid.len() * sgrid.len()] }
    }

    pub fn from_fn(tgrid: TimeGrid, sgrid: SpaceGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(tgrid.len() * sgrid.len());
        for n in 0..tgrid.len() {
            let t = tgrid.node(n);
            for i in 0..sgrid.len() {
                data.push(f(t, sgrid.node(i)));
            }
        }
        Self { tgrid, sgrid, data }
    }

    pub fn tgrid(&self) -> TimeGrid {
        self.tgrid
    }

    pub fn sgrid(&self) -> SpaceGrid {
        self.sgrid
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.sgrid.len();
        &self.data[n * w..(n + 1) * w]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        let w = self.sgrid.len();
        &mut self.data[n * w..(n + 1) * w]
    }

    pub fn row_field(&self, n: usize) -> SpaceField {
        SpaceField { grid: self.sgrid, values: self.row(n).to_vec() }
    }

    pub fn set_row(&mut self, n: usize, values: &[f64]) {
        self.row_mut(n).copy_from_slice(values);
    }

    pub fn trace_left(&self) -> TimeSeries {
        let values = (0..self.tgrid.len()).map(|n| self.row(n)[0]).collect();
        TimeSeries { grid: self.tgrid, values }
    }

    pub fn trace_right(&self) -> TimeSeries {
        let w = self.sgrid.len();
        let values = (0..self.tgrid.len()).map(|n| self.row(n)[w - 1]).collect();
        TimeSeries { grid: self.tgrid, values }
    }

    /// Keep every `tstride`-th row and `xstride`-th column.
    pub fn restrict(&self, tstride: usize, xstride: usize) -> Result<SpaceTimeField> {
        if tstride == 0 || !self.tgrid.steps.is_multiple_of(tstride) {
            return Err(Error::GridMismatch("time stride does not divide steps".into()));
        }
        if xstride == 0 || !self.sgrid.cells.is_multiple_of(xstride) {
            return Err(Error::GridMismatch("space stride does not divide cells".into()));
        }
        let tgrid = TimeGrid::new(self.tgrid.t_end, self.tgrid.steps / tstride)?;
        let sgrid = SpaceGrid::new(self.sgrid.cells / xstride)?;
        let mut out = SpaceTimeField::zeros(tgrid, sgrid);
        for n in 0..tgrid.len() {
            let src = self.row(n * tstride);
            let dst = out.row_mut(n);
            for i in 0..sgrid.len() {
                dst[i] = src[i * xstride];
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Trapezoid sum `sum_i w_i v_i * step` with endpoint weights 1/2.
pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.5 * (values[0] + values[n - 1]);
    for v in &values[1..n - 1] {
        s += v;
    }
    s * step
}

/// Trapezoid inner product of two node slices.
pub(crate) fn trapezoid_inner(a: &[f64], b: &[f64], step: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut s = 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
    for k in 1..n - 1 {
        s += a[k] * b[k];
    }
    s * step
}

/// Discrete `L^2(0,1)` norm of a space field.
pub fn l2_space(f: &SpaceField) -> f64 {
    trapezoid_inner(f.values(), f.values(), f.grid().dx()).max(0.0).sqrt()
}

/// Discrete `L^2(0,1)` inner product.
pub fn inner_space(f: &SpaceField, g: &SpaceField) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch("inner product on different space grids".into()));
    }
    Ok(trapezoid_inner(f.values(), g.values(), f.grid().dx()))
}

/// Discrete `L^2(0,T)` norm of a time series.
pub fn l2_time(f: &TimeSeries) -> f64 {
    trapezoid_inner(f.values(), f.values(), f.grid().dt()).max(0.0).sqrt()
}

/// Discrete `L^1(0,T)` norm of a time series.
pub fn l1_time(f: &TimeSeries) -> f64 {
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    trapezoid(&abs, f.grid().dt())
}

/// Discrete `L^2(Q_T)` norm of a space-time field (trapezoid in both axes).
pub fn l2_space_time(f: &SpaceTimeField) -> f64 {
    let dt = f.tgrid().dt();
    let dx = f.sgrid().dx();
    let rows = f.tgrid().len();
    let mut s = 0.0;
    for n in 0..rows {
        let wt = if n == 0 || n == rows - 1 { 0.5 } else { 1.0 };
        s += wt * trapezoid_inner(f.row(n), f.row(n), dx);
    }
    (s * dt).max(0.0).sqrt()
}

/// Cumulative trapezoid integral `(1 * v)(t_n)`; output node 0 is zero.
pub fn antiderivative(v: &TimeSeries) -> TimeSeries {
    let dt = v.grid().dt();
    let vals = v.values();
    let mut out = Vec::with_capacity(vals.len());
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..vals.len() {
        acc += 0.5 * dt * (vals[n - 1] + vals[n]);
        out.push(acc);
    }
    TimeSeries { grid: v.grid(), values: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(SpaceGrid::new(3).is_err());
        let tg = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(tg.dt(), 0.5);
        assert_eq!(tg.node(3), 1.5);
    }

    #[test]
    fn l2_space_examples() {
        let sg = SpaceGrid::new(100).unwrap();
        assert_eq!(l2_space(&SpaceField::zeros(sg)), 0.0);
        assert_abs_diff_eq!(l2_space(&SpaceField::from_fn(sg, |_| 1.0)), 1.0, epsilon = 1e-14);
        // integral of x^2 over [0,1] is 1/3
        let f = SpaceField::from_fn(sg, |x| x);
        assert_abs_diff_eq!(l2_space(&f), 1.0 / 3.0_f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn time_norm_examples() {
        let tg = TimeGrid::new(2.0, 50).unwrap();
        let one = TimeSeries::from_fn(tg, |_| 1.0);
        assert_abs_diff_eq!(l2_time(&one), 2.0_f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(l1_time(&one), 2.0, epsilon = 1e-14);
        let tg = TimeGrid::new(1.0, 200).unwrap();
        let ramp = TimeSeries::from_fn(tg, |t| t);
        // trapezoid is exact on linear integrands
        assert_abs_diff_eq!(l1_time(&ramp), 0.5, epsilon = 1e-6);
        assert_eq!(l2_time(&TimeSeries::zeros(tg)), 0.0);
    }

    #[test]
    fn antiderivative_examples() {
        let tg = TimeGrid::new(1.0, 1000).unwrap();
        let zero = antiderivative(&TimeSeries::zeros(tg));
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let one = antiderivative(&TimeSeries::from_fn(tg, |_| 1.0));
        for n in [0, 1, 500, 1000] {
            assert_abs_diff_eq!(one.values()[n], tg.node(n), epsilon = 1e-13);
        }

        let cos = antiderivative(&TimeSeries::from_fn(tg, |t| t.cos()));
        assert_abs_diff_eq!(cos.values()[1000], 1.0_f64.sin(), epsilon = 1e-6);
    }

    #[test]
    fn antiderivative_of_nonnegative_is_nondecreasing() {
        let tg = TimeGrid::new(1.0, 64).unwrap();
        let f = TimeSeries::from_fn(tg, |t| (5.0 * t).sin().abs());
        let g = antiderivative(&f);
        for w in g.values().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn restriction_aligns_nodes() {
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let f = TimeSeries::from_fn(tg, |t| t * t);
        let r = f.restrict(2).unwrap();
        assert_eq!(r.grid().steps(), 4);
        assert_eq!(r.values()[1], f.values()[2]);
    }

    #[test]
    fn space_time_rows_and_traces() {
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let sg = SpaceGrid::new(4).unwrap();
        let f = SpaceTimeField::from_fn(tg, sg, |t, x| t + 10.0 * x);
        assert_eq!(f.row(2)[1], tg.node(2) + 10.0 * sg.node(1));
        assert_eq!(f.trace_left().values()[3], tg.node(3));
        assert_eq!(f.trace_right().values()[3], tg.node(3) + 10.0);
    }
}
