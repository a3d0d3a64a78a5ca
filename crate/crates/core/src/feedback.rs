//! Thermostat dynamics and the feedback boundary source.
//!
//! The external temperature is `u_e = phi * u_A + u_B`, with `phi` solving
//! `eps * phi' + phi = w + u_C` for the sensor signal `w = W(M(u))`. By
//! variation of constants `phi = exp(-t/eps) phi0 + E1 * (w + u_C)` with
//! `E1(t) = exp(-t/eps)/eps`, and every time derivative of a convolution
//! with `E1` reduces algebraically to `D_t(E1 * r) = (r - E1 * r)/eps`, so
//! nothing here differentiates numerically except the optional sampled-data
//! fallback for `u_A`, `u_B`.

use crate::convolution::convolve;
use crate::error::{Error, Result};
use crate::grid::{antiderivative, BoundaryPair, SpaceField, SpaceTimeField, TimeGrid, TimeSeries};
use crate::hysteresis::{w_apply, MemoryOperatorSpec};
use crate::pde_ops::{measure_m, measure_m_slice, MeasurementWeights};

/// Thermostat data: relaxation time, initial state, setpoint signal and the
/// two boundary profiles with their time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermostatParams {
    pub epsilon: f64,
    pub phi0: f64,
    pub u_c: TimeSeries,
    pub u_a: BoundaryPair,
    pub u_a_dot: BoundaryPair,
    pub u_b: BoundaryPair,
    pub u_b_dot: BoundaryPair,
}

impl ThermostatParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidSpec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let g = self.u_c.grid();
        for (name, other) in [
            ("u_a", self.u_a.grid()),
            ("u_a_dot", self.u_a_dot.grid()),
            ("u_b", self.u_b.grid()),
            ("u_b_dot", self.u_b_dot.grid()),
        ] {
            if !g.compatible(&other) {
                return Err(Error::GridMismatch(format!("{name} not on the thermostat grid")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        self.u_c.grid()
    }
}

/// Relaxation kernel `E1(t) = exp(-t/eps)/eps`.
pub fn e1_series(epsilon: f64, grid: TimeGrid) -> TimeSeries {
    TimeSeries::from_fn(grid, |t| (-t / epsilon).exp() / epsilon)
}

/// Uncontrolled part of the boundary source:
/// `E0 = [(E1 * u_C) + eps phi0 E1] u_A + u_B`.
pub fn e0_series(p: &ThermostatParams) -> Result<BoundaryPair> {
    p.validate()?;
    let g = p.grid();
    let e1 = e1_series(p.epsilon, g);
    let euc = convolve(&e1, &p.u_c)?;
    let coeff: Vec<f64> = euc
        .values()
        .iter()
        .zip(e1.values())
        .map(|(c, e)| c + p.epsilon * p.phi0 * e)
        .collect();
    let mk = |ua: &TimeSeries, ub: &TimeSeries| {
        let v = coeff
            .iter()
            .zip(ua.values())
            .zip(ub.values())
            .map(|((c, a), b)| c * a + b)
            .collect();
        TimeSeries::new(g, v)
    };
    BoundaryPair::new(mk(&p.u_a.left, &p.u_b.left)?, mk(&p.u_a.right, &p.u_b.right)?)
}

/// The affine control-to-boundary map `F(r) = (E1 * r) u_A + E0`.
pub fn apply_f(p: &ThermostatParams, r: &TimeSeries) -> Result<BoundaryPair> {
    let e0 = e0_series(p)?;
    let e1 = e1_series(p.epsilon, p.grid());
    let er = convolve(&e1, r)?;
    let mk = |ua: &TimeSeries, e0s: &TimeSeries| {
        let v = er
            .values()
            .iter()
            .zip(ua.values())
            .zip(e0s.values())
            .map(|((e, a), c)| e * a + c)
            .collect();
        TimeSeries::new(p.grid(), v)
    };
    BoundaryPair::new(mk(&p.u_a.left, &e0.left)?, mk(&p.u_a.right, &e0.right)?)
}

/// Thermostat state `phi(t) = exp(-t/eps) phi0 + (E1 * (w + u_C))(t)`, the
/// exact variation-of-constants solution with quadrature convolution.
pub fn thermostat_ode_solve(p: &ThermostatParams, w: &TimeSeries) -> Result<TimeSeries> {
    p.validate()?;
    if !w.grid().compatible(&p.grid()) {
        return Err(Error::GridMismatch("sensor signal not on the thermostat grid".into()));
    }
    let g = p.grid();
    let e1 = e1_series(p.epsilon, g);
    let forcing = TimeSeries::new(
        g,
        w.values().iter().zip(p.u_c.values()).map(|(a, b)| a + b).collect(),
    )?;
    let conv = convolve(&e1, &forcing)?;
    let values = (0..g.len())
        .map(|n| (-g.node(n) / p.epsilon).exp() * p.phi0 + conv.values()[n])
        .collect();
    TimeSeries::new(g, values)
}

/// Sensor series `M` applied to each snapshot of a space-time field.
pub fn measurement_series(w: &MeasurementWeights, u: &SpaceTimeField) -> TimeSeries {
    let dx = u.sgrid().dx();
    let values = (0..u.tgrid().len()).map(|n| measure_m_slice(w, u.row(n), dx)).collect();
    TimeSeries::new(u.tgrid(), values).expect("row count matches grid")
}

/// Memory signal `r_v = W(M(u0) + 1 * M(v))`.
pub fn rv_series(
    spec: &MemoryOperatorSpec,
    w: &MeasurementWeights,
    u0: &SpaceField,
    v: &SpaceTimeField,
) -> Result<TimeSeries> {
    let mu0 = measure_m(w, u0);
    let mv = measurement_series(w, v);
    let integral = antiderivative(&mv);
    let input = TimeSeries::new(
        v.tgrid(),
        integral.values().iter().map(|s| mu0 + s).collect(),
    )?;
    w_apply(spec, &input)
}

fn psi_from_r(p: &ThermostatParams, r: &TimeSeries) -> Result<BoundaryPair> {
    let g = p.grid();
    let eps = p.epsilon;
    let e1 = e1_series(eps, g);
    let er = convolve(&e1, r)?;
    let euc = convolve(&e1, &p.u_c)?;
    let mk = |ua: &TimeSeries, ua_dot: &TimeSeries, ub_dot: &TimeSeries| {
        let v = (0..g.len())
            .map(|n| {
                let d_er = (r.values()[n] - er.values()[n]) / eps;
                let d_e0_coeff = (p.u_c.values()[n] - euc.values()[n]) / eps
                    - p.phi0 * e1.values()[n];
                let e0_coeff = euc.values()[n] + eps * p.phi0 * e1.values()[n];
                d_er * ua.values()[n]
                    + er.values()[n] * ua_dot.values()[n]
                    + d_e0_coeff * ua.values()[n]
                    + e0_coeff * ua_dot.values()[n]
                    + ub_dot.values()[n]
            })
            .collect();
        TimeSeries::new(g, v)
    };
    BoundaryPair::new(
        mk(&p.u_a.left, &p.u_a_dot.left, &p.u_b_dot.left)?,
        mk(&p.u_a.right, &p.u_a_dot.right, &p.u_b_dot.right)?,
    )
}

/// Time derivative of the fed-back boundary source along `v`:
/// `Psi(v) = D_t [F(W(M(u0 + 1 * v)))]`, expanded by the product rule with
/// the exact convolution-derivative identities.
pub fn psi_eval(
    p: &ThermostatParams,
    spec: &MemoryOperatorSpec,
    w: &MeasurementWeights,
    u0: &SpaceField,
    v: &SpaceTimeField,
) -> Result<BoundaryPair> {
    p.validate()?;
    if !v.tgrid().compatible(&p.grid()) {
        return Err(Error::GridMismatch("v not on the thermostat grid".into()));
    }
    let r = rv_series(spec, w, u0, v)?;
    psi_from_r(p, &r)
}

/// Evaluate `Psi` of the concatenated history `prefix | tail` and return the
/// tail window. `tail` row 0 must coincide with the last prefix row, and the
/// thermostat data must live on the concatenated grid.
pub fn psi_restart(
    p: &ThermostatParams,
    spec: &MemoryOperatorSpec,
    w: &MeasurementWeights,
    u0: &SpaceField,
    prefix_v: &SpaceTimeField,
    tail_v: &SpaceTimeField,
) -> Result<BoundaryPair> {
    let dt = prefix_v.tgrid().dt();
    if (tail_v.tgrid().dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMismatch("prefix and tail step sizes differ".into()));
    }
    if prefix_v.sgrid() != tail_v.sgrid() {
        return Err(Error::GridMismatch("prefix and tail space grids differ".into()));
    }
    let np = prefix_v.tgrid().steps();
    let nt = tail_v.tgrid().steps();
    let mismatch = prefix_v
        .row(np)
        .iter()
        .zip(tail_v.row(0))
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = prefix_v.max_abs().max(1.0);
    if mismatch > 1e-12 * scale {
        return Err(Error::JunctionMismatch(mismatch));
    }
    let total = TimeGrid::new(dt * (np + nt) as f64, np + nt)?;
    if !p.grid().compatible(&total) {
        return Err(Error::GridMismatch("thermostat data must cover the concatenated span".into()));
    }
    let mut v = SpaceTimeField::zeros(total, prefix_v.sgrid());
    for n in 0..=np {
        v.set_row(n, prefix_v.row(n));
    }
    for n in 1..=nt {
        v.set_row(np + n, tail_v.row(n));
    }
    let full = psi_eval(p, spec, w, u0, &v)?;
    let tail_grid = TimeGrid::new(dt * nt as f64, nt)?;
    Ok(BoundaryPair {
        left: TimeSeries::new(tail_grid, full.left.values()[np..].to_vec())?,
        right: TimeSeries::new(tail_grid, full.right.values()[np..].to_vec())?,
    })
}
