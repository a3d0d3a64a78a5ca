//! Forward simulation with a known memory kernel: data generation for the
//! identification experiments and residual checking.
//!
//! Time stepping is implicit Euler. The memory term `h * Au` at `t_n` uses
//! trapezoid quadrature with its diagonal endpoint (`dt h_0 / 2` times the
//! current `Au`) folded into the system matrix and everything older lagged,
//! so each step is one banded solve. The boundary rows carry
//! `B u + u + h * B u = u_e - q` with the same diagonal fold; `u_e` couples
//! back through the hysteretic thermostat and is resolved by a per-step
//! fixed-point iteration that re-reads the hysteresis state committed at
//! `t_{n-1}` on every iterate.

use std::time::Instant;

use crate::convolution::lag_mid;
use crate::error::{Error, Result};
use crate::feedback::{e1_series, ThermostatParams};
use crate::grid::{BoundaryPair, SpaceField, SpaceTimeField, TimeSeries};
use crate::hysteresis::{MemoryOperator, MemoryOperatorSpec};
use crate::linsolve::RobinSystem;
use crate::pde_ops::{
    apply_a_slice, apply_b_slice, measure_m_slice, measure_phi_slice, Coefficients,
    MeasurementWeights,
};

/// Everything needed to run the forward model once.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub coeffs: Coefficients,
    pub weights: MeasurementWeights,
    pub thermostat: ThermostatParams,
    pub memory: MemoryOperatorSpec,
    pub f: SpaceTimeField,
    pub q: BoundaryPair,
    pub u0: SpaceField,
    pub h: TimeSeries,
}

impl ForwardProblem {
    pub fn validate(&self) -> Result<()> {
        self.coeffs.validate()?;
        self.weights.validate()?;
        self.thermostat.validate()?;
        self.memory.validate()?;
        let tg = self.f.tgrid();
        let sg = self.f.sgrid();
        if self.coeffs.grid() != sg || self.u0.grid() != sg || self.weights.omega.grid() != sg {
            return Err(Error::GridMismatch("space data on different grids".into()));
        }
        for (name, g) in [
            ("q", self.q.grid()),
            ("h", self.h.grid()),
            ("thermostat", self.thermostat.grid()),
        ] {
            if !g.compatible(&tg) {
                return Err(Error::GridMismatch(format!("{name} not on the solver time grid")));
            }
        }
        Ok(())
    }
}

/// Fixed-point controls for the per-step boundary iteration.
#[derive(Debug, Clone, Copy)]
pub struct PicardControls {
    /// Relative update threshold, `||du|| / (1 + ||u||)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardControls {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardReport {
    pub steps: usize,
    pub max_picard: usize,
    pub total_picard: usize,
    /// Thermostat state over time, for diagnostics.
    pub phi: TimeSeries,
    /// Sensor signal `W(M(u))` over time.
    pub w_signal: TimeSeries,
    pub wall_ms: f64,
}

/// Run the forward model; returns the temperature field and a run report.
pub fn forward_solve(
    p: &ForwardProblem,
    ctl: &PicardControls,
) -> Result<(SpaceTimeField, ForwardReport)> {
    p.validate()?;
    let start = Instant::now();
    let tg = p.f.tgrid();
    let sg = p.f.sgrid();
    let steps = tg.steps();
    let width = sg.len();
    let dt = tg.dt();
    let dx = sg.dx();
    let eps = p.thermostat.epsilon;
    let hv = p.h.values();

    let mut u = SpaceTimeField::zeros(tg, sg);
    u.set_row(0, p.u0.values());

    // committed history
    let mut au = SpaceTimeField::zeros(tg, sg);
    {
        let mut row = vec![0.0; width];
        apply_a_slice(&p.coeffs, p.u0.values(), &mut row);
        au.set_row(0, &row);
    }
    let mut bu_l = vec![0.0; steps + 1];
    let mut bu_r = vec![0.0; steps + 1];
    let (bl, br) = apply_b_slice(&p.coeffs, p.u0.values(), dx);
    bu_l[0] = bl;
    bu_r[0] = br;

    let m0 = measure_m_slice(&p.weights, p.u0.values(), dx);
    let mut op = MemoryOperator::new(&p.memory, m0)?;
    if op.was_clamped() {
        eprintln!("warning: play initial output inconsistent with M(u0), clamped");
    }
    let mut w_hist = vec![0.0; steps + 1];
    w_hist[0] = op.output();
    let mut phi_hist = vec![0.0; steps + 1];
    phi_hist[0] = p.thermostat.phi0;

    let e1 = e1_series(eps, tg);
    let e1v = e1.values();
    let ucv = p.thermostat.u_c.values();

    let beta = 1.0 + 0.5 * dt * hv[0];
    let alpha = dt * beta;
    let system = RobinSystem::new(&p.coeffs, alpha, beta, 1.0)?;

    let mut max_picard = 0usize;
    let mut total_picard = 0usize;
    let mut forcing = vec![0.0; steps + 1]; // w + u_C history for the phi quadrature
    forcing[0] = w_hist[0] + ucv[0];

    let mut memlag = vec![0.0; width];
    let mut rhs = vec![0.0; width];
    let mut u_hat = vec![0.0; width];

    for n in 1..=steps {
        // lagged memory sums over committed history
        for i in 0..width {
            let mut s = 0.0;
            for k in 1..n {
                s += hv[k] * au.row(n - k)[i];
            }
            memlag[i] = dt * (s + 0.5 * hv[n] * au.row(0)[i]);
        }
        let blag_l = lag_mid(hv, &bu_l, n, dt) + 0.5 * dt * hv[n] * bu_l[0];
        let blag_r = lag_mid(hv, &bu_r, n, dt) + 0.5 * dt * hv[n] * bu_r[0];
        let philag = lag_mid(e1v, &forcing, n, dt) + 0.5 * dt * e1v[n] * forcing[0];
        let phi_decay = (-tg.node(n) / eps).exp() * p.thermostat.phi0;

        u_hat.copy_from_slice(u.row(n - 1));
        let mut converged = false;
        let mut res_prev = f64::INFINITY;
        let mut res_last = f64::INFINITY;
        let mut iters = 0usize;
        while iters < ctl.max_iters {
            iters += 1;
            let m_hat = measure_m_slice(&p.weights, &u_hat, dx);
            let w_hat = op.peek(m_hat);
            let phi_hat = phi_decay + philag + 0.5 * dt * e1v[0] * (w_hat + ucv[n]);

            let f_row = p.f.row(n);
            for i in 1..width - 1 {
                rhs[i] = u.row(n - 1)[i] + dt * (f_row[i] + memlag[i]);
            }
            let ue_l = phi_hat * p.thermostat.u_a.left.values()[n] + p.thermostat.u_b.left.values()[n];
            let ue_r =
                phi_hat * p.thermostat.u_a.right.values()[n] + p.thermostat.u_b.right.values()[n];
            rhs[0] = ue_l - p.q.left.values()[n] - blag_l;
            rhs[width - 1] = ue_r - p.q.right.values()[n] - blag_r;

            system.solve(&mut rhs);

            let mut diff = 0.0_f64;
            let mut scale = 0.0_f64;
            for (a, b) in rhs.iter().zip(&u_hat) {
                diff = diff.max((a - b).abs());
                scale = scale.max(a.abs());
            }
            u_hat.copy_from_slice(&rhs);
            res_prev = res_last;
            res_last = diff / (1.0 + scale);
            if res_last < ctl.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged { step: n, res_prev, res_last });
        }
        total_picard += iters;
        max_picard = max_picard.max(iters);

        // commit the step
        u.set_row(n, &u_hat);
        let mut arow = vec![0.0; width];
        apply_a_slice(&p.coeffs, &u_hat, &mut arow);
        au.set_row(n, &arow);
        let (bl, br) = apply_b_slice(&p.coeffs, &u_hat, dx);
        bu_l[n] = bl;
        bu_r[n] = br;
        let m_n = measure_m_slice(&p.weights, &u_hat, dx);
        w_hist[n] = op.step(m_n);
        forcing[n] = w_hist[n] + ucv[n];
        phi_hist[n] = phi_decay + philag + 0.5 * dt * e1v[0] * forcing[n];
    }

    let report = ForwardReport {
        steps,
        max_picard,
        total_picard,
        phi: TimeSeries::new(tg, phi_hist)?,
        w_signal: TimeSeries::new(tg, w_hist)?,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((u, report))
}

/// Measurement output `g(t_n) = Phi(u(t_n))`.
pub fn emit_measurement(u: &SpaceTimeField, w: &MeasurementWeights) -> TimeSeries {
    let dx = u.sgrid().dx();
    let values = (0..u.tgrid().len()).map(|n| measure_phi_slice(w, u.row(n), dx)).collect();
    TimeSeries::new(u.tgrid(), values).expect("row count matches grid")
}

/// Boundary data `q` that freezes the feedback loop out of the problem:
/// with `u_A = 0`, `u_B = u_e` the condition reads `Bu + h*Bu + q = u_e - u`.
pub fn frozen_feedback_thermostat(
    grid: crate::grid::TimeGrid,
    ue_left: impl Fn(f64) -> f64,
    ue_right: impl Fn(f64) -> f64,
    due_left: impl Fn(f64) -> f64,
    due_right: impl Fn(f64) -> f64,
) -> ThermostatParams {
    ThermostatParams {
        epsilon: 1.0,
        phi0: 0.0,
        u_c: TimeSeries::zeros(grid),
        u_a: BoundaryPair::zeros(grid),
        u_a_dot: BoundaryPair::zeros(grid),
        u_b: BoundaryPair::from_fns(grid, ue_left, ue_right),
        u_b_dot: BoundaryPair::from_fns(grid, due_left, due_right),
    }
}
