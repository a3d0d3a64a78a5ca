//! Discrete elliptic operator `A = d/dx(a du/dx)`, the first-order boundary
//! operator `B = b1 d/dx + b0`, the two measurement functionals, and the
//! derived sensor field `psi1`.
//!
//! Interior nodes use the conservative flux stencil with face-averaged
//! diffusivity; the two boundary nodes use second-order one-sided stencils
//! of the same operator, so the overall spatial order stays two without
//! ghost points.

use crate::error::{Error, Result};
use crate::grid::{self, SpaceField, SpaceGrid};

/// Elliptic and boundary-operator coefficients. `b1` must be nonzero on both
/// ends; its sign fixes the orientation of `B` (a dissipative Robin setup on
/// the unit interval has `b1_left < 0 < b1_right`).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: SpaceField,
    pub b1_left: f64,
    pub b1_right: f64,
    pub b0_left: f64,
    pub b0_right: f64,
}

impl Coefficients {
    pub fn constant(grid: SpaceGrid, a: f64, b1: (f64, f64), b0: (f64, f64)) -> Result<Self> {
        let c = Self {
            a: SpaceField::from_fn(grid, |_| a),
            b1_left: b1.0,
            b1_right: b1.1,
            b0_left: b0.0,
            b0_right: b0.1,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let amin = self.a.values().iter().cloned().fold(f64::INFINITY, f64::min);
        if !(amin > 0.0) {
            return Err(Error::InvalidSpec(format!("diffusivity must be positive, min = {amin}")));
        }
        if self.b1_left == 0.0 || self.b1_right == 0.0 {
            return Err(Error::InvalidSpec("boundary operator needs b1 != 0 on both ends".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> SpaceGrid {
        self.a.grid()
    }
}

/// Sensor weights: `omega` drives the identification functional and must
/// vanish with its first derivative at both ends; `omega1`/`omega2` weight
/// the interior and boundary parts of the feedback sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWeights {
    pub omega: SpaceField,
    pub omega1: SpaceField,
    pub omega2_left: f64,
    pub omega2_right: f64,
}

impl MeasurementWeights {
    pub fn validate(&self) -> Result<()> {
        let w = self.omega.values();
        let n = w.len();
        let dx = self.omega.grid().dx();
        let scale = self.omega.max_abs().max(1e-30);
        if w[0].abs() > 1e-14 * scale || w[n - 1].abs() > 1e-14 * scale {
            return Err(Error::InvalidSpec("omega must vanish at both ends".into()));
        }
        // the one-sided stencil sees omega' up to a dx^2 * omega''' term, so
        // the vanishing test is scaled by the measured third difference
        let d3 = |i: usize| (w[i + 3] - 3.0 * w[i + 2] + 3.0 * w[i + 1] - w[i]).abs() / dx.powi(3);
        let tol = 4.0 * dx * dx * d3(0).max(d3(n - 4)) + 1e-12 * scale;
        let dl = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dx);
        let dr = (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * dx);
        if dl.abs() > tol || dr.abs() > tol {
            return Err(Error::InvalidSpec(format!(
                "omega' must vanish at both ends: got {dl:.3e}, {dr:.3e} (tol {tol:.3e})"
            )));
        }
        if self.omega1.grid() != self.omega.grid() {
            return Err(Error::GridMismatch("omega and omega1 on different grids".into()));
        }
        Ok(())
    }

    /// The quartic bump `x^2 (1-x)^2`, which satisfies the vanishing
    /// conditions exactly at the nodes.
    pub fn quartic_bump(grid: SpaceGrid, omega1: SpaceField, omega2: (f64, f64)) -> Result<Self> {
        let w = Self {
            omega: SpaceField::from_fn(grid, |x| x * x * (1.0 - x) * (1.0 - x)),
            omega1,
            omega2_left: omega2.0,
            omega2_right: omega2.1,
        };
        w.validate()?;
        Ok(w)
    }
}

/// One-sided second-order first derivative at the left end of a slice.
fn dx_left(v: &[f64], dx: f64) -> f64 {
    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
}

/// One-sided second-order first derivative at the right end of a slice.
fn dx_right(v: &[f64], dx: f64) -> f64 {
    let n = v.len();
    (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx)
}

pub(crate) fn apply_a_slice(c: &Coefficients, u: &[f64], out: &mut [f64]) {
    let a = c.a.values();
    let n = u.len();
    let dx = c.grid().dx();
    let dx2 = dx * dx;
    for i in 1..n - 1 {
        let ap = 0.5 * (a[i] + a[i + 1]);
        let am = 0.5 * (a[i] + a[i - 1]);
        out[i] = (ap * (u[i + 1] - u[i]) - am * (u[i] - u[i - 1])) / dx2;
    }
    // A = a u'' + a' u' with one-sided second-order stencils on the ends
    let upp_l = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dx2;
    out[0] = a[0] * upp_l + dx_left(a, dx) * dx_left(u, dx);
    let upp_r = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / dx2;
    out[n - 1] = a[n - 1] * upp_r + dx_right(a, dx) * dx_right(u, dx);
}

/// `A u = (a u')'` on the whole grid.
pub fn apply_a(c: &Coefficients, u: &SpaceField) -> SpaceField {
    let mut out = SpaceField::zeros(u.grid());
    apply_a_slice(c, u.values(), out.values_mut());
    out
}

pub(crate) fn apply_b_slice(c: &Coefficients, u: &[f64], dx: f64) -> (f64, f64) {
    let left = c.b1_left * dx_left(u, dx) + c.b0_left * u[0];
    let right = c.b1_right * dx_right(u, dx) + c.b0_right * u[u.len() - 1];
    (left, right)
}

/// `B u = b1 u' + b0 u` evaluated at the two boundary points.
pub fn apply_b(c: &Coefficients, u: &SpaceField) -> (f64, f64) {
    apply_b_slice(c, u.values(), u.grid().dx())
}

pub(crate) fn measure_m_slice(w: &MeasurementWeights, u: &[f64], dx: f64) -> f64 {
    let interior = grid::trapezoid_inner(w.omega1.values(), u, dx);
    interior + w.omega2_left * u[0] + w.omega2_right * u[u.len() - 1]
}

/// Feedback sensor `M(u)`: interior average against `omega1` plus the
/// boundary readings weighted by `omega2` (point evaluations in 1-D).
pub fn measure_m(w: &MeasurementWeights, u: &SpaceField) -> f64 {
    measure_m_slice(w, u.values(), u.grid().dx())
}

pub(crate) fn measure_phi_slice(w: &MeasurementWeights, u: &[f64], dx: f64) -> f64 {
    grid::trapezoid_inner(w.omega.values(), u, dx)
}

/// Identification functional `Phi(u)`: interior average against `omega`.
pub fn measure_phi(w: &MeasurementWeights, u: &SpaceField) -> f64 {
    measure_phi_slice(w, u.values(), u.grid().dx())
}

/// `psi1 = chi * A omega`. With real coefficients in 1-D the formal adjoint
/// of `A` is `A`, so no conjugations appear.
pub fn assemble_psi1(c: &Coefficients, w: &MeasurementWeights, chi: f64) -> Result<SpaceField> {
    w.validate()?;
    let mut out = apply_a(c, &w.omega);
    for v in out.values_mut() {
        *v *= chi;
    }
    Ok(out)
}

/// Residual of the duality identity `int omega Av = int (A omega) v`, whose
/// boundary terms vanish because `omega` and `omega'` vanish on the ends.
/// Second order in `dx` for smooth `v`.
pub fn adjoint_residual(c: &Coefficients, w: &MeasurementWeights, v: &SpaceField) -> f64 {
    let av = apply_a(c, v);
    let aw = apply_a(c, &w.omega);
    let dx = v.grid().dx();
    let lhs = grid::trapezoid_inner(w.omega.values(), av.values(), dx);
    let rhs = grid::trapezoid_inner(aw.values(), v.values(), dx);
    (lhs - rhs).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(m: usize) -> SpaceGrid {
        SpaceGrid::new(m).unwrap()
    }

    fn unit_coeffs(m: usize) -> Coefficients {
        Coefficients::constant(grid(m), 1.0, (-1.0, 1.0), (0.0, 0.0)).unwrap()
    }

    fn bump_weights(m: usize) -> MeasurementWeights {
        let g = grid(m);
        MeasurementWeights::quartic_bump(g, SpaceField::from_fn(g, |_| 1.0), (0.0, 0.0)).unwrap()
    }

    #[test]
    fn apply_a_annihilates_constants() {
        let c = Coefficients::constant(grid(40), 2.5, (-1.0, 1.0), (0.1, 0.2)).unwrap();
        let u = SpaceField::from_fn(grid(40), |_| 3.7);
        let au = apply_a(&c, &u);
        assert!(au.values().iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn apply_a_exact_on_quadratics_with_unit_diffusivity() {
        let c = unit_coeffs(50);
        let u = SpaceField::from_fn(grid(50), |x| x * x);
        let au = apply_a(&c, &u);
        for v in au.values() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn apply_a_variable_coefficient_symbolic_oracle() {
        // a = 1+x, u = x^2: (a u')' = 2 + 4x
        let g = grid(80);
        let c = Coefficients {
            a: SpaceField::from_fn(g, |x| 1.0 + x),
            b1_left: -1.0,
            b1_right: 1.0,
            b0_left: 0.0,
            b0_right: 0.0,
        };
        let u = SpaceField::from_fn(g, |x| x * x);
        let au = apply_a(&c, &u);
        for (i, v) in au.values().iter().enumerate() {
            let x = g.node(i);
            assert_abs_diff_eq!(*v, 2.0 + 4.0 * x, epsilon = 1e-8);
        }
    }

    #[test]
    fn apply_b_examples() {
        let g = grid(60);
        let c = Coefficients::constant(g, 1.0, (1.0, 1.0), (0.0, 0.0)).unwrap();
        let (l, r) = apply_b(&c, &SpaceField::from_fn(g, |_| 1.0));
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-11);

        let (l, r) = apply_b(&c, &SpaceField::from_fn(g, |x| x));
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-10);

        // u = x^2, b1 = 2, b0 = 1 at x=1: 2*2 + 1*1 = 5
        let c = Coefficients::constant(g, 1.0, (2.0, 2.0), (1.0, 1.0)).unwrap();
        let (_, r) = apply_b(&c, &SpaceField::from_fn(g, |x| x * x));
        assert_abs_diff_eq!(r, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn measure_m_examples() {
        let g = grid(100);
        // pure boundary sensor
        let w = MeasurementWeights {
            omega: SpaceField::from_fn(g, |x| x * x * (1.0 - x) * (1.0 - x)),
            omega1: SpaceField::zeros(g),
            omega2_left: 1.0,
            omega2_right: 0.0,
        };
        let mut u = SpaceField::zeros(g);
        u.values_mut()[0] = 3.0;
        assert_eq!(measure_m(&w, &u), 3.0);

        // mean sensor
        let w = bump_weights(100);
        assert_abs_diff_eq!(measure_m(&w, &SpaceField::from_fn(g, |_| 2.0)), 2.0, epsilon = 1e-13);

        // omega1 = x against u = x: 1/3
        let w = MeasurementWeights {
            omega: w.omega,
            omega1: SpaceField::from_fn(g, |x| x),
            omega2_left: 0.0,
            omega2_right: 0.0,
        };
        assert_abs_diff_eq!(
            measure_m(&w, &SpaceField::from_fn(g, |x| x)),
            1.0 / 3.0,
            epsilon = 1e-4
        );
    }

    #[test]
    fn measure_phi_examples() {
        let g = grid(100);
        let w = bump_weights(100);
        assert_eq!(measure_phi(&w, &SpaceField::zeros(g)), 0.0);
        // int x^2 (1-x)^2 = 1/30, int x^3 (1-x)^2 = 1/60
        assert_abs_diff_eq!(
            measure_phi(&w, &SpaceField::from_fn(g, |_| 1.0)),
            1.0 / 30.0,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            measure_phi(&w, &SpaceField::from_fn(g, |x| x)),
            1.0 / 60.0,
            epsilon = 1e-5
        );
    }

    #[test]
    fn psi1_symbolic_oracle() {
        // a = 1, omega = x^2(1-x)^2: A omega = 2 - 12x + 12x^2
        let c = unit_coeffs(100);
        let w = bump_weights(100);
        let psi = assemble_psi1(&c, &w, 1.0).unwrap();
        let g = grid(100);
        for (i, v) in psi.values().iter().enumerate() {
            let x = g.node(i);
            // one-sided end stencils carry a larger (still second order) constant
            let eps = if i == 0 || i == 100 { 6e-3 } else { 2e-3 };
            assert_abs_diff_eq!(*v, 2.0 - 12.0 * x + 12.0 * x * x, epsilon = eps);
        }
        // chi scaling and zero omega
        let psi2 = assemble_psi1(&c, &w, -2.0).unwrap();
        for (a, b) in psi.values().iter().zip(psi2.values()) {
            assert_abs_diff_eq!(-2.0 * a, *b, epsilon = 1e-12);
        }
        let zero = assemble_psi1(&c, &w, 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_residual_second_order() {
        // The flux stencil is exactly self-adjoint on interior nodes, so the
        // whole defect sits in boundary terms. A probe vanishing on the
        // boundary (sin pi x) is exact to roundoff; the constant probe
        // exposes the genuine O(dx^2) defect and its refinement ratio.
        for m in [50usize, 100, 200] {
            let c = unit_coeffs(m);
            let w = bump_weights(m);
            let v = SpaceField::from_fn(grid(m), |x| (PI * x).sin());
            let dx = grid(m).dx();
            assert!(adjoint_residual(&c, &w, &v) <= dx * dx, "m={m}");
        }
        let res: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&m| {
                let c = unit_coeffs(m);
                let w = bump_weights(m);
                adjoint_residual(&c, &w, &SpaceField::from_fn(grid(m), |_| 1.0))
            })
            .collect();
        for ratio in [res[0] / res[1], res[1] / res[2]] {
            assert!((3.2..=4.8).contains(&ratio), "refinement ratio {ratio}");
        }

        let c = unit_coeffs(100);
        let w = bump_weights(100);
        assert_eq!(adjoint_residual(&c, &w, &SpaceField::zeros(grid(100))), 0.0);
        assert!(res[1] < 1e-3);
    }

    #[test]
    fn weight_invariants_enforced() {
        let g = grid(50);
        let bad = MeasurementWeights {
            omega: SpaceField::from_fn(g, |x| x), // does not vanish at x=1
            omega1: SpaceField::zeros(g),
            omega2_left: 0.0,
            omega2_right: 0.0,
        };
        assert!(bad.validate().is_err());
        let slope = MeasurementWeights {
            omega: SpaceField::from_fn(g, |x| x * (1.0 - x)), // omega' != 0 at ends
            omega1: SpaceField::zeros(g),
            omega2_left: 0.0,
            omega2_right: 0.0,
        };
        assert!(slope.validate().is_err());
    }

    #[test]
    fn coefficient_validation() {
        assert!(Coefficients::constant(grid(10), 0.0, (-1.0, 1.0), (0.0, 0.0)).is_err());
        assert!(Coefficients::constant(grid(10), 1.0, (0.0, 1.0), (0.0, 0.0)).is_err());
    }
}
