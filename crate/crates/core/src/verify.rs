//! Deterministic invariant battery across all modules, used by the CLI
//! `verify` mode. Sizes are kept small; the full-size acceptance checks live
//! in the integration test suite.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::convolution::{convolve, split_convolution, volterra2_solve_node};
use crate::feedback::{e1_series, psi_eval, thermostat_ode_solve, ThermostatParams};
use crate::forward::{forward_solve, PicardControls};
use crate::grid::{
    antiderivative, l1_time, l2_space, l2_time, BoundaryPair, SpaceField, SpaceGrid,
    SpaceTimeField, TimeGrid, TimeSeries,
};
use crate::hysteresis::{lipschitz_probe, w_apply, w_apply_prefix, MemoryOperatorSpec};
use crate::inverse::InverseControls;
use crate::pde_ops::{adjoint_residual, measure_phi, Coefficients, MeasurementWeights};
use crate::presets::{manufactured_run, run_roundtrip, Preset};

/// One invariant check: name, verdict, and a short measurement string.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_series(grid: TimeGrid, rng: &mut ChaCha8Rng) -> TimeSeries {
    TimeSeries::from_fn(grid, |_| rng.gen_range(-1.0..1.0))
}

/// Run the whole battery; deterministic under its internal seeds.
pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(grid_checks());
    out.extend(convolution_checks());
    out.extend(hysteresis_checks());
    out.extend(pde_checks());
    out.extend(feedback_checks());
    out.extend(solver_checks());
    out
}

fn grid_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let g = TimeGrid::new(1.0, 128).unwrap();
    let mut worst_lin = 0.0_f64;
    for _ in 0..20 {
        let a = rng.gen_range(-2.0..2.0);
        let b = rng.gen_range(-2.0..2.0);
        let x = random_series(g, &mut rng);
        let y = random_series(g, &mut rng);
        let combo = TimeSeries::new(
            g,
            x.values().iter().zip(y.values()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let lhs = antiderivative(&combo);
        let ix = antiderivative(&x);
        let iy = antiderivative(&y);
        for n in 0..=128 {
            worst_lin =
                worst_lin.max((lhs.values()[n] - a * ix.values()[n] - b * iy.values()[n]).abs());
        }
    }

    let sg = SpaceGrid::new(64).unwrap();
    let mut cauchy_ok = true;
    for _ in 0..50 {
        let f = SpaceField::from_fn(sg, |_| rng.gen_range(-1.0..1.0));
        let h = SpaceField::from_fn(sg, |_| rng.gen_range(-1.0..1.0));
        let inner = crate::grid::inner_space(&f, &h).unwrap();
        if inner.abs() > l2_space(&f) * l2_space(&h) + 1e-12 {
            cauchy_ok = false;
        }
    }

    vec![
        check("grid: antiderivative linearity", worst_lin < 1e-12, format!("max dev {worst_lin:.2e}")),
        check("grid: Cauchy-Schwarz", cauchy_ok, "50 random pairs".into()),
    ]
}

fn convolution_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let g = TimeGrid::new(1.0, 256).unwrap();

    let mut young_ok = true;
    let mut worst_young = 0.0_f64;
    for _ in 0..100 {
        let h = random_series(g, &mut rng);
        let f = random_series(g, &mut rng);
        let c = convolve(&h, &f).unwrap();
        let bound = 1.01 * l1_time(&h) * l2_time(&f);
        worst_young = worst_young.max(l2_time(&c) / bound.max(1e-300));
        if l2_time(&c) > bound + 1e-14 {
            young_ok = false;
        }
    }

    let g64 = TimeGrid::new(1.0, 64).unwrap();
    let mut split_worst = 0.0_f64;
    for _ in 0..50 {
        let h = random_series(g64, &mut rng);
        let z = random_series(g64, &mut rng);
        let full = convolve(&h, &z).unwrap();
        let (left, right) = split_convolution(&h, &z, 40).unwrap();
        for j in 0..=40usize {
            split_worst = split_worst.max((left.values()[j] - full.values()[j]).abs());
        }
        for n in 0..=24usize {
            split_worst = split_worst.max((right.values()[n] - full.values()[40 + n]).abs());
        }
    }

    let mut comm_worst = 0.0_f64;
    for _ in 0..20 {
        let h = random_series(g64, &mut rng);
        let f = random_series(g64, &mut rng);
        let a = convolve(&h, &f).unwrap();
        let b = convolve(&f, &h).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            comm_worst = comm_worst.max((x - y).abs());
        }
    }

    let mut volterra_worst = 0.0_f64;
    for _ in 0..100 {
        let a = rng.gen_range(-3.0..3.0);
        let w = rng.gen_range(0.0..0.4);
        let rhs = rng.gen_range(-5.0..5.0);
        if (1.0_f64 + w * a).abs() < 1e-3 {
            continue;
        }
        let x = volterra2_solve_node(a, rhs, w).unwrap();
        volterra_worst = volterra_worst.max((x - rhs + w * a * x).abs());
    }

    vec![
        check("convolution: Young inequality (100 pairs, N=256)", young_ok, format!("worst ratio to bound {worst_young:.4}")),
        check("convolution: splitting identities (50 pairs, N=64, m=40)", split_worst <= 1e-12, format!("max dev {split_worst:.2e}")),
        check("convolution: commutativity", comm_worst <= 1e-12, format!("max dev {comm_worst:.2e}")),
        check("convolution: second-kind node residual", volterra_worst <= 1e-13, format!("max residual {volterra_worst:.2e}")),
    ]
}

fn hysteresis_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let g = TimeGrid::new(1.0, 64).unwrap();
    let play = MemoryOperatorSpec::Play { half_width: 0.2, initial_output: 0.0 };
    let preisach = MemoryOperatorSpec::preisach_uniform(6, -1.0, 1.0, 2.0, 0.0).unwrap();
    let scaled = MemoryOperatorSpec::ScaledIdentity { gain: 0.9, bias: 0.1 };

    let mut prefix_ok = true;
    for spec in [&play, &preisach, &scaled] {
        for _ in 0..100 {
            let x = random_series(g, &mut rng);
            let full = w_apply(spec, &x).unwrap();
            let m = rng.gen_range(0..=64);
            let pre = w_apply_prefix(spec, &x, m).unwrap();
            if pre.as_slice() != &full.values()[..=m] {
                prefix_ok = false;
            }
        }
    }

    let mut lip_ok = true;
    let mut worst_play = 0.0_f64;
    for _ in 0..1000 {
        let x1 = random_series(g, &mut rng);
        let x2 = random_series(g, &mut rng);
        let r = lipschitz_probe(&play, &x1, &x2).unwrap();
        worst_play = worst_play.max(r);
        if r > 1.0 + 1e-12 {
            lip_ok = false;
        }
        if lipschitz_probe(&scaled, &x1, &x2).unwrap() > 0.9 + 1e-12 {
            lip_ok = false;
        }
    }

    let mut band_ok = true;
    for _ in 0..50 {
        let x = random_series(g, &mut rng);
        let w = w_apply(&play, &x).unwrap();
        for (xi, wi) in x.values().iter().zip(w.values()) {
            if (xi - wi).abs() > 0.2 + 1e-14 {
                band_ok = false;
            }
        }
    }

    let mono_input = TimeSeries::from_fn(g, |t| -1.2 + 2.4 * t);
    let mono_out = w_apply(&preisach, &mono_input).unwrap();
    let mono_ok = mono_out.values().windows(2).all(|w| w[1] >= w[0] - 1e-15)
        && mono_out.values().iter().all(|v| v.abs() <= 2.0 + 1e-12);

    vec![
        check("hysteresis: prefix restriction node-exact (100/kind)", prefix_ok, "play, preisach, scaled".into()),
        check("hysteresis: Lipschitz probes under declared constants", lip_ok, format!("worst play ratio {worst_play:.4}")),
        check("hysteresis: play band constraint", band_ok, "|x - w| <= r".into()),
        check("hysteresis: monotone Preisach, bounded by mass", mono_ok, "ramp input".into()),
    ]
}

fn pde_checks() -> Vec<Check> {
    // sin(pi x) vanishes on the boundary, where the whole discrete duality
    // defect lives; it must sit far below dx^2. The constant probe carries
    // the generic O(dx^2) defect whose refinement ratio is checked.
    let mut sin_ok = true;
    let mut const_res = Vec::new();
    for m in [50usize, 100, 200] {
        let sg = SpaceGrid::new(m).unwrap();
        let c = Coefficients::constant(sg, 1.0, (-1.0, 1.0), (0.0, 0.0)).unwrap();
        let w = MeasurementWeights::quartic_bump(sg, SpaceField::from_fn(sg, |_| 1.0), (0.0, 0.0))
            .unwrap();
        let v = SpaceField::from_fn(sg, |x| (PI * x).sin());
        if adjoint_residual(&c, &w, &v) > sg.dx() * sg.dx() {
            sin_ok = false;
        }
        const_res.push(adjoint_residual(&c, &w, &SpaceField::from_fn(sg, |_| 1.0)));
    }
    let r1 = const_res[0] / const_res[1];
    let r2 = const_res[1] / const_res[2];
    let green_ok = sin_ok && (3.2..=4.8).contains(&r1) && (3.2..=4.8).contains(&r2);

    let sg = SpaceGrid::new(64).unwrap();
    let w = MeasurementWeights::quartic_bump(sg, SpaceField::from_fn(sg, |_| 1.0), (0.0, 0.0)).unwrap();
    let u = SpaceField::from_fn(sg, |x| 0.3 + x);
    let v = SpaceField::from_fn(sg, |x| x * x);
    let lin = (measure_phi(&w, &SpaceField::new(sg, u.values().iter().zip(v.values()).map(|(a, b)| 2.0 * a - 3.0 * b).collect()).unwrap())
        - (2.0 * measure_phi(&w, &u) - 3.0 * measure_phi(&w, &v)))
        .abs();

    vec![
        check("pde: duality identity refinement ratios in [3.2, 4.8]", green_ok, format!("ratios {r1:.2}, {r2:.2}")),
        check("pde: measurement linearity", lin < 1e-14, format!("dev {lin:.2e}")),
    ]
}

fn feedback_checks() -> Vec<Check> {
    let g = TimeGrid::new(1.0, 200).unwrap();
    let params = ThermostatParams {
        epsilon: 0.5,
        phi0: 0.4,
        u_c: TimeSeries::from_fn(g, |t| (2.0 * t).sin()),
        u_a: BoundaryPair::from_fns(g, |_| 1.0, |_| 1.0),
        u_a_dot: BoundaryPair::zeros(g),
        u_b: BoundaryPair::from_fns(g, |t| 0.2 * t.cos(), |t| 0.2 * t.cos()),
        u_b_dot: BoundaryPair::from_fns(g, |t| -0.2 * t.sin(), |t| -0.2 * t.sin()),
    };
    let w_sig = TimeSeries::from_fn(g, |t| 0.5 * (3.0 * t).cos());
    let phi = thermostat_ode_solve(&params, &w_sig).unwrap();
    let dt = g.dt();
    let mut ode_res = 0.0_f64;
    for n in 1..200 {
        let dphi = (phi.values()[n + 1] - phi.values()[n - 1]) / (2.0 * dt);
        ode_res = ode_res
            .max((0.5 * dphi + phi.values()[n] - w_sig.values()[n] - params.u_c.values()[n]).abs());
    }

    let ue = crate::feedback::apply_f(&params, &w_sig).unwrap();
    let mut ue_dev = 0.0_f64;
    for n in 0..=200 {
        let want = phi.values()[n] * params.u_a.left.values()[n] + params.u_b.left.values()[n];
        ue_dev = ue_dev.max((ue.left.values()[n] - want).abs());
    }

    // psi causality with perturbed tails
    let sg = SpaceGrid::new(16).unwrap();
    let weights =
        MeasurementWeights::quartic_bump(sg, SpaceField::from_fn(sg, |_| 1.0), (0.1, 0.1)).unwrap();
    let u0 = SpaceField::from_fn(sg, |x| 1.0 - x);
    let spec = MemoryOperatorSpec::Play { half_width: 0.1, initial_output: 0.0 };
    let g64 = TimeGrid::new(1.0, 64).unwrap();
    let params64 = ThermostatParams {
        epsilon: 0.5,
        phi0: 0.1,
        u_c: TimeSeries::from_fn(g64, |t| t.sin()),
        u_a: BoundaryPair::from_fns(g64, |_| 1.0, |_| 1.0),
        u_a_dot: BoundaryPair::zeros(g64),
        u_b: BoundaryPair::zeros(g64),
        u_b_dot: BoundaryPair::zeros(g64),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut causal_ok = true;
    for &m in &[1usize, 16, 32] {
        for _ in 0..7 {
            let v1 = SpaceTimeField::from_fn(g64, sg, |t, x| (t + x).sin());
            let mut v2 = v1.clone();
            for n in m + 1..=64 {
                for val in v2.row_mut(n) {
                    *val += rng.gen_range(-1.0..1.0);
                }
            }
            let p1 = psi_eval(&params64, &spec, &weights, &u0, &v1).unwrap();
            let p2 = psi_eval(&params64, &spec, &weights, &u0, &v2).unwrap();
            if p1.left.values()[..=m] != p2.left.values()[..=m]
                || p1.right.values()[..=m] != p2.right.values()[..=m]
            {
                causal_ok = false;
            }
        }
    }

    let e1 = e1_series(2.0, g);
    vec![
        check("feedback: thermostat ODE residual O(dt)", ode_res <= 1.0 * dt, format!("max residual {ode_res:.2e}")),
        check("feedback: u_e = phi u_A + u_B", ue_dev <= 1e-10, format!("max dev {ue_dev:.2e}")),
        check("feedback: psi causality node-exact", causal_ok, "m in {1, N/4, N/2}".into()),
        check("feedback: E1(0) = 1/eps", (e1.values()[0] - 0.5).abs() < 1e-15, format!("{}", e1.values()[0])),
    ]
}

fn solver_checks() -> Vec<Check> {
    let mut out = Vec::new();

    let mms = manufactured_run(100, 32).unwrap();
    out.push(check(
        "forward: manufactured-solution error",
        mms.max_error < 0.02,
        format!("max {:.2e}, l2 {:.2e}", mms.max_error, mms.l2_error),
    ));

    // energy decay for the pure Robin heat preset
    let tg = TimeGrid::new(1.0, 50).unwrap();
    let sg = SpaceGrid::new(32).unwrap();
    let mut p = crate::presets::forward_problem(Preset::Stationary, tg, sg).unwrap();
    p.u0 = SpaceField::from_fn(sg, |x| (PI * x).sin());
    p.thermostat.u_b = BoundaryPair::zeros(tg);
    p.q = BoundaryPair::zeros(tg);
    let (u, _) = forward_solve(&p, &PicardControls::default()).unwrap();
    let mut decay_ok = true;
    let mut prev = f64::INFINITY;
    for n in 0..=50 {
        let norm = l2_space(&u.row_field(n));
        if norm > prev + 1e-12 {
            decay_ok = false;
        }
        prev = norm;
    }
    out.push(check("forward: Robin heat energy decay", decay_ok, "L2 norm nonincreasing".into()));

    // round trip at small size
    let rt = run_roundtrip(Preset::ExpKernel, 1.0, 200, 50, 2, 1, &InverseControls::default()).unwrap();
    out.push(check(
        "inverse: exp-kernel round trip at desk scale",
        rt.rel_l2_h < 0.10 && rt.rel_l2_u < 0.02,
        format!("rel h {:.3}, rel u {:.4}", rt.rel_l2_h, rt.rel_l2_u),
    ));
    out.push(check(
        "inverse: kernel equation consistency",
        rt.march.kernel_consistency_max <= 1e-10,
        format!("max defect {:.2e}", rt.march.kernel_consistency_max),
    ));

    let rt0 = run_roundtrip(Preset::ZeroKernel, 1.0, 400, 100, 2, 1, &InverseControls::default())
        .unwrap();
    let h_norm = l2_time(&rt0.h_rec);
    out.push(check(
        "inverse: zero-kernel reconstruction stays near zero",
        h_norm <= 5e-3,
        format!("l2 {h_norm:.2e} at N=400, M=100"),
    ));

    out
}
