//! Rate-independent memory operators over sampled inputs: generalized play,
//! relay superpositions (Preisach), and a scaled identity for linear probes.
//!
//! Inputs are read as piecewise linear between nodes. Relays switch on node
//! values with closed thresholds (`>= rho2` up, `<= rho1` down); sub-node
//! oscillations are not resolved, so the time step must resolve the input's
//! reversals. State advances only through [`MemoryOperator::step`]; `peek`
//! evaluates a candidate node without committing, which is what the
//! per-step fixed-point loops in the solvers rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeSeries;

/// One bistable relay: output `state * weight`, thresholds `rho1 < rho2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaySpec {
    pub rho1: f64,
    pub rho2: f64,
    pub weight: f64,
    /// +1 or -1.
    pub initial_state: i8,
}

/// Configuration of a memory operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryOperatorSpec {
    /// Output tracks the input inside a moving band of half-width `r`;
    /// 1-Lipschitz in the sup norm.
    Play { half_width: f64, initial_output: f64 },
    /// Weighted superposition of relays (discrete Preisach measure).
    Preisach { relays: Vec<RelaySpec> },
    /// `output = gain * input + bias`; Lipschitz constant `|gain|`.
    ScaledIdentity {
        gain: f64,
        #[serde(default)]
        bias: f64,
    },
}

impl MemoryOperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MemoryOperatorSpec::Play { half_width, initial_output } => {
                if !(*half_width >= 0.0) || !initial_output.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "play needs half_width >= 0, got {half_width}"
                    )));
                }
            }
            MemoryOperatorSpec::Preisach { relays } => {
                if relays.is_empty() {
                    return Err(Error::InvalidSpec("preisach needs at least one relay".into()));
                }
                for (k, r) in relays.iter().enumerate() {
                    if !(r.rho1 < r.rho2) {
                        return Err(Error::InvalidSpec(format!(
                            "relay {k}: need rho1 < rho2, got [{}, {}]",
                            r.rho1, r.rho2
                        )));
                    }
                    if !(r.weight >= 0.0) {
                        return Err(Error::InvalidSpec(format!(
                            "relay {k}: negative weight {}",
                            r.weight
                        )));
                    }
                    if r.initial_state != 1 && r.initial_state != -1 {
                        return Err(Error::InvalidSpec(format!(
                            "relay {k}: state must be +1 or -1, got {}",
                            r.initial_state
                        )));
                    }
                }
            }
            MemoryOperatorSpec::ScaledIdentity { gain, bias } => {
                if !gain.is_finite() || !bias.is_finite() {
                    return Err(Error::InvalidSpec("scaled identity needs finite parameters".into()));
                }
            }
        }
        Ok(())
    }

    /// Sum of relay weights; bounds the Preisach output by `+-total_mass`.
    pub fn total_mass(&self) -> f64 {
        match self {
            MemoryOperatorSpec::Preisach { relays } => relays.iter().map(|r| r.weight).sum(),
            _ => 0.0,
        }
    }

    /// Uniform sup-norm Lipschitz constant, where one exists. A finite relay
    /// grid has none (an atom can flip under an arbitrarily small input
    /// perturbation); probes of such grids are bounded by `2 * total_mass`
    /// divided by the input separation instead.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            MemoryOperatorSpec::Play { .. } => Some(1.0),
            MemoryOperatorSpec::ScaledIdentity { gain, .. } => Some(gain.abs()),
            MemoryOperatorSpec::Preisach { .. } => None,
        }
    }

    /// Triangular relay grid over `[lo, hi]` with `levels` threshold levels
    /// and total mass `mass`; initial states are set by comparing the band
    /// midpoint against `center` (the anticipated initial input).
    pub fn preisach_uniform(levels: usize, lo: f64, hi: f64, mass: f64, center: f64) -> Result<Self> {
        if levels < 2 || !(lo < hi) || !(mass >= 0.0) {
            return Err(Error::InvalidSpec(
                "preisach grid needs levels >= 2, lo < hi, mass >= 0".into(),
            ));
        }
        let step = (hi - lo) / (levels - 1) as f64;
        let count = levels * (levels - 1) / 2;
        let weight = mass / count as f64;
        let mut relays = Vec::with_capacity(count);
        for i in 0..levels {
            for j in i + 1..levels {
                let rho1 = lo + step * i as f64;
                let rho2 = lo + step * j as f64;
                let initial_state = if center >= 0.5 * (rho1 + rho2) { 1 } else { -1 };
                relays.push(RelaySpec { rho1, rho2, weight, initial_state });
            }
        }
        Ok(MemoryOperatorSpec::Preisach { relays })
    }
}

#[derive(Debug, Clone)]
enum OperatorState {
    Play { half_width: f64 },
    Preisach { relays: Vec<RelaySpec> },
    ScaledIdentity { gain: f64, bias: f64 },
}

fn relay_next(state: i8, rho1: f64, rho2: f64, x: f64) -> i8 {
    if x >= rho2 {
        1
    } else if x <= rho1 {
        -1
    } else {
        state
    }
}

/// A memory operator with explicit internal state, advanced node by node.
#[derive(Debug, Clone)]
pub struct MemoryOperator {
    state: OperatorState,
    last_output: f64,
    clamped: bool,
}

impl MemoryOperator {
    /// Initialize on the first input value `x0`. An inconsistent play start
    /// is clamped to the nearest admissible output (`|x0 - w| <= r`); relays
    /// are updated once with `x0` so the initial state is consistent.
    pub fn new(spec: &MemoryOperatorSpec, x0: f64) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            MemoryOperatorSpec::Play { half_width, initial_output } => {
                let w = initial_output.clamp(x0 - half_width, x0 + half_width);
                MemoryOperator {
                    state: OperatorState::Play { half_width: *half_width },
                    last_output: w,
                    clamped: w != *initial_output,
                }
            }
            MemoryOperatorSpec::Preisach { relays } => {
                let relays: Vec<RelaySpec> = relays
                    .iter()
                    .map(|r| RelaySpec {
                        initial_state: relay_next(r.initial_state, r.rho1, r.rho2, x0),
                        ..*r
                    })
                    .collect();
                let out = relays.iter().map(|r| r.weight * r.initial_state as f64).sum();
                MemoryOperator {
                    state: OperatorState::Preisach { relays },
                    last_output: out,
                    clamped: false,
                }
            }
            MemoryOperatorSpec::ScaledIdentity { gain, bias } => MemoryOperator {
                state: OperatorState::ScaledIdentity { gain: *gain, bias: *bias },
                last_output: gain * x0 + bias,
                clamped: false,
            },
        })
    }

    /// Whether initialization had to move an inconsistent play output.
    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    /// Output at the last committed node.
    pub fn output(&self) -> f64 {
        self.last_output
    }

    /// Output for input `x` at the next node, without committing state.
    pub fn peek(&self, x: f64) -> f64 {
        match &self.state {
            OperatorState::Play { half_width } => {
                self.last_output.max(x - half_width).min(x + half_width)
            }
            OperatorState::Preisach { relays } => relays
                .iter()
                .map(|r| r.weight * relay_next(r.initial_state, r.rho1, r.rho2, x) as f64)
                .sum(),
            OperatorState::ScaledIdentity { gain, bias } => gain * x + bias,
        }
    }

    /// Advance to the next node with input `x` and return the new output.
    pub fn step(&mut self, x: f64) -> f64 {
        let out = match &mut self.state {
            OperatorState::Play { half_width } => {
                self.last_output.max(x - *half_width).min(x + *half_width)
            }
            OperatorState::Preisach { relays } => {
                let mut sum = 0.0;
                for r in relays.iter_mut() {
                    r.initial_state = relay_next(r.initial_state, r.rho1, r.rho2, x);
                    sum += r.weight * r.initial_state as f64;
                }
                sum
            }
            OperatorState::ScaledIdentity { gain, bias } => *gain * x + *bias,
        };
        self.last_output = out;
        out
    }
}

/// Operator output values over a sampled input, node by node.
pub fn w_apply_values(spec: &MemoryOperatorSpec, xs: &[f64]) -> Result<Vec<f64>> {
    let mut op = MemoryOperator::new(spec, xs[0])?;
    if op.was_clamped() {
        eprintln!("warning: play initial output inconsistent with input, clamped to admissible band");
    }
    let mut out = Vec::with_capacity(xs.len());
    out.push(op.output());
    for &x in &xs[1..] {
        out.push(op.step(x));
    }
    Ok(out)
}

/// Evaluate the operator over a whole sampled input.
pub fn w_apply(spec: &MemoryOperatorSpec, input: &TimeSeries) -> Result<TimeSeries> {
    TimeSeries::new(input.grid(), w_apply_values(spec, input.values())?)
}

/// Evaluate on the truncated input (nodes `0..=m`). By the semigroup
/// property this equals the prefix of the full output node-exactly; `m = 0`
/// yields the single initial output value.
pub fn w_apply_prefix(spec: &MemoryOperatorSpec, input: &TimeSeries, m: usize) -> Result<Vec<f64>> {
    if m >= input.len() {
        return Err(Error::IndexOutOfRange { index: m, max: input.len() - 1 });
    }
    w_apply_values(spec, &input.values()[..=m])
}

/// Sup-norm difference ratio `||W(x1) - W(x2)|| / ||x1 - x2||`, zero for
/// identical inputs.
pub fn lipschitz_probe(spec: &MemoryOperatorSpec, x1: &TimeSeries, x2: &TimeSeries) -> Result<f64> {
    if !x1.grid().compatible(&x2.grid()) {
        return Err(Error::GridMismatch("probe inputs on different grids".into()));
    }
    let denom = x1
        .values()
        .iter()
        .zip(x2.values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if denom == 0.0 {
        return Ok(0.0);
    }
    let w1 = w_apply_values(spec, x1.values())?;
    let w2 = w_apply_values(spec, x2.values())?;
    let num = w1.iter().zip(&w2).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> TimeSeries {
        TimeSeries::from_fn(TimeGrid::new(1.0, n).unwrap(), |t| t)
    }

    /// Independent oracle: project onto the moving band [x-r, x+r] along a
    /// much finer piecewise-linear resolution of the same path.
    fn play_oracle(xs: &[f64], r: f64, w0: f64, refine: usize) -> Vec<f64> {
        let mut w = w0.clamp(xs[0] - r, xs[0] + r);
        let mut out = vec![w];
        for seg in xs.windows(2) {
            for k in 1..=refine {
                let x = seg[0] + (seg[1] - seg[0]) * k as f64 / refine as f64;
                w = w.max(x - r).min(x + r);
            }
            out.push(w);
        }
        out
    }

    #[test]
    fn play_ramp_matches_projection_oracle() {
        let spec = MemoryOperatorSpec::Play { half_width: 0.25, initial_output: 0.0 };
        let input = ramp(100);
        let out = w_apply(&spec, &input).unwrap();
        let oracle = play_oracle(input.values(), 0.25, 0.0, 50);
        for (n, (got, want)) in out.values().iter().zip(&oracle).enumerate() {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            let t = input.grid().node(n);
            assert_abs_diff_eq!(*got, (t - 0.25).max(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn play_oracle_on_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let input =
                TimeSeries::from_fn(TimeGrid::new(1.0, 60).unwrap(), |_| rng.gen_range(-1.0..1.0));
            let r = rng.gen_range(0.05..0.5);
            let w0 = rng.gen_range(-0.5..0.5);
            let spec = MemoryOperatorSpec::Play { half_width: r, initial_output: w0 };
            let out = w_apply(&spec, &input).unwrap();
            let oracle = play_oracle(input.values(), r, w0, 97);
            for (got, want) in out.values().iter().zip(&oracle) {
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn play_band_constraint_holds() {
        let spec = MemoryOperatorSpec::Play { half_width: 0.3, initial_output: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input =
            TimeSeries::from_fn(TimeGrid::new(1.0, 200).unwrap(), |_| rng.gen_range(-2.0..2.0));
        let out = w_apply(&spec, &input).unwrap();
        for (x, w) in input.values().iter().zip(out.values()) {
            assert!((x - w).abs() <= 0.3 + 1e-14);
        }
    }

    #[test]
    fn single_relay_preisach_switches_at_threshold() {
        let spec = MemoryOperatorSpec::Preisach {
            relays: vec![RelaySpec { rho1: -1.0, rho2: 0.5, weight: 1.0, initial_state: -1 }],
        };
        let input = ramp(100);
        let out = w_apply(&spec, &input).unwrap();
        for (n, w) in out.values().iter().enumerate() {
            let t = input.grid().node(n);
            assert_eq!(*w, if t >= 0.5 { 1.0 } else { -1.0 });
        }
        // prefix stopping below the threshold stays constant at -1
        let prefix = w_apply_prefix(&spec, &input, 40).unwrap();
        assert!(prefix.iter().all(|&v| v == -1.0));
        // m = 0 reduces to the initial output
        assert_eq!(w_apply_prefix(&spec, &input, 0).unwrap(), vec![-1.0]);
    }

    #[test]
    fn scaled_identity_gain_zero_is_constant() {
        let spec = MemoryOperatorSpec::ScaledIdentity { gain: 0.0, bias: 1.7 };
        let out = w_apply(&spec, &ramp(20)).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.7));
    }

    #[test]
    fn prefix_is_node_exact_restriction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let specs = [
            MemoryOperatorSpec::Play { half_width: 0.2, initial_output: 0.0 },
            MemoryOperatorSpec::preisach_uniform(6, -1.0, 1.0, 2.0, 0.0).unwrap(),
            MemoryOperatorSpec::ScaledIdentity { gain: 0.8, bias: -0.1 },
        ];
        for spec in &specs {
            for _ in 0..25 {
                let input = TimeSeries::from_fn(TimeGrid::new(1.0, 60).unwrap(), |_| {
                    rng.gen_range(-1.5..1.5)
                });
                let full = w_apply(spec, &input).unwrap();
                let m = rng.gen_range(0..=60);
                let prefix = w_apply_prefix(spec, &input, m).unwrap();
                assert_eq!(prefix.as_slice(), &full.values()[..=m]);
            }
        }
    }

    #[test]
    fn rate_independence_at_corners() {
        // same corner values traversed at two different node speeds
        let corners = [0.0, 0.9, -0.4, 0.6, -0.8, 0.3];
        let build = |per_seg: usize| {
            let steps = per_seg * (corners.len() - 1);
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let mut vals = Vec::with_capacity(steps + 1);
            for (a, b) in corners.iter().zip(&corners[1..]) {
                for k in 0..per_seg {
                    vals.push(a + (b - a) * k as f64 / per_seg as f64);
                }
            }
            vals.push(*corners.last().unwrap());
            TimeSeries::new(grid, vals).unwrap()
        };
        let fast = build(3);
        let slow = build(11);
        let specs = [
            MemoryOperatorSpec::Play { half_width: 0.25, initial_output: 0.0 },
            MemoryOperatorSpec::preisach_uniform(7, -1.0, 1.0, 1.5, 0.0).unwrap(),
        ];
        for spec in &specs {
            let wf = w_apply(spec, &fast).unwrap();
            let ws = w_apply(spec, &slow).unwrap();
            for c in 0..corners.len() - 1 {
                let a = wf.values()[(c + 1) * 3];
                let b = ws.values()[(c + 1) * 11];
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn preisach_bounds_and_monotonicity() {
        let spec = MemoryOperatorSpec::preisach_uniform(8, -1.0, 1.0, 3.0, -2.0).unwrap();
        let input = TimeSeries::from_fn(TimeGrid::new(1.0, 150).unwrap(), |t| -1.5 + 3.0 * t);
        let out = w_apply(&spec, &input).unwrap();
        for w in out.values().windows(2) {
            assert!(w[1] >= w[0] - 1e-15); // nondecreasing input, nondecreasing output
        }
        assert!(out.values().iter().all(|&v| v.abs() <= 3.0 + 1e-12));
    }

    #[test]
    fn lipschitz_probe_respects_declared_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = TimeGrid::new(1.0, 80).unwrap();
        let play = MemoryOperatorSpec::Play { half_width: 0.25, initial_output: 0.0 };
        let scaled = MemoryOperatorSpec::ScaledIdentity { gain: -1.3, bias: 0.4 };
        for _ in 0..200 {
            let x1 = TimeSeries::from_fn(grid, |_| rng.gen_range(-1.0..1.0));
            let x2 = TimeSeries::from_fn(grid, |_| rng.gen_range(-1.0..1.0));
            assert!(lipschitz_probe(&play, &x1, &x2).unwrap() <= 1.0 + 1e-12);
            assert!(lipschitz_probe(&scaled, &x1, &x2).unwrap() <= 1.3 + 1e-12);
            assert_eq!(lipschitz_probe(&play, &x1, &x1).unwrap(), 0.0);
        }
    }

    #[test]
    fn play_init_clamps_inconsistent_output() {
        let spec = MemoryOperatorSpec::Play { half_width: 0.1, initial_output: 5.0 };
        let op = MemoryOperator::new(&spec, 0.0).unwrap();
        assert!(op.was_clamped());
        assert_eq!(op.output(), 0.1);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MemoryOperatorSpec::Play { half_width: -0.1, initial_output: 0.0 }
            .validate()
            .is_err());
        assert!(MemoryOperatorSpec::Preisach {
            relays: vec![RelaySpec { rho1: 0.5, rho2: 0.5, weight: 1.0, initial_state: 1 }],
        }
        .validate()
        .is_err());
        assert!(MemoryOperatorSpec::Preisach {
            relays: vec![RelaySpec { rho1: -0.5, rho2: 0.5, weight: -1.0, initial_state: 1 }],
        }
        .validate()
        .is_err());
        assert!(MemoryOperatorSpec::Preisach {
            relays: vec![RelaySpec { rho1: -0.5, rho2: 0.5, weight: 1.0, initial_state: 0 }],
        }
        .validate()
        .is_err());
    }
}
