//! Run configuration: a single JSON document selecting a mode, grids, a
//! problem (named preset or explicit functions), noise, and solver controls.
//!
//! Physical functions are given as `kind` + parameters (closed forms with
//! analytic time derivatives) or as CSV paths (sampled; derivatives then go
//! through the least-squares differentiation path).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermem::feedback::ThermostatParams;
use thermem::forward::ForwardProblem;
use thermem::inverse::{InverseControls, InverseProblem};
use thermem::presets::Preset;
use thermem::{
    BoundaryPair, Coefficients, MeasurementWeights, MemoryOperatorSpec, PicardControls,
    SpaceField, SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Invert,
    Roundtrip,
    Verify,
    Bench,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "forward" => Some(Mode::Forward),
            "invert" => Some(Mode::Invert),
            "roundtrip" => Some(Mode::Roundtrip),
            "verify" => Some(Mode::Verify),
            "bench" => Some(Mode::Bench),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_end: f64,
    pub time_steps: usize,
    pub space_cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_end: 1.0, time_steps: 400, space_cells: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub amplitude: f64,
    pub seed: Option<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { amplitude: 0.0, seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol_picard: f64,
    pub max_picard: usize,
    pub window_steps: usize,
    pub strict: bool,
    /// Half-width of the least-squares differentiation window for sampled
    /// measurements; 1 is plain central differences.
    pub smooth_window: usize,
    pub tol_chi: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_picard: 1e-10,
            max_picard: 50,
            window_steps: 1,
            strict: false,
            smooth_window: 1,
            tol_chi: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn inverse_controls(&self) -> InverseControls {
        InverseControls {
            picard: self.picard_controls(),
            window_steps: self.window_steps,
            strict: self.strict,
            tol_chi: self.tol_chi,
            compat_factor: 10.0,
        }
    }

    pub fn picard_controls(&self) -> PicardControls {
        PicardControls { tol: self.tol_picard, max_iters: self.max_picard }
    }
}

/// Scalar function of time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFn {
    Const { value: f64 },
    /// `amplitude * exp(rate * t)`
    Exp { amplitude: f64, rate: f64 },
    /// `amplitude * sin(angular_frequency * t + phase) + offset`
    Sin {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `c0 + c1 t + c2 t^2 + ...`
    Poly { coeffs: Vec<f64> },
    Csv { path: PathBuf },
}

impl TimeFn {
    pub fn sample(&self, grid: TimeGrid, base: &Path) -> anyhow::Result<TimeSeries> {
        Ok(match self {
            TimeFn::Const { value } => TimeSeries::from_fn(grid, |_| *value),
            TimeFn::Exp { amplitude, rate } => {
                TimeSeries::from_fn(grid, |t| amplitude * (rate * t).exp())
            }
            TimeFn::Sin { amplitude, angular_frequency, phase, offset } => {
                TimeSeries::from_fn(grid, |t| {
                    amplitude * (angular_frequency * t + phase).sin() + offset
                })
            }
            TimeFn::Poly { coeffs } => TimeSeries::from_fn(grid, |t| {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }),
            TimeFn::Csv { path } => {
                let s = thermem::io::load_time_series(&base.join(path))?;
                align_series(s, grid)?
            }
        })
    }

    /// Analytic time derivative where one exists.
    pub fn sample_dot(&self, grid: TimeGrid) -> Option<TimeSeries> {
        match self {
            TimeFn::Const { .. } => Some(TimeSeries::zeros(grid)),
            TimeFn::Exp { amplitude, rate } => {
                Some(TimeSeries::from_fn(grid, |t| amplitude * rate * (rate * t).exp()))
            }
            TimeFn::Sin { amplitude, angular_frequency, phase, .. } => {
                Some(TimeSeries::from_fn(grid, |t| {
                    amplitude * angular_frequency * (angular_frequency * t + phase).cos()
                }))
            }
            TimeFn::Poly { coeffs } => Some(TimeSeries::from_fn(grid, |t| {
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
            })),
            TimeFn::Csv { .. } => None,
        }
    }
}

/// Scalar function of space on the unit interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceFn {
    Const { value: f64 },
    /// `c0 + c1 x + c2 x^2 + ...`
    Poly { coeffs: Vec<f64> },
    /// `amplitude * cos(pi x)`
    CosPi { amplitude: f64 },
    /// `amplitude * x^2 (1-x)^2`
    Bump {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Sum of the named parts, e.g. the default initial temperature.
    Sum { parts: Vec<SpaceFn> },
    Csv { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl SpaceFn {
    pub fn sample(&self, grid: SpaceGrid, base: &Path) -> anyhow::Result<SpaceField> {
        Ok(match self {
            SpaceFn::Const { value } => SpaceField::from_fn(grid, |_| *value),
            SpaceFn::Poly { coeffs } => SpaceField::from_fn(grid, |x| {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }),
            SpaceFn::CosPi { amplitude } => {
                SpaceField::from_fn(grid, |x| amplitude * (std::f64::consts::PI * x).cos())
            }
            SpaceFn::Bump { amplitude } => {
                SpaceField::from_fn(grid, |x| amplitude * x * x * (1.0 - x) * (1.0 - x))
            }
            SpaceFn::Sum { parts } => {
                let mut out = SpaceField::zeros(grid);
                for p in parts {
                    let s = p.sample(grid, base)?;
                    for (o, v) in out.values_mut().iter_mut().zip(s.values()) {
                        *o += v;
                    }
                }
                out
            }
            SpaceFn::Csv { path } => {
                let f = thermem::io::load_space_time(&base.join(path))?;
                // single-row CSVs are not supported; take the first row of a field
                f.row_field(0)
            }
        })
    }
}

/// Separable space-time source: sum of `space(x) * time(t)` terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceConfig {
    pub terms: Vec<SourceTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceTerm {
    pub space: SpaceFn,
    pub time: TimeFn,
}

impl SourceConfig {
    pub fn sample(
        &self,
        tg: TimeGrid,
        sg: SpaceGrid,
        base: &Path,
    ) -> anyhow::Result<(SpaceTimeField, Option<SpaceTimeField>)> {
        let mut f = SpaceTimeField::zeros(tg, sg);
        let mut f_dot = Some(SpaceTimeField::zeros(tg, sg));
        for term in &self.terms {
            let sx = term.space.sample(sg, base)?;
            let st = term.time.sample(tg, base)?;
            for n in 0..tg.len() {
                let tv = st.values()[n];
                for (o, s) in f.row_mut(n).iter_mut().zip(sx.values()) {
                    *o += s * tv;
                }
            }
            match (term.time.sample_dot(tg), f_dot.as_mut()) {
                (Some(dt_series), Some(fd)) => {
                    for n in 0..tg.len() {
                        let tv = dt_series.values()[n];
                        for (o, s) in fd.row_mut(n).iter_mut().zip(sx.values()) {
                            *o += s * tv;
                        }
                    }
                }
                _ => f_dot = None,
            }
        }
        Ok((f, f_dot))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsConfig {
    pub a: SpaceFn,
    pub b1: [f64; 2],
    pub b0: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsConfig {
    pub omega: SpaceFn,
    pub omega1: SpaceFn,
    pub omega2: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermostatConfig {
    pub epsilon: f64,
    pub phi0: f64,
    pub u_c: TimeFn,
    pub u_a: [TimeFn; 2],
    pub u_b: [TimeFn; 2],
}

/// Fully explicit problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CustomProblem {
    pub coefficients: CoefficientsConfig,
    pub weights: WeightsConfig,
    pub thermostat: ThermostatConfig,
    pub memory_operator: MemoryOperatorSpec,
    pub source: SourceConfig,
    pub q: [TimeFn; 2],
    pub u0: SpaceFn,
    /// Kernel for forward/roundtrip runs.
    pub kernel: Option<TimeFn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Named preset; mutually exclusive with `custom`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub custom: Option<CustomProblem>,
    /// Measurement series for invert mode.
    #[serde(default)]
    pub measurement_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundtripConfig {
    pub fine_factor: usize,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self { fine_factor: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub grid: GridConfig,
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub roundtrip: RoundtripConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.noise.amplitude < 0.0 {
            return Err(ConfigError("noise amplitude must be nonnegative".into()).into());
        }
        if self.noise.amplitude > 0.0 && self.noise.seed.is_none() {
            return Err(ConfigError("a seed is mandatory whenever noise > 0".into()).into());
        }
        match self.mode {
            Mode::Verify | Mode::Bench => {}
            Mode::Forward | Mode::Roundtrip => {
                let p = self
                    .problem
                    .as_ref()
                    .ok_or_else(|| ConfigError("mode requires a problem section".into()))?;
                p.check_exclusive()?;
                if self.mode == Mode::Roundtrip && p.preset.is_none() {
                    return Err(ConfigError(
                        "roundtrip mode needs a named preset (the truth must be known)".into(),
                    )
                    .into());
                }
                if let Some(c) = &p.custom {
                    if c.kernel.is_none() {
                        return Err(
                            ConfigError("forward mode needs a kernel in the problem".into()).into()
                        );
                    }
                }
            }
            Mode::Invert => {
                let p = self
                    .problem
                    .as_ref()
                    .ok_or_else(|| ConfigError("invert mode requires a problem section".into()))?;
                p.check_exclusive()?;
                if p.measurement_csv.is_none() {
                    return Err(ConfigError(
                        "invert mode needs problem.measurement_csv with the measured series".into(),
                    )
                    .into());
                }
            }
        }
        if self.roundtrip.fine_factor == 0 {
            return Err(ConfigError("fine_factor must be at least 1".into()).into());
        }
        Ok(())
    }

    pub fn grids(&self) -> anyhow::Result<(TimeGrid, SpaceGrid)> {
        let tg = TimeGrid::new(self.grid.t_end, self.grid.time_steps)
            .map_err(|e| ConfigError(e.to_string()))?;
        let sg =
            SpaceGrid::new(self.grid.space_cells).map_err(|e| ConfigError(e.to_string()))?;
        Ok((tg, sg))
    }
}

impl ProblemConfig {
    fn check_exclusive(&self) -> anyhow::Result<()> {
        match (&self.preset, &self.custom) {
            (Some(_), Some(_)) => {
                Err(ConfigError("give either a preset or a custom problem, not both".into())
                    .into())
            }
            (None, None) => {
                Err(ConfigError("problem needs a preset name or a custom description".into())
                    .into())
            }
            _ => Ok(()),
        }
    }

    pub fn preset(&self) -> anyhow::Result<Option<Preset>> {
        match &self.preset {
            None => Ok(None),
            Some(name) => Preset::from_name(name)
                .map(Some)
                .ok_or_else(|| ConfigError(format!("unknown preset '{name}'")).into()),
        }
    }
}

fn align_series(s: TimeSeries, grid: TimeGrid) -> anyhow::Result<TimeSeries> {
    if s.grid().compatible(&grid) {
        return Ok(s);
    }
    if (s.grid().t_end() - grid.t_end()).abs() <= 1e-9 * grid.t_end()
        && s.grid().steps().is_multiple_of(grid.steps())
    {
        let stride = s.grid().steps() / grid.steps();
        return Ok(s.restrict(stride).map_err(|e| ConfigError(e.to_string()))?);
    }
    Err(ConfigError(format!(
        "sampled series has {} steps over t_end {}, expected {} over {}",
        s.grid().steps(),
        s.grid().t_end(),
        grid.steps(),
        grid.t_end()
    ))
    .into())
}

impl CustomProblem {
    pub fn thermostat(&self, tg: TimeGrid, base: &Path) -> anyhow::Result<ThermostatParams> {
        let ua_l = self.thermostat.u_a[0].sample(tg, base)?;
        let ua_r = self.thermostat.u_a[1].sample(tg, base)?;
        let ub_l = self.thermostat.u_b[0].sample(tg, base)?;
        let ub_r = self.thermostat.u_b[1].sample(tg, base)?;
        let dot = |f: &TimeFn, s: &TimeSeries| -> anyhow::Result<TimeSeries> {
            Ok(match f.sample_dot(tg) {
                Some(d) => d,
                None => thermem::inverse::smooth_diff(s, 1, 1)
                    .map_err(|e| ConfigError(e.to_string()))?,
            })
        };
        Ok(ThermostatParams {
            epsilon: self.thermostat.epsilon,
            phi0: self.thermostat.phi0,
            u_c: self.thermostat.u_c.sample(tg, base)?,
            u_a_dot: BoundaryPair::new(
                dot(&self.thermostat.u_a[0], &ua_l)?,
                dot(&self.thermostat.u_a[1], &ua_r)?,
            )
            .map_err(|e| ConfigError(e.to_string()))?,
            u_a: BoundaryPair::new(ua_l, ua_r).map_err(|e| ConfigError(e.to_string()))?,
            u_b_dot: BoundaryPair::new(
                dot(&self.thermostat.u_b[0], &ub_l)?,
                dot(&self.thermostat.u_b[1], &ub_r)?,
            )
            .map_err(|e| ConfigError(e.to_string()))?,
            u_b: BoundaryPair::new(ub_l, ub_r).map_err(|e| ConfigError(e.to_string()))?,
        })
    }

    pub fn forward_problem(
        &self,
        tg: TimeGrid,
        sg: SpaceGrid,
        base: &Path,
    ) -> anyhow::Result<ForwardProblem> {
        let err = |e: thermem::Error| ConfigError(e.to_string());
        let coeffs = Coefficients {
            a: self.coefficients.a.sample(sg, base)?,
            b1_left: self.coefficients.b1[0],
            b1_right: self.coefficients.b1[1],
            b0_left: self.coefficients.b0[0],
            b0_right: self.coefficients.b0[1],
        };
        coeffs.validate().map_err(err)?;
        let weights = MeasurementWeights {
            omega: self.weights.omega.sample(sg, base)?,
            omega1: self.weights.omega1.sample(sg, base)?,
            omega2_left: self.weights.omega2[0],
            omega2_right: self.weights.omega2[1],
        };
        weights.validate().map_err(err)?;
        let (f, _) = self.source.sample(tg, sg, base)?;
        let kernel = self
            .kernel
            .as_ref()
            .ok_or_else(|| ConfigError("missing kernel".into()))?
            .sample(tg, base)?;
        Ok(ForwardProblem {
            coeffs,
            weights,
            thermostat: self.thermostat(tg, base)?,
            memory: self.memory_operator.clone(),
            f,
            q: BoundaryPair::new(self.q[0].sample(tg, base)?, self.q[1].sample(tg, base)?)
                .map_err(err)?,
            u0: self.u0.sample(sg, base)?,
            h: kernel,
        })
    }

    pub fn inverse_problem(
        &self,
        tg: TimeGrid,
        sg: SpaceGrid,
        g: TimeSeries,
        smooth_window: usize,
        base: &Path,
    ) -> anyhow::Result<InverseProblem> {
        let forward = self.forward_problem_data(tg, sg, base)?;
        let (f, f_dot) = self.source.sample(tg, sg, base)?;
        let q_l = self.q[0].sample(tg, base)?;
        let q_r = self.q[1].sample(tg, base)?;
        let q_dot = match (self.q[0].sample_dot(tg), self.q[1].sample_dot(tg)) {
            (Some(l), Some(r)) => {
                Some(BoundaryPair::new(l, r).map_err(|e| ConfigError(e.to_string()))?)
            }
            _ => None,
        };
        Ok(InverseProblem {
            coeffs: forward.coeffs,
            weights: forward.weights,
            thermostat: forward.thermostat,
            memory: forward.memory,
            f,
            f_dot,
            q: BoundaryPair::new(q_l, q_r).map_err(|e| ConfigError(e.to_string()))?,
            q_dot,
            u0: forward.u0,
            g,
            g_dot: None,
            g_ddot: None,
            smooth_window,
        })
    }

    /// Forward data without requiring a kernel (shared by inverse assembly).
    fn forward_problem_data(
        &self,
        tg: TimeGrid,
        sg: SpaceGrid,
        base: &Path,
    ) -> anyhow::Result<ForwardProblem> {
        let mut with_kernel = self.clone();
        if with_kernel.kernel.is_none() {
            with_kernel.kernel = Some(TimeFn::Const { value: 0.0 });
        }
        with_kernel.forward_problem(tg, sg, base)
    }
}
