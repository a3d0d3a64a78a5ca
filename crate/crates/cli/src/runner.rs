//! Mode dispatch: build the problem, run it, persist artifacts, and emit a
//! reproducible JSON report (config echo included).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thermem::forward::{emit_measurement, forward_solve};
use thermem::inverse::{
    assemble_coefficients, check_compatibility, inverse_march, reconstruct_u, residual_problem2,
};
use thermem::presets::{self, Preset};
use thermem::{SpaceGrid, TimeGrid, TimeSeries};

use crate::config::{ConfigError, Mode, RunConfig};
use crate::noise::inject_noise;

/// Error classes mapped to process exit codes.
#[derive(Debug)]
pub enum RunnerError {
    /// Exit code 2: the configuration does not parse or validate.
    Config(String),
    /// Exit code 3: a solver refused or failed.
    Solver(String),
    /// Exit code 4: the invariant battery found a violation.
    VerifyFailed(usize),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Solver(_) => 3,
            RunnerError::VerifyFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for RunnerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunnerError::Config(m) => write!(f, "config error: {m}"),
            RunnerError::Solver(m) => write!(f, "solver error: {m}"),
            RunnerError::VerifyFailed(n) => write!(f, "{n} invariant check(s) failed"),
        }
    }
}

impl std::error::Error for RunnerError {}

fn config_err(e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Config(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Solver(e.to_string())
}

/// Split an anyhow error into config vs solver class: anything rooted in a
/// [`ConfigError`] (parsing, file layout) is a config error.
fn classify(e: anyhow::Error) -> RunnerError {
    if e.chain().any(|c| c.is::<ConfigError>()) {
        RunnerError::Config(e.to_string())
    } else {
        RunnerError::Solver(e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct ForwardStats {
    pub steps: usize,
    pub cells: usize,
    pub max_picard: usize,
    pub total_picard: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct InverseStats {
    pub windows: usize,
    pub max_picard: u32,
    pub total_picard: u64,
    pub per_step_iterations: Vec<u32>,
    pub kernel_consistency_max: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct CompatRow {
    pub name: String,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct Residuals {
    pub interior: f64,
    pub boundary: f64,
    pub measurement_max: f64,
    pub derivative_identity: f64,
}

#[derive(Debug, Serialize)]
pub struct ErrorStats {
    pub rel_l2_h: f64,
    pub rel_l2_u: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub task: String,
    pub time_steps: usize,
    pub millis: f64,
}

/// Run report: everything needed to reproduce and judge the run.
#[derive(Debug, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub wall_ms: f64,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compatibility: Option<Vec<CompatRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<Vec<CheckRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<Vec<BenchRow>>,
    pub config: RunConfig,
}

fn stats_of(report: &thermem::ForwardReport, cells: usize) -> ForwardStats {
    ForwardStats {
        steps: report.steps,
        cells,
        max_picard: report.max_picard,
        total_picard: report.total_picard,
        wall_ms: report.wall_ms,
    }
}

fn inverse_stats(m: &thermem::MarchReport) -> InverseStats {
    InverseStats {
        windows: m.windows,
        max_picard: m.per_step_iters.iter().max().copied().unwrap_or(0),
        total_picard: m.per_step_iters.iter().map(|&k| k as u64).sum(),
        per_step_iterations: m.per_step_iters.clone(),
        kernel_consistency_max: m.kernel_consistency_max,
        wall_ms: m.wall_ms,
    }
}

fn residual_rows(r: &thermem::ResidualReport) -> Residuals {
    Residuals {
        interior: r.interior,
        boundary: r.boundary,
        measurement_max: r.measurement_max,
        derivative_identity: r.derivative_identity,
    }
}

struct ArtifactSink {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactSink {
    fn new(dir: &Path) -> Result<Self, RunnerError> {
        std::fs::create_dir_all(dir).map_err(config_err)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn time_series(&mut self, name: &str, s: &TimeSeries) -> Result<(), RunnerError> {
        let path = self.dir.join(name);
        thermem::io::save_time_series(&path, s).map_err(solver_err)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn field(&mut self, name: &str, f: &thermem::SpaceTimeField) -> Result<(), RunnerError> {
        let path = self.dir.join(name);
        thermem::io::save_space_time(&path, f).map_err(solver_err)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Execute a validated configuration. `base` anchors relative paths in the
/// config (CSV inputs); artifacts land in `output_dir` (default `out`).
pub fn run(cfg: &RunConfig, base: &Path) -> Result<Report, RunnerError> {
    let start = Instant::now();
    cfg.validate().map_err(config_err)?;
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out_dir = if out_dir.is_absolute() { out_dir } else { base.join(out_dir) };

    let mut report = Report {
        mode: cfg.mode,
        wall_ms: 0.0,
        artifacts: Vec::new(),
        forward: None,
        inverse: None,
        compatibility: None,
        residuals: None,
        errors: None,
        verify: None,
        bench: None,
        config: cfg.clone(),
    };

    match cfg.mode {
        Mode::Forward => run_forward(cfg, base, &out_dir, &mut report)?,
        Mode::Invert => run_invert(cfg, base, &out_dir, &mut report)?,
        Mode::Roundtrip => run_roundtrip(cfg, base, &out_dir, &mut report)?,
        Mode::Verify => run_verify(&out_dir, &mut report)?,
        Mode::Bench => run_bench(&out_dir, &mut report)?,
    }

    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let json = serde_json::to_string_pretty(&report).map_err(solver_err)?;
    std::fs::write(out_dir.join("report.json"), json).map_err(solver_err)?;
    Ok(report)
}

fn build_forward(
    cfg: &RunConfig,
    base: &Path,
    tg: TimeGrid,
    sg: SpaceGrid,
) -> Result<thermem::ForwardProblem, RunnerError> {
    let problem = cfg.problem.as_ref().expect("validated");
    if let Some(preset) = problem.preset().map_err(classify)? {
        presets::forward_problem(preset, tg, sg).map_err(solver_err)
    } else {
        let custom = problem.custom.as_ref().expect("validated");
        custom.forward_problem(tg, sg, base).map_err(classify)
    }
}

fn run_forward(
    cfg: &RunConfig,
    base: &Path,
    out_dir: &Path,
    report: &mut Report,
) -> Result<(), RunnerError> {
    let (tg, sg) = cfg.grids().map_err(classify)?;
    let problem = build_forward(cfg, base, tg, sg)?;
    let (u, stats) = forward_solve(&problem, &cfg.solver.picard_controls()).map_err(solver_err)?;
    let g = emit_measurement(&u, &problem.weights);

    let mut sink = ArtifactSink::new(out_dir)?;
    sink.field("u.csv", &u)?;
    sink.time_series("g.csv", &g)?;
    report.forward = Some(stats_of(&stats, sg.cells()));
    report.artifacts = sink.written;
    println!(
        "forward: N={} M={} picard max {} total {}",
        tg.steps(),
        sg.cells(),
        stats.max_picard,
        stats.total_picard
    );
    Ok(())
}

fn build_inverse(
    cfg: &RunConfig,
    base: &Path,
    tg: TimeGrid,
    sg: SpaceGrid,
    g: TimeSeries,
) -> Result<thermem::InverseProblem, RunnerError> {
    let problem = cfg.problem.as_ref().expect("validated");
    if let Some(preset) = problem.preset().map_err(classify)? {
        presets::inverse_problem(preset, tg, sg, g, cfg.solver.smooth_window).map_err(solver_err)
    } else {
        let custom = problem.custom.as_ref().expect("validated");
        custom.inverse_problem(tg, sg, g, cfg.solver.smooth_window, base).map_err(classify)
    }
}

fn run_invert(
    cfg: &RunConfig,
    base: &Path,
    out_dir: &Path,
    report: &mut Report,
) -> Result<(), RunnerError> {
    let (tg, sg) = cfg.grids().map_err(classify)?;
    let path = cfg.problem.as_ref().and_then(|p| p.measurement_csv.clone()).expect("validated");
    let raw = thermem::io::load_time_series(&base.join(&path)).map_err(config_err)?;
    let mut g = if raw.grid().compatible(&tg) {
        raw
    } else if raw.grid().steps().is_multiple_of(tg.steps())
        && (raw.grid().t_end() - tg.t_end()).abs() <= 1e-9 * tg.t_end()
    {
        raw.restrict(raw.grid().steps() / tg.steps()).map_err(config_err)?
    } else {
        return Err(config_err(format!(
            "measurement series ({} steps) does not align with the run grid ({} steps)",
            raw.grid().steps(),
            tg.steps()
        )));
    };
    if cfg.noise.amplitude > 0.0 {
        g = inject_noise(&g, cfg.noise.amplitude, cfg.noise.seed.expect("validated"));
    }

    let problem = build_inverse(cfg, base, tg, sg, g.clone())?;
    invert_and_record(cfg, &problem, out_dir, report, None)?;
    Ok(())
}

fn invert_and_record(
    cfg: &RunConfig,
    problem: &thermem::InverseProblem,
    out_dir: &Path,
    report: &mut Report,
    truth: Option<(&TimeSeries, &thermem::SpaceTimeField)>,
) -> Result<(), RunnerError> {
    let controls = cfg.solver.inverse_controls();
    let compat = check_compatibility(problem).map_err(solver_err)?;
    let coeffs = assemble_coefficients(problem, controls.tol_chi).map_err(solver_err)?;
    let (v, h, march) = inverse_march(problem, &coeffs, &controls).map_err(solver_err)?;
    let u = reconstruct_u(&problem.u0, &v);
    let residuals = residual_problem2(&u, &h, problem).map_err(solver_err)?;

    let mut sink = ArtifactSink::new(out_dir)?;
    sink.time_series("g.csv", &problem.g)?;
    sink.time_series("h.csv", &h)?;
    sink.field("v.csv", &v)?;
    sink.field("u.csv", &u)?;

    if let Some((h_true, u_ref)) = truth {
        let stats = ErrorStats {
            rel_l2_h: thermem::inverse::rel_l2_time(&h, h_true),
            rel_l2_u: thermem::inverse::rel_l2_field(&u, u_ref),
        };
        println!("roundtrip: rel_l2_h={:.4e} rel_l2_u={:.4e}", stats.rel_l2_h, stats.rel_l2_u);
        report.errors = Some(stats);
    }
    println!(
        "invert: windows={} kernel consistency {:.2e}",
        march.windows, march.kernel_consistency_max
    );
    report.compatibility = Some(
        compat.iter().map(|c| CompatRow { name: c.name.to_string(), residual: c.residual }).collect(),
    );
    report.inverse = Some(inverse_stats(&march));
    report.residuals = Some(residual_rows(&residuals));
    report.artifacts = sink.written;
    Ok(())
}

fn run_roundtrip(
    cfg: &RunConfig,
    _base: &Path,
    out_dir: &Path,
    report: &mut Report,
) -> Result<(), RunnerError> {
    let (tg, sg) = cfg.grids().map_err(classify)?;
    let preset: Preset = cfg
        .problem
        .as_ref()
        .and_then(|p| p.preset().transpose())
        .expect("validated")
        .map_err(classify)?;
    let mut data = presets::generate_measurement(preset, tg, sg, cfg.roundtrip.fine_factor)
        .map_err(solver_err)?;
    if cfg.noise.amplitude > 0.0 {
        data.g = inject_noise(&data.g, cfg.noise.amplitude, cfg.noise.seed.expect("validated"));
    }
    let problem =
        presets::inverse_problem(preset, tg, sg, data.g.clone(), cfg.solver.smooth_window)
            .map_err(solver_err)?;
    let h_true = presets::true_kernel(preset, tg);
    report.forward = Some(stats_of(&data.forward_report, sg.cells() * cfg.roundtrip.fine_factor));
    invert_and_record(cfg, &problem, out_dir, report, Some((&h_true, &data.u_ref)))?;
    Ok(())
}

fn run_verify(out_dir: &Path, report: &mut Report) -> Result<(), RunnerError> {
    let checks = thermem::verify::run_all();
    let mut failed = 0usize;
    for c in &checks {
        println!("[{}] {} — {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    println!("verify: {}/{} checks passed", checks.len() - failed, checks.len());
    report.verify = Some(
        checks
            .into_iter()
            .map(|c| CheckRow { name: c.name.to_string(), passed: c.passed, detail: c.detail })
            .collect(),
    );
    // persist the report even on failure so the run is inspectable
    let json = serde_json::to_string_pretty(&report).map_err(solver_err)?;
    std::fs::create_dir_all(out_dir).map_err(config_err)?;
    std::fs::write(out_dir.join("report.json"), json).map_err(solver_err)?;
    if failed > 0 {
        return Err(RunnerError::VerifyFailed(failed));
    }
    Ok(())
}

fn run_bench(out_dir: &Path, report: &mut Report) -> Result<(), RunnerError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rows = Vec::new();
    println!("{:<10} {:>6} {:>12}", "task", "N", "millis");
    for &steps in &[100usize, 200, 400, 800] {
        let tg = TimeGrid::new(1.0, steps).map_err(solver_err)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = TimeSeries::from_fn(tg, |_| rng.gen_range(-1.0..1.0));
        let f = TimeSeries::from_fn(tg, |_| rng.gen_range(-1.0..1.0));
        let t0 = Instant::now();
        let reps = 50;
        for _ in 0..reps {
            let _ = thermem::convolution::convolve(&h, &f).map_err(solver_err)?;
        }
        let convolve_ms = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;
        rows.push(BenchRow { task: "convolve".into(), time_steps: steps, millis: convolve_ms });

        let sg = SpaceGrid::new(steps / 4).map_err(solver_err)?;
        let problem = presets::forward_problem(Preset::ExpKernel, tg, sg).map_err(solver_err)?;
        let t0 = Instant::now();
        let (u, _) = forward_solve(&problem, &thermem::PicardControls::default())
            .map_err(solver_err)?;
        let forward_ms = t0.elapsed().as_secs_f64() * 1e3;
        rows.push(BenchRow { task: "forward".into(), time_steps: steps, millis: forward_ms });

        let g = emit_measurement(&u, &problem.weights);
        let inv = presets::inverse_problem(Preset::ExpKernel, tg, sg, g, 1).map_err(solver_err)?;
        let coeffs = assemble_coefficients(&inv, 1e-10).map_err(solver_err)?;
        let t0 = Instant::now();
        let _ = inverse_march(&inv, &coeffs, &Default::default()).map_err(solver_err)?;
        let invert_ms = t0.elapsed().as_secs_f64() * 1e3;
        rows.push(BenchRow { task: "invert".into(), time_steps: steps, millis: invert_ms });

        for row in rows.iter().rev().take(3).collect::<Vec<_>>().into_iter().rev() {
            println!("{:<10} {:>6} {:>12.3}", row.task, row.time_steps, row.millis);
        }
    }
    std::fs::create_dir_all(out_dir).map_err(config_err)?;
    report.bench = Some(rows);
    Ok(())
}
