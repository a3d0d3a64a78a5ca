//! Runner-level tests: config validation, mode dispatch, exit-code classes,
//! and byte-level determinism of artifacts.

use std::path::Path;

use thermem_cli::config::{Mode, RunConfig};
use thermem_cli::runner::{run, RunnerError};

fn parse(json: &str) -> anyhow::Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(json)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_cfg(dir: &Path, json: &str) -> RunConfig {
    let cfg: RunConfig = serde_json::from_str(json).unwrap();
    std::fs::write(dir.join("config.json"), json).unwrap();
    cfg
}

#[test]
fn config_validation_rules() {
    // noise without seed is refused
    assert!(parse(
        r#"{ "mode": "roundtrip", "problem": { "preset": "exp_kernel" },
             "noise": { "amplitude": 0.001 } }"#
    )
    .is_err());

    // invert requires a measurement path
    assert!(parse(r#"{ "mode": "invert", "problem": { "preset": "exp_kernel" } }"#).is_err());

    // roundtrip requires a preset
    assert!(parse(r#"{ "mode": "roundtrip" }"#).is_err());

    // unknown preset is a config error
    assert!(parse(r#"{ "mode": "roundtrip", "problem": { "preset": "nope" } }"#)
        .unwrap()
        .problem
        .unwrap()
        .preset()
        .is_err());

    let ok = parse(
        r#"{ "mode": "roundtrip",
             "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
             "problem": { "preset": "exp_kernel" },
             "noise": { "amplitude": 0.0001, "seed": 7 } }"#,
    )
    .unwrap();
    assert_eq!(ok.mode, Mode::Roundtrip);
}

#[test]
fn roundtrip_mode_produces_artifacts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{ "mode": "roundtrip",
             "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
             "problem": { "preset": "exp_kernel" },
             "output_dir": "artifacts" }"#,
    );
    let report = run(&cfg, dir.path()).unwrap();
    assert!(report.errors.is_some());
    for name in ["g.csv", "h.csv", "u.csv", "v.csv", "report.json"] {
        assert!(dir.path().join("artifacts").join(name).exists(), "{name} missing");
    }
    let echoed: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("artifacts/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(echoed["config"]["mode"], "roundtrip");
    assert_eq!(echoed["mode"], "roundtrip");
}

#[test]
fn forward_then_invert_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let forward = write_cfg(
        dir.path(),
        r#"{ "mode": "forward",
             "grid": { "t_end": 1.0, "time_steps": 200, "space_cells": 50 },
             "problem": { "preset": "exp_kernel" },
             "output_dir": "fwd" }"#,
    );
    run(&forward, dir.path()).unwrap();

    let invert: RunConfig = serde_json::from_str(
        r#"{ "mode": "invert",
             "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
             "problem": { "preset": "exp_kernel", "measurement_csv": "fwd/g.csv" },
             "output_dir": "inv" }"#,
    )
    .unwrap();
    let report = run(&invert, dir.path()).unwrap();
    let inverse = report.inverse.unwrap();
    assert!(inverse.kernel_consistency_max <= 1e-10);
    assert!(dir.path().join("inv/h.csv").exists());

    // reconstructed kernel should resemble exp(-t) on the coarse grid
    let h = thermem::io::load_time_series(&dir.path().join("inv/h.csv")).unwrap();
    let h_true = thermem::TimeSeries::from_fn(h.grid(), |t| (-t).exp());
    let rel = thermem::inverse::rel_l2_time(&h, &h_true);
    assert!(rel < 0.1, "rel error {rel}");
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let json = r#"{ "mode": "roundtrip",
         "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
         "problem": { "preset": "exp_kernel" },
         "noise": { "amplitude": 0.0001, "seed": 20260810 },
         "solver": { "smooth_window": 5 },
         "output_dir": "a" }"#;
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run(&write_cfg(d1.path(), json), d1.path()).unwrap();
    run(&write_cfg(d2.path(), json), d2.path()).unwrap();
    for name in ["g.csv", "h.csv", "u.csv", "v.csv"] {
        let a = std::fs::read(d1.path().join("a").join(name)).unwrap();
        let b = std::fs::read(d2.path().join("a").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn solver_errors_map_to_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{ "mode": "roundtrip",
             "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
             "problem": { "preset": "degenerate_chi" },
             "output_dir": "x" }"#,
    );
    match run(&cfg, dir.path()) {
        Err(e @ RunnerError::Solver(_)) => {
            assert_eq!(e.exit_code(), 3);
            assert!(e.to_string().contains("H7"), "message should name the condition: {e}");
        }
        other => panic!("expected solver error, got {other:?}"),
    }
}

#[test]
fn config_errors_map_to_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{ "mode": "invert",
             "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
             "problem": { "preset": "exp_kernel", "measurement_csv": "missing.csv" },
             "output_dir": "x" }"#,
    );
    match run(&cfg, dir.path()) {
        Err(e @ RunnerError::Config(_)) => assert_eq!(e.exit_code(), 2),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn verify_mode_passes_on_clean_build() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), r#"{ "mode": "verify", "output_dir": "v" }"#);
    let report = run(&cfg, dir.path()).unwrap();
    let checks = report.verify.unwrap();
    assert!(checks.iter().all(|c| c.passed));
    assert!(dir.path().join("v/report.json").exists());
}

#[test]
fn custom_problem_forward_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{
          "mode": "forward",
          "grid": { "t_end": 1.0, "time_steps": 80, "space_cells": 20 },
          "problem": {
            "custom": {
              "coefficients": { "a": { "kind": "const", "value": 1.0 }, "b1": [-1.0, 1.0], "b0": [0.0, 0.0] },
              "weights": {
                "omega": { "kind": "bump", "amplitude": 1.0 },
                "omega1": { "kind": "const", "value": 1.0 },
                "omega2": [0.0, 0.0]
              },
              "thermostat": {
                "epsilon": 0.5, "phi0": 0.0,
                "u_c": { "kind": "const", "value": 0.0 },
                "u_a": [ { "kind": "const", "value": 0.0 }, { "kind": "const", "value": 0.0 } ],
                "u_b": [ { "kind": "const", "value": 0.0 }, { "kind": "const", "value": 0.0 } ]
              },
              "memory_operator": { "kind": "play", "half_width": 0.2, "initial_output": 0.0 },
              "source": { "terms": [ { "space": { "kind": "poly", "coeffs": [1.0, 1.0] },
                                       "time": { "kind": "exp", "amplitude": 1.0, "rate": -1.0 } } ] },
              "q": [ { "kind": "const", "value": 0.0 }, { "kind": "const", "value": 0.0 } ],
              "u0": { "kind": "sum", "parts": [ { "kind": "const", "value": 1.0 },
                                                 { "kind": "cos_pi", "amplitude": 0.2 } ] },
              "kernel": { "kind": "exp", "amplitude": 1.0, "rate": -1.0 }
            }
          },
          "output_dir": "fwd"
        }"#,
    );
    let report = run(&cfg, dir.path()).unwrap();
    assert!(report.forward.is_some());
    assert!(dir.path().join("fwd/u.csv").exists());
    assert!(dir.path().join("fwd/g.csv").exists());
}

#[test]
fn config_echo_reproduces_the_run() {
    let json = r#"{ "mode": "roundtrip",
         "grid": { "t_end": 1.0, "time_steps": 100, "space_cells": 25 },
         "problem": { "preset": "exp_kernel" },
         "noise": { "amplitude": 0.0001, "seed": 11 },
         "solver": { "smooth_window": 3 },
         "output_dir": "first" }"#;
    let dir = tempfile::tempdir().unwrap();
    let first = run(&write_cfg(dir.path(), json), dir.path()).unwrap();

    // re-run from the echoed config and compare the numbers byte for byte
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("first/report.json")).unwrap(),
    )
    .unwrap();
    let mut echoed: RunConfig = serde_json::from_value(report["config"].clone()).unwrap();
    echoed.output_dir = Some("second".into());
    let second = run(&echoed, dir.path()).unwrap();

    let (e1, e2) = (first.errors.unwrap(), second.errors.unwrap());
    assert_eq!(e1.rel_l2_h.to_bits(), e2.rel_l2_h.to_bits());
    assert_eq!(e1.rel_l2_u.to_bits(), e2.rel_l2_u.to_bits());
    let a = std::fs::read(dir.path().join("first/h.csv")).unwrap();
    let b = std::fs::read(dir.path().join("second/h.csv")).unwrap();
    assert_eq!(a, b);
}
