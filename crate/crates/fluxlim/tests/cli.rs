//! End-to-end tests of the command-line binary against the example
//! configurations shipped in the repository.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../examples")
        .join(name)
}

fn fluxlim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluxlim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_prints_and_exits_cleanly() {
    let out = fluxlim(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for word in ["solve", "jko", "verify", "sweep"] {
        assert!(text.contains(word), "help lacks `{word}`:\n{text}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = fluxlim(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_exits_one() {
    let out = fluxlim(&["solve", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn gibbs_fixed_point_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "solve",
        example("gibbs_fixed_point.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("gibbs_convergence"), "{text}");
    assert!(text.contains("Pass"), "{text}");
    assert!(!text.contains("Fail"), "{text}");
    assert!(dir.path().join("meta.json").is_file());
    assert!(dir.path().join("report.json").is_file());
    assert!(dir.path().join("steps.csv").is_file());
    assert!(dir.path().join("plot.gp").is_file());
}

#[test]
fn jko_vs_fv_example_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "jko",
        example("jko_vs_fv.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("fv_cross_validation"), "{text}");
    assert!(text.contains("final l1 distance"), "{text}");
    assert!(text.contains("Pass"), "{text}");
}

#[test]
fn verify_default_battery_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "verify",
        example("verify_default.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches(" Pass").count(), 6, "{text}");
    assert!(!text.contains("Fail"), "{text}");
    assert!(!text.contains("HypothesisNotMet"), "{text}");
}

#[test]
fn double_well_run_records_the_nonconvexity_caveat() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "jko",
        example("double_well.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("caveat"), "{text}");
    assert!(text.contains("non-convex"), "{text}");
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("meta.json")).unwrap(),
    )
    .unwrap();
    assert!(!meta["caveats"].as_array().unwrap().is_empty());
}

#[test]
fn propagation_example_respects_the_cone() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "jko",
        example("propagation_jko.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("propagation_speed"));
}

#[test]
fn resolution_sweep_shows_second_order_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "sweep",
        example("lq_identity.toml").to_str().unwrap(),
        "n_cells=200,400",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let summary =
        std::fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "{summary}");
    assert!(lines[1].starts_with("n_cells=200,200,lq_identity,"));
    assert!(lines[2].starts_with("n_cells=400,400,lq_identity,"));
    // Every reported refinement ratio is second order (close to 4).
    let text = stdout(&out);
    for line in text.lines().filter(|l| l.contains("refinement ratio")) {
        let ratio: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(ratio >= 3.0, "{line}");
    }
}

#[test]
fn speed_bound_sweep_is_monotone_and_honestly_fails_small_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "sweep",
        example("classical_limit.toml").to_str().unwrap(),
        "c=1,10,100",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    // The c = 1 and c = 10 points genuinely miss the 1e-3 tolerance.
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let summary =
        std::fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let margins: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(margins.len(), 3, "{summary}");
    // Margins are negated distances: they must increase toward zero.
    assert!(margins[0] < margins[1] && margins[1] < margins[2], "{margins:?}");
    assert!(summary.contains("c=100,100,classical_limit"));
    assert!(summary.lines().nth(3).unwrap().contains("Pass"), "{summary}");
}

#[test]
fn tabulated_profile_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = fluxlim(&[
        "solve",
        example("tabulated.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(dir.path().join("steps.csv").is_file());
}

#[test]
fn reruns_of_the_binary_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = fluxlim(&[
            "solve",
            example("gibbs_fixed_point.toml").to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let bytes_a = std::fs::read(a.join(&name)).unwrap();
        let bytes_b = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name:?} differs between reruns");
    }
}
