//! End-to-end checks of the logstep binary: flag parsing, file outputs,
//! and the documented exit codes (0 ok, 2 config, 3 diverged, 4 bound).

use std::path::Path;
use std::process::{Command, Output};

use logstep::bounds::{theorem1_bound, TheoremInputs};
use logstep::schedules::{ScheduleKind, StepSchedule};
use logstep::trace::RunTrace;

fn logstep_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_logstep"));
    // Tests must not pick up a data directory from the environment.
    cmd.env_remove("LOGSTEP_DATA_DIR");
    cmd
}

fn run_args(args: &[&str]) -> Output {
    logstep_cmd()
        .args(args)
        .output()
        .expect("binary launches")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn schedules_dump_matches_the_library_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let output = run_args(&[
        "schedules",
        "dump",
        "--kind",
        "logarithmic",
        "--eta0",
        "0.5",
        "--T",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "global_epoch,cycle,t,eta");
    assert_eq!(lines.len(), 11);

    let table = StepSchedule::new(ScheduleKind::Logarithmic, 0.5, 10)
        .unwrap()
        .table()
        .unwrap();
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        assert_eq!(fields[1], "0");
        assert_eq!(fields[2], (i + 1).to_string());
        let eta: f64 = fields[3].parse().unwrap();
        assert_eq!(eta.to_bits(), table[i].to_bits(), "epoch {}", i + 1);
    }
    assert_eq!(table[0], 0.5);
    assert_eq!(table[9], 0.0);

    // Without --out the same CSV goes to stdout.
    let piped = run_args(&[
        "schedules",
        "dump",
        "--kind",
        "logarithmic",
        "--eta0",
        "0.5",
        "--T",
        "10",
    ]);
    assert_exit(&piped, 0);
    assert_eq!(String::from_utf8_lossy(&piped.stdout), text);
}

#[test]
fn schedules_dump_rejects_plateau() {
    let output = run_args(&[
        "schedules", "dump", "--kind", "plateau", "--eta0", "0.5", "--T", "10", "--out",
        "/tmp/never-written.csv",
    ]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("plateau"), "{stderr}");
}

#[test]
fn dist_compare_emits_normalized_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dist.csv");
    let output = run_args(&[
        "dist",
        "compare",
        "--kinds",
        "logarithmic,cosine",
        "--eta0",
        "0.5",
        "--T",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,p_logarithmic,p_cosine");
    assert_eq!(lines.len(), 41);
    let mut sums = [0.0f64; 2];
    let mut rows = Vec::new();
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let p_log: f64 = fields[1].parse().unwrap();
        let p_cos: f64 = fields[2].parse().unwrap();
        sums[0] += p_log;
        sums[1] += p_cos;
        rows.push((p_log, p_cos));
    }
    assert!((sums[0] - 1.0).abs() < 1e-12);
    assert!((sums[1] - 1.0).abs() < 1e-12);
    // Late (nonterminal) epochs: the logarithmic tail carries more mass.
    for t in [38, 39] {
        let (p_log, p_cos) = rows[t - 1];
        assert!(p_log > p_cos, "t={t}: {p_log} vs {p_cos}");
    }
}

#[test]
fn bounds_verify_reports_all_horizons() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let output = run_args(&[
        "bounds",
        "verify",
        "--eta0",
        "0.25",
        "--T-list",
        "5,10,100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let reports = doc.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for report in reports {
        assert_eq!(report["lower_holds"], serde_json::json!(true));
        assert_eq!(report["upper_holds"], serde_json::json!(true));
    }
}

#[test]
fn bounds_eval_agrees_with_the_library() {
    let output = run_args(&[
        "bounds",
        "eval",
        "--which",
        "theorem1",
        "--params",
        r#"{"c":5.0,"big_l":4.0,"sigma":1.0,"delta1":10.0,"horizon":1000}"#,
    ]);
    assert_exit(&output, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    let expected = theorem1_bound(&TheoremInputs {
        c: 5.0,
        big_l: 4.0,
        sigma: 1.0,
        delta1: 10.0,
        horizon: 1000,
        cycles: 1,
        delta1_max: 0.0,
    })
    .unwrap();
    assert_eq!(doc["bound"].as_f64().unwrap(), expected);

    // Omitting --params reads the JSON from stdin.
    let mut child = logstep_cmd()
        .args(["bounds", "eval", "--which", "theorem1"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    std::io::Write::write_all(
        child.stdin.as_mut().unwrap(),
        br#"{"c":5.0,"big_l":4.0,"sigma":1.0,"delta1":10.0,"horizon":1000}"#,
    )
    .unwrap();
    let piped = child.wait_with_output().unwrap();
    assert_exit(&piped, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&piped.stdout)).unwrap();
    assert_eq!(doc["bound"].as_f64().unwrap(), expected);

    let bad = run_args(&["bounds", "eval", "--which", "cor1", "--params", "{}"]);
    assert_exit(&bad, 2);
}

fn quadratic_run(out_dir: &Path, eta0: &str, horizon: &str, kind: &str, seeds: &str) -> Output {
    run_args(&[
        "run",
        "--problem",
        "noisy_quadratic",
        "--method",
        "sgd",
        "--kind",
        kind,
        "--eta0",
        eta0,
        "--T",
        horizon,
        "--seeds",
        seeds,
        "--out",
        out_dir.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_traces_and_reruns_byte_identically() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert_exit(&quadratic_run(dir_a.path(), "0.02", "12", "logarithmic", "2"), 0);
    assert_exit(&quadratic_run(dir_b.path(), "0.02", "12", "logarithmic", "2"), 0);

    for seed in 0..2 {
        let name = format!("sgd+logarithmic_seed{seed}.csv");
        let a = std::fs::read(dir_a.path().join(&name)).unwrap();
        let b = std::fs::read(dir_b.path().join(&name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between reruns");
    }
    assert!(dir_a.path().join("summary.json").is_file());
    assert!(dir_a.path().join("config.json").is_file());
    assert!(dir_a.path().join("sgd+logarithmic_seed0.dat").is_file());
}

#[test]
fn run_diverging_setup_exits_three() {
    // Constant step 0.5 on curvature 10 doubles the error every epoch and
    // crosses the divergence threshold well before epoch 20.
    let dir = tempfile::tempdir().unwrap();
    let output = quadratic_run(dir.path(), "0.5", "20", "constant", "2");
    assert_exit(&output, 3);
    let report = run_args(&["report", dir.path().to_str().unwrap()]);
    assert_exit(&report, 3);
}

#[test]
fn report_strict_passes_a_sound_run_and_flags_a_doctored_one() {
    let dir = tempfile::tempdir().unwrap();
    // eta0 = 0.02 on L = 10 gives c = 5 > 1: covered by the guarantee.
    assert_exit(&quadratic_run(dir.path(), "0.02", "30", "logarithmic", "2"), 0);

    let strict = |d: &Path| {
        run_args(&["report", d.to_str().unwrap(), "--strict"])
    };
    let output = strict(dir.path());
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("satisfied"), "{stdout}");

    // Inflate the recorded gradient norms far past the bound: strict mode
    // must notice and fail with the bound-violation exit code.
    for seed in 0..2 {
        let path = dir.path().join(format!("sgd+logarithmic_seed{seed}.csv"));
        let mut trace = RunTrace::read_csv(&path).unwrap();
        for row in &mut trace.rows {
            row.grad_norm_sq *= 1e9;
        }
        trace.write_csv(&path).unwrap();
    }
    let output = strict(dir.path());
    assert_exit(&output, 4);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("VIOLATED"), "{stdout}");
}

#[test]
fn run_with_config_file_executes_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("experiment.json");
    std::fs::write(
        &config_path,
        r#"{
  "name": "cli_smoke",
  "problem": {"name": "noisy_quadratic", "dim": 4, "eigmin": 1.0, "eigmax": 4.0, "sigma": 0.3},
  "seeds": 2,
  "variants": [
    {"label": "log", "run": {"schedule": {"kind": "logarithmic", "eta0": 0.05, "horizon": 10}}},
    {"label": "cos", "run": {"schedule": {"kind": "cosine", "eta0": 0.05, "horizon": 10}}}
  ]
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("results");
    let output = run_args(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    for name in [
        "log_seed0.csv",
        "log_seed1.csv",
        "cos_seed0.csv",
        "cos_seed1.csv",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    // Unknown fields are config errors with exit code 2.
    std::fs::write(&config_path, r#"{"name": "x", "seeds": 1, "wat": true}"#).unwrap();
    let output = run_args(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn fashion_without_data_dir_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_args(&[
        "run",
        "--problem",
        "mlp_fashion",
        "--kind",
        "logarithmic",
        "--eta0",
        "0.1",
        "--T",
        "5",
        "--seeds",
        "2",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("data directory"), "{stderr}");
}

#[test]
fn grid_emits_a_ranked_table_with_the_winner_first() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let output = run_args(&[
        "grid",
        "--problem",
        "noisy_quadratic",
        "--kind",
        "constant",
        "--T",
        "15",
        "--seeds",
        "2",
        "--coarse",
        "0.01,0.05,0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let ranked = doc["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 3);
    assert_eq!(
        doc["best_eta0"].as_f64().unwrap(),
        ranked[0]["eta0"].as_f64().unwrap()
    );
    let losses: Vec<f64> = ranked
        .iter()
        .filter_map(|p| p["mean_val_loss"].as_f64())
        .collect();
    assert!(losses.windows(2).all(|w| w[0] <= w[1]), "{losses:?}");
}
