use std::fs;
use std::path::Path;

use serde_json::Value;
use stopgame::cli::{self, EXIT_CHECK_FAILED, EXIT_OK, EXIT_REJECTED, EXIT_USAGE};
use stopgame::models::{model_to_json, save_model};
use stopgame::ModelBuilder;

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("stopgame").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn two_state_model(path: &Path) {
    let mut b = ModelBuilder::with_action_counts(2, 2, 2, 1.0);
    b.rate_all(0, 1, 1.0).unwrap().rate(0, 1, 1, 1, 3.0).unwrap();
    b.rate_all(1, 0, 2.0).unwrap();
    b.reward_all(0, 1.0)
        .unwrap()
        .reward(0, 0, 1, 2.0)
        .unwrap()
        .reward_all(1, 0.5)
        .unwrap();
    b.obstacles(0, 3.0, 0.2).unwrap().obstacles(1, 0.9, 0.6).unwrap();
    save_model(&b.build().unwrap(), path).unwrap();
}

#[test]
fn queue_demo_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    assert_eq!(run(&["queue-demo", "--out", out.to_str().unwrap()]), EXIT_OK);
    for name in [
        "solution.json",
        "solution.csv",
        "plot.csv",
        "dpi_report.json",
        "saddle_report.json",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let sol = read_json(&out.join("solution.json"));
    assert_eq!(sol["u_star"].as_array().unwrap().len(), 51);
    assert!(sol["residual"].as_f64().unwrap() <= 1e-8);

    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "i,u_star,psi1,psi2,classification,phi_h0,phi_h1,psi_g0,psi_g1");
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    two_state_model(&model);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let args = [
            "verify",
            "--model",
            model.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(run(&args), EXIT_OK);
        let args = [
            "solve",
            "--model",
            model.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(run(&args), EXIT_OK);
    }
    for name in ["solution.json", "solution.csv", "dpi_report.json", "saddle_report.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn corrupted_solution_fails_verify_at_that_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out_s = out.to_str().unwrap();
    assert_eq!(
        run(&["solve", "--out", out_s, "--queue-spec", &write_spec(dir.path())]),
        EXIT_OK
    );

    let mut sol = read_json(&out.join("solution.json"));
    let u = sol["u_star"][3].as_f64().unwrap();
    sol["u_star"][3] = Value::from(u + 1.0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, sol.to_string()).unwrap();

    let code = run(&[
        "verify",
        "--queue-spec",
        &write_spec(dir.path()),
        "--solution",
        bad.to_str().unwrap(),
        "--out",
        out_s,
    ]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    let report = read_json(&out.join("dpi_report.json"));
    let states: Vec<u64> = report["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["state"].as_u64().unwrap())
        .collect();
    assert!(states.contains(&3), "{states:?}");
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["kind"], "CHECK_FAILED");
}

fn write_spec(dir: &Path) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, r#"{"s_max": 20}"#).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_rejects_touching_obstacles() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = ModelBuilder::with_action_counts(2, 1, 1, 1.0);
    b.rate_all(0, 1, 1.0).unwrap();
    b.obstacles(0, 2.0, 1.0).unwrap().obstacles(1, 1.5, 1.5).unwrap();
    let model = dir.path().join("m.json");
    fs::write(&model, model_to_json(&b.build().unwrap())).unwrap();
    let out = dir.path().join("o");

    assert_eq!(
        run(&[
            "validate",
            "--model",
            model.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        EXIT_REJECTED
    );
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["kind"], "REJECTED");
    assert_eq!(err["detail"]["violations"][0]["kind"], "obstacle_order");
    assert_eq!(err["detail"]["violations"][0]["state"], 1);
    let report = read_json(&out.join("validation.json"));
    assert_eq!(report["violations"].as_array().unwrap().len(), 1);
}

#[test]
fn simulate_reports_interval_around_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    two_state_model(&model);
    let out = dir.path().join("o");
    let args = [
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--initial",
        "0,1",
        "--paths",
        "20000",
        "--seed",
        "3",
        "--dump-paths",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(run(&args), EXIT_OK);
    let payoff = read_json(&out.join("payoff.json"));
    for est in payoff["estimates"].as_array().unwrap() {
        let (mean, se, exact) = (
            est["mean"].as_f64().unwrap(),
            est["stderr"].as_f64().unwrap(),
            est["exact"].as_f64().unwrap(),
        );
        assert!((mean - exact).abs() <= 4.0 * se.max(1e-12), "{est}");
    }
    let paths = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert!(paths.starts_with("path_id,jump_time,state,action_p1,action_p2,stop_reason"));
}

#[test]
fn bench_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&["bench", "--smax-grid", "5,10", "--out", out.to_str().unwrap()]),
        EXIT_OK
    );
    let rows = read_json(&out.join("bench.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["states"], 11);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["solve", "--out", out]), EXIT_USAGE);
    assert_eq!(
        run(&[
            "solve",
            "--tol",
            "0",
            "--queue-spec",
            &write_spec(dir.path()),
            "--out",
            out
        ]),
        EXIT_USAGE
    );
    assert_eq!(
        run(&[
            "simulate",
            "--paths",
            "0",
            "--queue-spec",
            &write_spec(dir.path()),
            "--out",
            out
        ]),
        EXIT_USAGE
    );
    assert_eq!(run(&["no-such-command"]), EXIT_USAGE);

    let missing = dir.path().join("m.json");
    fs::write(
        &missing,
        r#"{"alpha": 1, "states": 1, "actions_p1": ["a"], "actions_p2": ["b"], "rates": [], "psi1": [1]}"#,
    )
    .unwrap();
    assert_eq!(
        run(&["solve", "--model", missing.to_str().unwrap(), "--out", out]),
        EXIT_USAGE
    );
    let err = read_json(&Path::new(out).join("error.json"));
    assert_eq!(err["kind"], "PARSE_ERROR");
    assert!(err["message"].as_str().unwrap().contains("psi2"));
}

#[test]
fn json_only_format_skips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let code = run(&[
        "solve",
        "--queue-spec",
        &write_spec(dir.path()),
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.join("solution.json").exists());
    assert!(!out.join("solution.csv").exists());
}
