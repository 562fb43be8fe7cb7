//! End-to-end tests of the `dicke` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dicke(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn simulate_fig2_ends_on_bare_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&dicke(&["simulate", "--preset", "fig2"], dir.path()));
    assert!((f(&s["final_energy"]) + 0.2).abs() < 1e-4);
    assert!(f(&s["final_energy"]) > f(&s["ground_energy"]));
    assert!(s["target"]["label"].as_str().unwrap().starts_with("bare fixed point"));
    assert_eq!(s["converged"], Value::Bool(true));

    let csv = fs::read_to_string(dir.path().join("fig2_trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q,p,sx,sy,sz,energy"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 7);
    // 17 significant digits, '.' separator.
    assert!(first[1].contains('.') && first[1].contains('e'));
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig2_trajectory.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["params"]["g"], Value::from(0.46));
    assert!(dir.path().join("fig2_energy.csv").exists());
    assert!(dir.path().join("fig2_summary.json").exists());
}

#[test]
fn simulate_rotated_and_dressed_reach_minimum() {
    for preset in ["fig3", "dressed"] {
        let dir = tempfile::tempdir().unwrap();
        let s = json(&dicke(&["simulate", "--preset", preset], dir.path()));
        assert!(
            (f(&s["final_energy"]) - f(&s["ground_energy"])).abs() < 1e-6,
            "{preset}"
        );
        assert!(s["target"]["label"]
            .as_str()
            .unwrap()
            .starts_with("superradiant minimum"));
    }
}

#[test]
fn outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "simulate",
        "--preset",
        "fig2",
        "--seed",
        "42",
        "--set",
        "solver.t_end=50",
    ];
    let (oa, ob) = (dicke(&args, a.path()), dicke(&args, b.path()));
    assert!(oa.status.success() && ob.status.success());
    for name in ["fig2_trajectory.csv", "fig2_energy.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let strip = |o: &Output| {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v.as_object_mut().unwrap().remove("files");
        v["config"]["output"].as_object_mut().unwrap().remove("dir");
        v
    };
    assert_eq!(strip(&oa), strip(&ob));
    let oc = dicke(
        &[
            "simulate",
            "--preset",
            "fig2",
            "--seed",
            "43",
            "--set",
            "solver.t_end=50",
        ],
        a.path(),
    );
    assert_ne!(strip(&oa)["initial_state"], strip(&oc)["initial_state"]);
}

#[test]
fn diagonalize_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&dicke(&["diagonalize", "--preset", "fig2", "--check"], dir.path()));
    assert_eq!(s["checks"]["passed"], Value::Bool(true));
    assert!(f(&s["invariants"]["normalization_error"]) < 1e-12);
    assert!(f(&s["diagonalization"]["eps1"]) < f(&s["diagonalization"]["eps2"]));
}

#[test]
fn diagonalize_normal_phase_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = dicke(
        &["diagonalize", "--preset", "fig2", "--set", "params.eps=0.5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("normal phase"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dicke(&["simulate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        dicke(&["simulate", "--preset", "nope"], dir.path()).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[params]\nomega = \"one\"\n").unwrap();
    let o = dicke(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = dicke(
        &["simulate", "--preset", "fig2", "--set", "initial.sigma=-1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = dicke(
        &["simulate", "--preset", "fig2", "--set", "solver.max_steps=10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_layers_over_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[params]\nkappa1 = 0.0\nkappa2 = 0.0\n[output]\nprefix = \"layered\"\n",
    )
    .unwrap();
    let s = json(&dicke(
        &["fixed-points", "--preset", "fig2", "--config", cfg.to_str().unwrap()],
        dir.path(),
    ));
    assert_eq!(s["config"]["params"]["g"], Value::from(0.46));
    let pts = s["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    let minima = s["superradiant_minima"].as_array().unwrap();
    // Without damping the tilted points share S_z with the minima.
    for p in &pts[1..] {
        assert!((f(&p["analytic"]["sz"]) - f(&minima[0]["sz"])).abs() < 1e-12);
    }
    assert!(dir.path().join("layered_fixed_points.json").exists());
}

#[test]
fn fixed_points_fig2_and_normal_phase() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&dicke(&["fixed-points", "--preset", "fig2"], dir.path()));
    let pts = s["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    for p in pts {
        assert!((f(&p["analytic_energy"]) + 0.2).abs() < 1e-12);
        assert!(f(&p["refinement_shift"]) < 1e-10);
    }
    let s = json(&dicke(
        &["fixed-points", "--preset", "fig2", "--set", "params.g=0.2"],
        dir.path(),
    ));
    assert_eq!(s["points"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_grid_columns() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&dicke(
        &[
            "sweep",
            "--preset",
            "fig2",
            "--g-range",
            "0.3,0.6,31",
            "--eps-range",
            "-1,0.5,4",
        ],
        dir.path(),
    ));
    assert_eq!(s["cells"], Value::from(124));
    let csv = fs::read_to_string(dir.path().join("fig2_sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    for r in &rows {
        let (g, eps) = (r[0].parse::<f64>().unwrap(), r[1].parse::<f64>().unwrap());
        if eps > 0.0 {
            assert_eq!(r[2], "normal");
        }
        if eps == -1.0 {
            // g_c = sqrt(E_Z / (-eps S)) = sqrt(0.2).
            let gc: f64 = 0.2f64.sqrt();
            assert_eq!(r[2] == "superradiant", g > gc, "g = {g}");
            assert!((r[5].parse::<f64>().unwrap() - gc).abs() < 1e-15);
            assert!((r[6].parse::<f64>().unwrap() - 0.449_534).abs() < 1e-6);
        }
    }
    assert!(dir.path().join("fig2_sweep.csv.meta.json").exists());
}

#[test]
fn oracle_truncation_abort_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = dicke(
        &[
            "oracle",
            "--preset",
            "oracle",
            "--set",
            "oracle.truncation.n_c=2",
            "--set",
            "oracle.truncation.n_b=2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn oracle_without_channels_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&dicke(
        &[
            "oracle",
            "--preset",
            "oracle",
            "--set",
            "oracle.channels={ kind = \"none\" }",
            "--set",
            "oracle.t_end=3",
        ],
        dir.path(),
    ));
    let e: Vec<f64> = s["report"]["series"]["energy"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    assert!(e.iter().all(|v| (v - e[0]).abs() < 1e-9));
}
