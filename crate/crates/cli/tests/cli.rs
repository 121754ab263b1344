use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn tbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbt")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn csv_rows(out: &Output) -> Vec<Vec<f64>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const BASELINE: &str =
    r#"{"a1": 8, "a2": -2.3, "beta": 1, "eta": 0.41, "gamma": 0.46, "mu": 0.44, "tau": 0.002, "T_total": 100}"#;

#[test]
fn equilibria_from_a_parameter_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(&path, BASELINE).unwrap();
    let out = tbt(&["--params", path.to_str().unwrap(), "equilibria"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert!((v["R0"].as_f64().unwrap() - 2.2624).abs() < 1e-4);
    assert_eq!(v["E0"]["stability"], "saddle");
    assert!(v["E1"].is_object());
    // b and b_hat default to mu
    assert_eq!(v["params"]["b"], 0.44);
    assert!(v["E1_newton_shift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn subthreshold_has_no_endemic_equilibrium() {
    let v = json(&tbt(&["equilibria", "--set", "beta=0.3"]));
    assert!(v["E1"].is_null());
    assert_eq!(v["E0"]["stability"], "stable-node");
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"a1\": 8,").unwrap();
    let out = tbt(&["--params", bad.to_str().unwrap(), "equilibria"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        tbt(&["--params", missing.to_str().unwrap(), "equilibria"])
            .status
            .code(),
        Some(1)
    );
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, BASELINE.replace("\"T_total\"", "\"zeta\": 1, \"T_total\"")).unwrap();
    assert_eq!(
        tbt(&["--params", unknown.to_str().unwrap(), "equilibria"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn validation_errors_exit_with_two() {
    assert_eq!(tbt(&["equilibria", "--set", "T_total=0"]).status.code(), Some(2));
    assert_eq!(tbt(&["equilibria", "--set", "beta"]).status.code(), Some(2));
    assert_eq!(tbt(&["tbt", "--set", "tau=0"]).status.code(), Some(2));
    assert_eq!(tbt(&["simulate", "--x0", "0,0,0"]).status.code(), Some(2));
    assert_eq!(
        tbt(&["hopf", "--param", "beta", "--from", "0.6", "--to", "0.6"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn range_warnings_do_not_block() {
    let out = tbt(&["equilibria", "--set", "beta=1.5"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(!json(&out)["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_writes_a_trajectory() {
    let out = tbt(&["simulate", "--t-end", "100"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("t,S,I,U\n"));
    let rows = csv_rows(&out);
    assert!(rows.len() > 10);
    assert_eq!(rows.last().unwrap()[0], 100.0);
    // 12 significant digits
    let cell = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(cell.split('e').next().unwrap().len(), 13);
}

#[test]
fn zero_length_span_echoes_the_initial_state() {
    let out = tbt(&["simulate", "--x0", "60,1.5,0.25", "--t-end", "0"]);
    assert!(out.status.success());
    assert_eq!(csv_rows(&out), vec![vec![0.0, 60.0, 1.5, 0.25]]);
}

#[test]
fn disease_free_plane_stays_clean() {
    let out = tbt(&["simulate", "--x0", "40,0,3", "--t-end", "200"]);
    assert!(csv_rows(&out).iter().all(|r| r[2].abs() <= 1e-10));
}

#[test]
fn full_system_conserves_population() {
    let out = tbt(&["simulate", "--full", "--t-end", "100"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("t,S,I,U,P\n"));
    for r in csv_rows(&out) {
        assert!((r[1] + r[2] + r[3] + r[4] - 100.0).abs() < 1e-8);
    }
}

#[test]
fn events_are_flagged() {
    let out = tbt(&["simulate", "--t-end", "100", "--events"]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("t,S,I,U,event\n"));
    let rows = csv_rows(&out);
    let events: Vec<&Vec<f64>> = rows.iter().filter(|r| r[4] == 1.0).collect();
    // one upward crossing of I = I1 per period of about 20.4
    assert!((4..=5).contains(&events.len()), "{} events", events.len());
    let i1 = 1.42930025916;
    assert!(events.iter().all(|r| (r[2] - i1).abs() < 1e-8));
    assert!(rows.windows(2).all(|w| w[1][0] >= w[0][0]));
}

#[test]
fn failed_integration_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = tbt(&["simulate", "--max-steps", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 + 1);
    assert!(text.lines().last().unwrap().starts_with("# status: failed"));
}

#[test]
fn missing_endemic_equilibrium_exits_with_four() {
    assert_eq!(tbt(&["simulate", "--set", "beta=0.3"]).status.code(), Some(4));
    assert_eq!(
        tbt(&["simulate", "--set", "beta=0.3", "--x0", "1,1,1", "--events"])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn sweep_flags_the_transcritical_point() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("tc.json");
    let out = tbt(&[
        "sweep",
        "--param",
        "beta",
        "--from",
        "0.40",
        "--to",
        "0.50",
        "--steps",
        "101",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param,R0,dfe_class,S1,I1,U1,re_l1,im_l1,re_l2,im_l2,re_l3,im_l3,e1_class,d0_sign"
    );
    let classes: Vec<(f64, String)> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[2].to_string())
        })
        .collect();
    assert_eq!(classes.len(), 101);
    let flip = classes.windows(2).position(|w| w[0].1 != w[1].1).unwrap();
    assert!(classes[flip].0 <= 0.442 && classes[flip + 1].0 >= 0.442);
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["found"], true);
    assert!((v["transcritical"]["critical_value"].as_f64().unwrap() - 0.442).abs() < 1e-10);
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let args = ["sweep", "--param", "tau", "--from", "0", "--to", "1", "--steps", "57"];
    let par = tbt(&args);
    let mut seq_args = args.to_vec();
    seq_args.push("--sequential");
    assert_eq!(par.stdout, tbt(&seq_args).stdout);
}

#[test]
fn hopf_found_and_not_found() {
    let v = json(&tbt(&["hopf", "--param", "beta", "--from", "0.52", "--to", "0.7"]));
    assert_eq!(v["found"], true);
    assert!((v["result"]["value"].as_f64().unwrap() - 0.5605197).abs() < 1e-6);
    let out = tbt(&["hopf", "--param", "gamma", "--from", "0.3", "--to", "0.8"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["found"], false);
    assert_eq!(v["result"]["reason"], "no-sign-change");
}

#[test]
fn cycle_on_stable_regimes_is_not_found() {
    for beta in ["0.5", "0.55"] {
        let out = tbt(&["cycle", "--set", &format!("beta={beta}")]);
        assert!(out.status.success());
        let v = json(&out);
        assert_eq!(v["found"], false, "beta = {beta}");
        assert_eq!(v["result"]["reason"], "converges-to-equilibrium");
    }
    let v = json(&tbt(&["cycle", "--set", "beta=0.4"]));
    assert_eq!(v["found"], false);
    assert_eq!(v["result"]["reason"], "no-endemic-equilibrium");
}

#[test]
fn cycle_at_baseline() {
    let v = json(&tbt(&["cycle"]));
    assert_eq!(v["found"], true);
    assert!((v["result"]["period"].as_f64().unwrap() - 20.4416454582).abs() < 1e-6);
    assert_eq!(v["section"]["normal"], serde_json::json!([0.0, 1.0, 0.0]));
}

#[test]
fn cycle_ramp_reports_rows_and_termination() {
    let v = json(&tbt(&[
        "cycle", "--ramp", "beta", "--from", "1.0", "--to", "0.55", "--steps", "10",
    ]));
    assert_eq!(v["found"], true);
    let rows = v["ramp"]["rows"].as_array().unwrap();
    assert!(rows.len() >= 8);
    assert_eq!(v["ramp"]["terminated"]["reason"], "converges-to-equilibrium");
}

#[test]
fn tbt_and_normal_form_reports() {
    let v = json(&tbt(&["tbt"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["params"]["gamma"], 0.0);
    let eig = v["diagnostics"]["eigenvalues"].as_array().unwrap();
    let mut re: Vec<f64> = eig.iter().map(|z| z[0].as_f64().unwrap()).collect();
    re.sort_by(f64::total_cmp);
    assert_eq!(re, vec![-1.0, 0.0, 0.0]);

    let v = json(&tbt(&["normal-form"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["report"]["a2_is_zero"], true);
    assert!(v["report"]["b2_coeff"].as_f64().unwrap() > 0.0);
    assert!(v["report"]["fit"].is_object());
    let v = json(&tbt(&["normal-form", "--no-fit"]));
    assert!(v["report"]["fit"].is_null());
    // away from the double-zero point the Jordan structure is absent
    assert_eq!(tbt(&["normal-form", "--as-given"]).status.code(), Some(3));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.json");
    let out = tbt(&["equilibria", "--out", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    assert_eq!(fs::read(&path).unwrap(), tbt(&["equilibria"]).stdout);
}
