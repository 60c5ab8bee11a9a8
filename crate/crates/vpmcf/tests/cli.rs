use std::path::Path;
use std::process::{Command, Output};

fn vpmcf(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vpmcf"));
    cmd.args(args);
    match out {
        Some(dir) => cmd.env("VPMCF_OUTPUT_DIR", dir),
        None => cmd.env_remove("VPMCF_OUTPUT_DIR"),
    };
    cmd.output().expect("spawn vpmcf")
}

fn scenario(name: &str) -> String {
    format!("{}/../../scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn oracle_sphere_prints_closed_forms() {
    let o = vpmcf(&["oracle", "sphere", "--radius", "1", "--n", "2"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("area 12.566371"), "{text}");
    assert!(text.contains("volume 4.188790"), "{text}");
}

#[test]
fn oracle_refine_dumbbell_reports_order() {
    let o = vpmcf(
        &["oracle", "refine", "--scenario", "dumbbell", "--length", "6", "--neck", "0.05", "--nodes", "101"],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("refined volume")).expect("volume line");
    assert!(line.contains("order"), "{line}");
}

#[test]
fn unknown_shape_and_bad_flags_exit_one() {
    assert_eq!(vpmcf(&["oracle", "torus"], None).status.code(), Some(1));
    assert_eq!(vpmcf(&["oracle", "refine", "--scenario", "torus"], None).status.code(), Some(1));
    assert_eq!(vpmcf(&["run"], None).status.code(), Some(1));
    assert_eq!(vpmcf(&["--help"], None).status.code(), Some(0));
}

#[test]
fn zero_horizon_exits_one_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = vpmcf(
        &["run", "--config", &scenario("hemisphere"), "--set", "horizon=0"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["exit_code"], 1);
    assert!(diag["message"].as_str().unwrap().contains("horizon"));
}

#[test]
fn invalid_shape_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = vpmcf(
        &["run", "--config", &scenario("perturbed_hemisphere"), "--set", "scenario.amplitude=2.0"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(dir.path().join("diagnostic.json").exists());
}

#[test]
fn hemisphere_run_writes_monotone_area_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = vpmcf(&["run", "--config", &scenario("hemisphere")], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,step,area,volume,h,sup_H_minus_h,l2_H_minus_h,max_u,max_u_tilde,curve_length,d,e,max_kp_ratio,max_A2,min_cyl_u_alpha_sqrt2,v_tilde_max_cap_sqrt2,H_at_sqrt2_cut,shape_dev,converged"
    );
    let areas: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(!areas.is_empty());
    assert!(areas.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(!dir.path().join("diagnostic.json").exists());
}

#[test]
fn plain_flow_dumbbell_names_the_neck() {
    let dir = tempfile::tempdir().unwrap();
    let o = vpmcf(&["run", "--config", &scenario("dumbbell_mcf")], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["reason"], "pinch_detected");
    let node = diag["neck_node"].as_u64().unwrap();
    assert!(node > 0 && node < 399);
}

#[test]
fn validate_reports_checks() {
    let o = vpmcf(&["validate", "--config", &scenario("perturbed_sphere")], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simple"));
}

#[test]
fn set_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = vpmcf(
        &[
            "run",
            "--config",
            &scenario("perturbed_hemisphere"),
            "--set",
            "horizon=0.001",
            "--set",
            "scenario.nodes=64",
            "--set",
            "emit_svg=true",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["final_state"]["nodes"], 64);
    assert!(dir.path().join("profile_00000000.svg").exists());
}
