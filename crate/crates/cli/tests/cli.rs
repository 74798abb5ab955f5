use std::path::Path;
use std::process::{Command, Output};

fn sirperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sirperc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SWEEP: &str = r#"
experiment = "square"
trials = 4
seed = 9

[grid]
lambda = [40, 90]

[params]
cells_x = 8
cells_y = 8
model.r0 = 0.5
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sample_is_seeded() {
    let a = sirperc(&["sample", "--intensity", "50", "--seed", "4"]);
    let b = sirperc(&["sample", "--intensity", "50", "--seed", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("x,y\n"));
    assert!(text.lines().count() > 10);
}

#[test]
fn build_graph_from_points_file() {
    let dir = tempfile::tempdir().unwrap();
    let pts = write(dir.path(), "pts.csv", "x,y\n0,0\n1,0\n3,0\n");
    let o = sirperc(&["build-graph", "--points", &pts, "--threshold", "1", "--alpha", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let edges: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(edges.len(), 3);
    assert!(edges[0].starts_with("0 1 "));
}

#[test]
fn sweep_csv_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let one = sirperc(&["sweep", "--config", &cfg, "--workers", "1"]);
    let three = sirperc(&["sweep", "--config", &cfg, "--workers", "3"]);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, three.stdout);
    assert!(stdout(&one).starts_with("lambda,trials,boundary_reached,boundary_reached_se,"));
}

#[test]
fn sweep_writes_json_file_and_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let out = dir.path().join("r.json");
    let o = sirperc(&[
        "sweep",
        "--config",
        &cfg,
        "--set",
        "trials=2",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["spec"]["trials"], 2);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "experiment = \"square\"\n[grid]\nlambda = []\n");
    assert_eq!(sirperc(&["sweep", "--config", &bad]).status.code(), Some(2));
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let unwritable = dir.path().join("missing").join("out.csv");
    let o = sirperc(&["sweep", "--config", &cfg, "--out", unwritable.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    // g^-1(M T) undefined: M T above g(0).
    let o = sirperc(&["bounds", "--m-cap", "100", "--threshold", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(sirperc(&["sample"]).status.code(), Some(2));
}

#[test]
fn bounds_and_hex_analytic() {
    let o = sirperc(&["bounds", "--lambda", "100"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("lambda,M,T,K,p_A,p1,p2,q,series_value,subcritical_series\n"));
    let o = sirperc(&["bounds", "--interval"]);
    assert_eq!(stdout(&o), "lambda_lo,lambda_hi\n");
    let o = sirperc(&["hex", "--analytic", "--rho", "0.995", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["interval"].is_array());
}

#[test]
fn square_hex_color_outputs() {
    let o = sirperc(&["square", "--lambda", "60", "--cells-x", "6", "--cells-y", "6"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 6 * 5 * 2);
    let o = sirperc(&["hex", "--lambda", "5", "--cols", "5", "--rows", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("face_q,face_r,closed,"));
    let o = sirperc(&["color", "--n", "200", "--c", "2", "--trials", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    let o = sirperc(&["color", "--n", "200", "--c", "2", "--assignment"]);
    assert_eq!(stdout(&o).lines().count(), 201);
}
