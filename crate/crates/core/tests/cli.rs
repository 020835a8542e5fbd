use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wbl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbl"))
        .current_dir(dir)
        .env_remove("WBL_SEED")
        .args(args)
        .output()
        .expect("wbl runs")
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

const SCALAR: &str = r#"{"params":{"n":1,"alpha":3,"a":[1],"b":[0],"x0":[1]},"seed":7,"output_dir":"out"}"#;

#[test]
fn validate_accepts_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = wbl(dir.path(), &["validate", reference_config().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["valid"], true);
}

#[test]
fn validate_rejects_alpha_equal_to_n() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"params":{"n":2,"alpha":2,"a":[1,0,0,1],"b":[0,0,0,0],"x0":[1,0,0,1]}}"#,
    );
    let o = wbl(dir.path(), &["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha below n+1"));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"params":{"n":1,"alpha":3,"a":[1],"b":[0],"x0":[1]},"sede":1}"#);
    let o = wbl(dir.path(), &["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn joint_transform_at_zero_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    let o = wbl(
        dir.path(),
        &["transform", cfg.to_str().unwrap(), "--kind", "joint", "--v", "0", "--lambda", "0", "--y", "1.2,0.1;0.1,0.9", "--t", "1"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["value"].as_f64(), Some(1.0));
}

#[test]
fn malformed_matrix_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    let o = wbl(dir.path(), &["laplace", cfg.to_str().unwrap(), "--u", "0.1,0;0,oops", "--t", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("position 8"), "{err}");
}

#[test]
fn laplace_and_density_print_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    let c = cfg.to_str().unwrap();
    let o = wbl(dir.path(), &["laplace", c, "--u", "0", "--t", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["value"].as_f64(), Some(1.0));
    let o = wbl(dir.path(), &["density", c, "--y", "1.5", "--t", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let d = stdout_json(&o)["value"].as_f64().unwrap();
    let oracle = wishart_bridge::transforms::besq_oracle::density(3.0, 1.0, 1.5, 1.0).unwrap();
    assert!((d - oracle).abs() <= 1e-10 * oracle);
}

#[test]
fn degenerate_time_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    let o = wbl(dir.path(), &["density", cfg.to_str().unwrap(), "--y", "1", "--t", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn grid_single_point_and_oracle_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    let c = cfg.to_str().unwrap();
    let o = wbl(dir.path(), &["grid", c, "--kind", "joint", "--y", "1.3", "--t", "1"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "v_scale,lambda,value\n0,0,1\n");

    let o = wbl(
        dir.path(),
        &["grid", c, "--kind", "joint", "--v-scales", "0,0.5,1", "--lambdas", "0,0.5,2", "--y", "1.3", "--t", "1", "--csv", "grids"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(fs::read_to_string(dir.path().join("grids/grid.joint.derived.csv")).unwrap(), text);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut by_lambda: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in rows.records() {
        let r = r.unwrap();
        let (s, l, v): (f64, f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap());
        let oracle = wishart_bridge::transforms::besq_oracle::scalar_bridge(3.0, 1.0, 0.0, 1.0, 1.3, 1.0, s, l).unwrap();
        assert!((v - oracle).abs() <= 1e-8 * oracle, "s={s} l={l}: {v} vs {oracle}");
        assert!(v > 0.0 && v <= 1.0);
        match by_lambda.iter_mut().find(|(x, _)| *x == l) {
            Some((_, col)) => col.push(v),
            None => by_lambda.push((l, vec![v])),
        }
    }
    for (_, col) in by_lambda {
        assert!(col.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn simulate_dumps_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    let o = wbl(
        dir.path(),
        &["simulate", cfg.to_str().unwrap(), "--t", "1", "--steps", "20", "--paths", "3", "--dump-paths", "paths.csv", "--workers", "1"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = stdout_json(&o);
    assert_eq!(j["paths"], 3);
    let text = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,step,time,entries,min_eig"));
    assert_eq!(lines.count(), 3 * 21);
}

#[test]
fn verify_reference_suite_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    let c = cfg.to_str().unwrap();
    let a = wbl(dir.path(), &["verify", c, "--suite", "all", "--workers", "2", "--out", "a"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let b = wbl(dir.path(), &["verify", c, "--suite", "all", "--workers", "2", "--out", "b"]);
    assert_eq!(b.status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 13);
    for n in names {
        let x = fs::read(dir.path().join("a").join(&n)).unwrap();
        let y = fs::read(dir.path().join("b").join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    assert!(dir.path().join("a/variant_selection.json").exists());
}

#[test]
fn verify_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Only the printed drift functional is configured, so the run must fail.
    let cfg = write_config(
        dir.path(),
        r#"{"params":{"n":1,"alpha":5,"a":[1],"b":[0],"x0":[1]},"seed":3,
            "experiments":[{"name":"printed-only","kind":"martingale","t":1,"paths":4000,"steps":50,
            "variant":"printed","grid":[{"u":[-0.5]}]}]}"#,
    );
    let o = wbl(dir.path(), &["verify", cfg.to_str().unwrap(), "--suite", "martingale"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    let o = Command::new(env!("CARGO_BIN_EXE_wbl"))
        .current_dir(dir.path())
        .env("WBL_SEED", "99")
        .args(["validate", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(stdout_json(&o)["seed"], 99);
}

#[test]
fn transform_variant_defaults_to_persisted_selection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR);
    fs::create_dir_all(dir.path().join("out")).unwrap();
    fs::write(dir.path().join("out/variant_selection.json"), r#"{"joint":"printed"}"#).unwrap();
    let o = wbl(dir.path(), &["transform", cfg.to_str().unwrap(), "--kind", "hw", "--lambda", "1", "--y", "1", "--t", "1"]);
    assert_eq!(stdout_json(&o)["variant"], "printed");
    let o = wbl(
        dir.path(),
        &["transform", cfg.to_str().unwrap(), "--kind", "hw", "--lambda", "1", "--y", "1", "--t", "1", "--variant", "derived"],
    );
    assert_eq!(stdout_json(&o)["variant"], "derived");
}
