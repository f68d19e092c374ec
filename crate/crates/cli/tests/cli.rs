use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use wavescope_cli::{load_config, CommandKind, Overrides};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.json"))
}

fn wavescope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavescope")).args(args).output().expect("binary runs")
}

fn run_config(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    wavescope(&args)
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn coeffs_example_reproduces_the_three_frame_sums() {
    let tmp = TempDir::new().unwrap();
    let o = run_config("coeffs", &preset("coeffs"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = &report(tmp.path())["results"];
    let get = |k: &str| r[k].as_f64().unwrap();
    assert!((get("i3_permutation_normalised") - 2.0).abs() < 1e-12);
    assert!((get("i3_permutation_sum").abs() - 2.0).abs() < 1e-12);
    assert!((get("sum_identity") + 1.0).abs() < 1e-12);
    assert!((get("i3_closed_form") - 1.0).abs() < 1e-12);
}

#[test]
fn empty_config_is_a_schema_error_naming_missing_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &json!({}));
    let o = run_config("coeffs", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("/version"), "{err}");
    assert!(err.contains("/frames"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn mistyped_field_reports_its_json_pointer() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &json!({"version": 1, "frames": {"phi": "wide", "theta": 1.0}}),
    );
    let o = run_config("coeffs", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/frames/phi"), "{}", stderr(&o));
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run_config("dn", &preset("dn"), dir, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["report.json", "dn.csv", "dn.svg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn dn_csv_has_one_row_per_time_sample_and_boundary_node() {
    let tmp = TempDir::new().unwrap();
    let o = run_config("dn", &preset("dn"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("dn.csv")).unwrap();
    let lines: Vec<&str> = csv.split("\r\n").filter(|l| !l.is_empty()).collect();
    assert_eq!(lines[0], "t,boundary_index,value");
    let r = &report(tmp.path())["results"];
    let samples = r["time_samples"].as_u64().unwrap() as usize;
    let nodes = r["boundary_nodes"].as_u64().unwrap() as usize;
    assert_eq!(nodes, 2);
    assert_eq!(lines.len() - 1, samples * nodes);
    let svg = fs::read_to_string(tmp.path().join("dn.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), nodes);
}

#[test]
fn reports_embed_schema_version_and_config_hash() {
    let tmp = TempDir::new().unwrap();
    let o = run_config("frames", &preset("frames"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(tmp.path());
    assert_eq!(r["schema"], "wavescope-report");
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    let artifacts: Vec<&str> = r["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in artifacts {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
}

#[test]
fn seed_override_changes_the_hash() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config("coeffs", &preset("coeffs"), &a, &[]).status.success());
    assert!(run_config("coeffs", &preset("coeffs"), &b, &["--seed", "7"]).status.success());
    assert_ne!(report(&a)["config_hash"], report(&b)["config_hash"]);
    assert_eq!(report(&b)["seed"], 7);
}

fn small_gauge_check(factor: f64) -> Value {
    json!({
        "version": 1,
        "medium": {"preset": "minkowski", "betas": [0.5]},
        "gauge": {"amplitude": 0.1},
        "source": {"amplitude": 1e-3, "start": 0.0, "width": 1.6},
        "grids": {"nx": [100, 200, 400], "t_end": 0.8, "courant": 0.5},
        "control": {"h_perturbation": 0.1, "factor": factor}
    })
}

#[test]
fn gauge_check_fits_second_order_and_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_gauge_check(10.0));
    let out = tmp.path().join("out");
    let o = run_config("gauge-check", &cfg, &out, &["--strict"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let order = report(&out)["results"]["discrepancy"]["order"]["order"].as_f64().unwrap();
    assert!((order - 2.0).abs() <= 0.3, "order {order}");
    let csv = fs::read_to_string(out.join("discrepancies.csv")).unwrap();
    assert!(csv.starts_with("case,nx,dx,dt,absolute,relative\r\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let svg = fs::read_to_string(out.join("discrepancies.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn failing_assertion_exits_nonzero_and_still_writes_the_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_gauge_check(1e12));
    let out = tmp.path().join("out");
    let o = run_config("gauge-check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("control_over_gauged"), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert_eq!(r["failures"], json!(["control_over_gauged"]));
}

#[test]
fn grid_refine_multiplies_resolution() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config("dn", &preset("dn"), &a, &[]).status.success());
    assert!(run_config("dn", &preset("dn"), &b, &["--grid-refine", "2"]).status.success());
    let samples = |d: &Path| report(d)["results"]["time_samples"].as_u64().unwrap();
    assert_eq!(samples(&b) - 1, 2 * (samples(&a) - 1));
}

#[test]
fn every_preset_parses_for_its_command() {
    for kind in CommandKind::ALL {
        let config = load_config(kind, &preset(kind.name()), Overrides::default())
            .unwrap_or_else(|e| panic!("{}: {e}", kind.name()));
        assert_eq!(config.command, kind);
        assert_eq!(config.version, 1);
    }
}
