use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bddc-lfa")).args(args).output().expect("spawn")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# bddc-lfa"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn zero_resolution_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let r = run(&["sweep", "--p", "4", "--n", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "command = \"sweep\"\np = 4\nn = 2\nresolution = 3\n").unwrap();
    let out = dir.path().join("o.csv");
    let r = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("resolution"));
    assert!(!out.exists());
}

#[test]
fn complex_histogram_is_rejected() {
    let r = run(&["histogram", "--p", "4", "--n", "2", "--mult", "fc", "--j", "1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn two_level_sweep_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let r = run(&["sweep", "--p", "4", "--n", "32", "--i", "1,2", "--bound", "upsilon1", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let t = rows(&out);
    let (h, data) = (&t[0], &t[1..]);
    assert_eq!(data.len(), 2);
    let k = col(h, "kappa");
    assert!(data[0][k].starts_with("4.442"));
    assert!(data[1][k].starts_with("2.351"));
    assert_eq!(data[0][col(h, "count")], "65536");
    assert!(!data[0][col(h, "fit")].is_empty());
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("o.csv");
    std::fs::write(&cfg, format!("command = \"sweep\"\np = 4\nn = 8\nout = {:?}\n", out.to_str().unwrap())).unwrap();
    let r = run(&["--config", cfg.to_str().unwrap(), "--n", "2"]);
    assert!(r.status.success());
    let t = rows(&out);
    assert_eq!(t[1][col(&t[0], "n")], "2");
}

#[test]
fn optimize_curve_and_best() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let r = run(&["optimize", "--p", "4", "--n", "4", "--mult", "f", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let curve = rows(&out);
    assert_eq!(curve.len() - 1, 30);
    let best = rows(&dir.path().join("curve.best.csv"));
    assert_eq!(best.len(), 2);
    let h = &best[0];
    let objective: f64 = best[1][col(h, "objective")].parse().unwrap();
    let min = curve[1..]
        .iter()
        .map(|r| r[col(&curve[0], "objective")].parse::<f64>().unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(objective, min);
}

#[test]
fn histogram_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let r = run(&["histogram", "--p", "4", "--n", "4", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let t = rows(&out);
    let c = col(&t[0], "count");
    let total: usize = t[1..].iter().map(|r| r[c].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 8 * 8 * 16);
}

#[test]
fn validate_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let r = run(&["validate", "--p", "4", "--m", "4", "--i", "1,2", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let t = rows(&out);
    assert_eq!(t.len() - 1, 2);
    let dev: f64 = t[1][col(&t[0], "max_deviation")].parse().unwrap();
    assert!(dev < 1e-8);
    assert_eq!(t[1][col(&t[0], "count")], "255");
}

#[test]
fn validate_needs_divisible_grid_for_three_levels() {
    let r = run(&["validate", "--p", "4", "--m", "6", "--j", "1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn json_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let r = run(&["sweep", "--p", "2", "--n", "2", "--format", "json", "--keep-spectra", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let item = &v["results"][0];
    assert_eq!(item["spectra"].as_object().unwrap().len(), 16);
}

#[test]
fn validate_weight_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let r = run(&[
        "validate", "--p", "2", "--m", "4", "--n", "4", "--mult", "f", "--grid", "0.5:1.5:0.5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let t = rows(&out);
    assert_eq!(t.len() - 1, 3);
    let h = &t[0];
    for row in &t[1..] {
        let kf: f64 = row[col(h, "kappa_finite")].parse().unwrap();
        let kr: f64 = row[col(h, "ritz_ratio")].parse().unwrap();
        assert!(kf >= 1.0 && kr <= kf * (1.0 + 1e-6));
        assert!(!row[col(h, "kappa_lfa")].is_empty());
    }
}
