//! End-to-end runs of the `delayfold` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn delayfold(args: &[&str]) -> Output {
    delayfold_with_config(args, None)
}

fn delayfold_with_config(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_delayfold"));
    cmd.args(args).env_remove("DELAYFOLD_CONFIG");
    if let Some(c) = config {
        cmd.env("DELAYFOLD_CONFIG", c);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Header plus rows; checks LF endings and 17 significant digits in every numeric cell.
fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect::<Vec<_>>();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    for r in &rows {
        assert_eq!(r.len(), header.len());
        for c in r.iter().filter(|c| c.contains('e') && c.parse::<f64>().is_ok()) {
            let mantissa = c.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{c}");
        }
    }
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn k0_reports_value_and_residual() {
    let o = delayfold(&["k0"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("K0 = 6.86536486929548"), "{text}");

    let o = delayfold(&["k0", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let k0 = v["value"].as_f64().unwrap();
    assert!((k0 - 6.87).abs() < 0.01);
    assert!(v["residual"].as_f64().unwrap().abs() <= 1e-12);
    assert!(v["iterations"].as_u64().unwrap() > 0);
    assert_eq!(delayfold(&["k0", "--json"]).stdout, o.stdout);
}

#[test]
fn fold_report_lists_no_failed_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fold.json");
    let o = delayfold(&["fold", "--eps", "1e-2", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = read_json(&out);
    assert!((v["k_star"].as_f64().unwrap() - 6.913_648_344_523_559).abs() < 1e-12);
    assert_eq!(v["failed_conditions"].as_array().unwrap().len(), 0);
    assert!(v["sign_ratio"].as_f64().unwrap() < 0.0);
}

#[test]
fn sweep_counts_straddle_the_fold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = delayfold(&["sweep", "--eps", "1e-3", "--k-range", "K*-1e-3:K*+1e-3:41", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(header[..3], ["k", "count", "classification"]);
    assert_eq!(rows.len(), 41);
    let counts: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert!(counts[..20].iter().all(|&c| c == "0"), "{counts:?}");
    assert_eq!(counts[20], "1");
    assert_eq!(rows[20][2], "fold");
    assert!(counts[21..].iter().all(|&c| c == "2"), "{counts:?}");
    let ks: Vec<f64> = rows.iter().map(|r| num(&r[0])).collect();
    assert!(ks.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let range = "K*-1e-4:K*+1e-4:5";
    for (p, jobs) in [(&a, "1"), (&b, "2")] {
        let o = delayfold(&["sweep", "--eps", "1e-2", "--k-range", range, "--format", "json", "--jobs", jobs, "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn lower_orbit_is_large_amplitude_and_certified() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("orbit.csv");
    let report = dir.path().join("report.json");
    let args = ["orbit", "--eps", "1e-3", "--k", "K*+1e-4", "--branch", "lower", "--samples", "500"];
    let o = delayfold(&[&args[..], &["--out", out.to_str().unwrap(), "--report", report.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["t", "p"]);
    assert_eq!(rows.len(), 500);
    let p: Vec<f64> = rows.iter().map(|r| num(&r[1])).collect();
    assert!(p.iter().cloned().fold(f64::MIN, f64::max) > 1.0 + 1e-3);
    assert!(p.iter().cloned().fold(f64::MAX, f64::min) < -1.0 - 1e-3);
    let v = read_json(&report);
    assert_eq!(v["hypotheses"]["violations"].as_array().unwrap().len(), 0);
    assert!(v["checks"]["dde_residual"].as_f64().unwrap() <= 1e-10);
    assert!(v["checks"]["max_join_jump"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn upper_orbit_near_the_fold_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("upper.json");
    let o = delayfold(&["orbit", "--eps", "1e-3", "--k", "K*+1e-5", "--branch", "upper", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert!(v["checks"]["max"].as_f64().unwrap() > 1.0 + 1e-3);
    assert!(v["checks"]["min"].as_f64().unwrap() < -1.0 - 1e-3);
    assert_eq!(v["profile"]["segments"].as_array().unwrap().len(), 20);
}

#[test]
fn upper_root_beyond_l2_hat_is_a_domain_failure() {
    // at K*+1e-4 the upper root of the map has left (0, L2_hat)
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("upper.csv");
    let o = delayfold(&["orbit", "--eps", "1e-3", "--k", "K*+1e-4", "--branch", "upper", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("L4"));
    assert!(!out.exists());
}

#[test]
fn oracle_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("oracle.json");
    let traj = dir.path().join("traj.csv");
    let o = delayfold(&["oracle", "--periods", "1", "--samples", "50", "--report", report.to_str().unwrap(), "--out", traj.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert!(v["sup_difference"].as_f64().unwrap() <= 1e-8);
    assert!(v["max_event_offset"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["events"].as_array().unwrap().len(), 7);
    let (header, rows) = read_csv(&traj);
    assert_eq!(header, ["t", "x", "x_delayed", "feedback"]);
    assert!(rows.len() > 50);

    let o = delayfold(&["oracle", "--periods", "2", "--eps", "1e-2", "--format", "json", "--out", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&report)["events"].as_array().unwrap().len(), 15);
}

#[test]
fn verify_passes_every_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let o = delayfold(&["verify", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    let checks = v.as_array().unwrap();
    assert_eq!(checks.len(), 14);
    assert!(checks.iter().all(|c| c["pass"].as_bool().unwrap()));
    assert!(stdout(&o).contains("eps_d2fdl2sq_at_fold"));
}

#[test]
fn exit_codes_separate_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    // usage
    assert_eq!(code(&delayfold(&["sweep"])), 2);
    assert_eq!(code(&delayfold(&["fold", "--eps", "2"])), 2);
    assert_eq!(code(&delayfold(&["k0", "--tol", "nonsense=1"])), 2);
    // domain
    assert_eq!(code(&delayfold(&["orbit", "--k", "7.5"])), 3);
    assert_eq!(code(&delayfold(&["verify", "--eps-grid", "1e-2,1e-3,1e-7"])), 3);
    assert_eq!(code(&delayfold(&["orbit", "--k", "K*-1e-3"])), 3);
    // certification, with the files still written
    let out = dir.path().join("o.csv");
    let o = delayfold(&["orbit", "--k", "K*+1e-4", "--tol", "dde_residual=1e-20", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("DDE residual"));
    assert!(out.exists());
    // i/o
    let missing = dir.path().join("no/such/dir/k0.txt");
    assert_eq!(code(&delayfold(&["k0", "--out", missing.to_str().unwrap()])), 6);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("fold.json");
    std::fs::write(&cfg, format!(r#"{{"eps": 1e-2, "format": "json", "out": {:?}}}"#, out.to_str().unwrap())).unwrap();
    let o = delayfold_with_config(&["fold"], Some(&cfg));
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&out)["eps"].as_f64().unwrap(), 1e-2);

    let o = delayfold_with_config(&["fold", "--eps", "1e-3"], Some(&cfg));
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&out)["eps"].as_f64().unwrap(), 1e-3);

    std::fs::write(&cfg, r#"{"epsilon": 1e-2}"#).unwrap();
    assert_eq!(code(&delayfold_with_config(&["fold"], Some(&cfg))), 2);
    assert_eq!(code(&delayfold_with_config(&["fold"], Some(&dir.path().join("absent.json")))), 6);
}

#[test]
fn reruns_overwrite_atomically_and_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fold.csv");
    std::fs::write(&out, "stale\n").unwrap();
    let first = delayfold(&["fold", "--eps", "1e-2", "--out", out.to_str().unwrap()]);
    let bytes = std::fs::read(&out).unwrap();
    let second = delayfold(&["fold", "--eps", "1e-2", "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let (header, rows) = read_csv(&out);
    assert_eq!(header[1], "k_star");
    assert_eq!(rows.len(), 1);
}
