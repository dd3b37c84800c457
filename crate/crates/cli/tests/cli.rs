use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn evocert(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evocert"))
        .arg("run")
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("EVOCERT_OUT")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn cert<'a>(r: &'a Value, id: &str) -> &'a Value {
    r["certificates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["theorem"] == id)
        .unwrap_or_else(|| panic!("{id} missing"))
}

fn problem_file(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("problem.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn blowup_scenario_reports_riccati_time() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evocert(&["--scenario", "blowup-remark"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(tmp.path());
    let c = cert(&r, "BLOWUP");
    assert_eq!(c["verdict"], "certified");
    let t0 = c["constants"]["t0"].as_f64().unwrap();
    assert!((t0 - 1.0).abs() < 1e-6, "{t0}");
    assert_eq!(r["blowup"]["consistent"], true);
}

#[test]
fn example2_stability_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evocert(&["--scenario", "example2", "--theorems", "A1-T2.1"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    assert_eq!(r["certificates"].as_array().unwrap().len(), 1);
    let c = cert(&r, "A1-T2.1");
    assert_eq!(c["verdict"], "certified");
    assert!(c["constants"]["M"].as_f64().unwrap() <= 54.598);
    assert_eq!(r["scenario"]["mismatches"], 0);
}

#[test]
fn csv_only_output_has_envelope_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = problem_file(
        tmp.path(),
        "B = [[\"-1\"]]\nalpha = 1\np = 2\nu0 = [0.5]\nT_max = 10\n",
    );
    let out = tmp.path().join("out");
    let o = evocert(&[cfg.to_str().unwrap(), "--formats", "csv", "--theorems", "T2.3"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("report.json").exists());
    assert!(!out.join("summary.txt").exists());
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# evocert trajectory v1"));
    assert_eq!(lines.next(), Some("t,u_1,norm_u,envelope_A2-T2.3"));
    let prop = fs::read_to_string(out.join("propagator.csv")).unwrap();
    assert!(prop.starts_with("# evocert propagator v1\n"));
}

#[test]
fn reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--scenario", "example1", "--trials", "4", "--seed", "11"];
    assert!(evocert(&args, &a).status.success());
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert!(evocert(&seq, &b).status.success());
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn every_requested_theorem_appears_once() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evocert(&["--scenario", "example1", "--theorems", "C2.9,T2.1,C2.9,T2.4"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    let ids: Vec<&str> = r["certificates"].as_array().unwrap().iter().map(|c| c["theorem"].as_str().unwrap()).collect();
    assert_eq!(ids, ["C2.9", "A1-T2.1", "A3-T2.4"]);
    // A failed certificate is an answer, not an error.
    assert_eq!(cert(&r, "C2.9")["verdict"], "not-certified");
    let text = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(text.contains("no soundness failures"));
}

#[test]
fn parse_errors_exit_one_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = problem_file(tmp.path(), "B = [[\"-1\"]]\nalpha = \"exp(-t\"\np = 2\nu0 = [1]\nT_max = 1\n");
    let o = evocert(&[cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2, column"), "{err}");
}

#[test]
fn validation_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = problem_file(
        tmp.path(),
        "B = [[\"-1\"]]\nalpha = \"-1\"\np = 2\nu0 = [0.1]\nT_max = 1\n",
    );
    let o = evocert(&[cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("validation"));
}

#[test]
fn inapplicable_theorem_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evocert(&["--scenario", "example3", "--theorems", "T2.1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = evocert(&["--scenario", "example1", "--theorems", "T9.9"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_evocert"))
        .args(["run", "--scenario", "blowup-remark", "--formats", "text"])
        .env("EVOCERT_OUT", &dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("summary.txt").exists());
}

#[test]
fn config_run_section_sets_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = problem_file(
        tmp.path(),
        "scenario = \"example1\"\n[overrides]\nu0 = [1e-4, 0]\n[run]\ntheorems = [\"T2.1\"]\ntol = 1e-9\ntrials = 3\n",
    );
    let out = tmp.path().join("out");
    let o = evocert(&[cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["settings"]["tol"].as_f64(), Some(1e-9));
    assert_eq!(r["stability_samples"][0]["report"]["violations"], 0);
    assert_eq!(r["stability_samples"][0]["report"]["trials"].as_array().unwrap().len(), 3);
}
