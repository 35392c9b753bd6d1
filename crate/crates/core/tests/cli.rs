use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bisbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bisbm")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL_MODEL: &str = "n1 = 60\nn2 = 1500\nK = 2\np = 0.1\nc = 0.3\nseed = 4\n";

#[test]
fn generate_cluster_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("model.cfg"), SMALL_MODEL).unwrap();
    ok(&bisbm(&["generate", "--config", "model.cfg", "--out", "inst"], d));
    for f in ["adjacency.mtx", "rows.txt", "cols.txt"] {
        assert!(d.join("inst").join(f).exists(), "{f}");
    }
    ok(&bisbm(&["cluster", "--input", "inst/adjacency.mtx", "--method", "gpm", "--k", "2", "--out", "zhat.txt"], d));
    let text = ok(&bisbm(&["eval", "--truth", "inst/rows.txt", "--estimate", "zhat.txt"], d));
    assert_eq!(text.trim(), "nmi=1.000000, rate=0.000000");
    let same = ok(&bisbm(&["eval", "--truth", "inst/rows.txt", "--estimate", "inst/rows.txt"], d));
    assert_eq!(same.trim(), "nmi=1.000000, rate=0.000000");
}

#[test]
fn generate_flags_override_config_and_scale_sets_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bisbm(&["generate", "--n1", "20", "--scale", "1", "--k", "2", "--p", "0.2", "--c", "0.5", "--out", "g"], d));
    let header = fs::read_to_string(d.join("g/adjacency.mtx")).unwrap();
    let dims = header.lines().find(|l| !l.starts_with('%')).unwrap().to_string();
    let want_cols = (20.0 * 20f64.ln()).ceil() as usize;
    assert!(dims.starts_with(&format!("20 {want_cols} ")), "{dims}");
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(bisbm(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(bisbm(&["eval", "--bogus"], d).status.code(), Some(2));
    assert_eq!(bisbm(&["sweep"], d).status.code(), Some(2));

    fs::write(d.join("hl.cfg"), "K = 3\nmethods = hl\n[sweep]\nvariable = p\nvalues = 0.1\n").unwrap();
    assert_eq!(bisbm(&["sweep", "--config", "hl.cfg"], d).status.code(), Some(2));
    fs::write(d.join("typo.cfg"), "n1 = 50\ntrails = 3\n[sweep]\nvariable = p\nvalues = 0.1\n").unwrap();
    assert_eq!(bisbm(&["sweep", "--config", "typo.cfg"], d).status.code(), Some(2));

    fs::write(d.join("model.cfg"), SMALL_MODEL).unwrap();
    ok(&bisbm(&["generate", "--config", "model.cfg", "--out", "inst"], d));
    let out = bisbm(&["cluster", "--input", "inst/adjacency.mtx", "--method", "hl", "--k", "3"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bisbm(&["eval", "--truth", "nope.txt", "--estimate", "nope.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn sweep_row_count_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "n1 = 40\nn2 = 600\nK = 2\nc = 0.3\ntrials = 3\nseed = 5\nmethods = spec, gpm\n[sweep]\nvariable = p\nvalues = 0.1, 0.2\n";
    fs::write(d.join("s.cfg"), cfg).unwrap();
    ok(&bisbm(&["sweep", "--config", "s.cfg", "--out", "a.csv"], d));
    ok(&bisbm(&["sweep", "--config", "s.cfg", "--out", "b.csv", "--threads", "1"], d));
    let a = fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 3 + 2 * 2 * 2);

    ok(&bisbm(&["sweep", "--config", "s.cfg", "--out", "c.csv", "--seed", "6"], d));
    assert_ne!(a, fs::read_to_string(d.join("c.csv")).unwrap());
}

#[test]
fn empty_grid_needs_opt_in_and_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("e.cfg"), "n1 = 40\nn2 = 600\n[sweep]\nvariable = p\n").unwrap();
    assert_eq!(bisbm(&["sweep", "--config", "e.cfg"], d).status.code(), Some(2));
    fs::write(d.join("e.cfg"), "n1 = 40\nn2 = 600\n[sweep]\nvariable = p\nallow_empty = true\n").unwrap();
    ok(&bisbm(&["sweep", "--config", "e.cfg", "--out", "e.csv"], d));
    let text = fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("row_type,"));
}

#[test]
fn diagnose_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("n.cfg"), "n1_values = 30\nn2_ratio = 5\np_values = 0.2\ntrials = 2\nseed = 1\n").unwrap();
    ok(&bisbm(&["diagnose", "noise", "--config", "n.cfg", "--out", "n.csv"], d));
    assert_eq!(fs::read_to_string(d.join("n.csv")).unwrap().lines().count(), 3);
    fs::write(d.join("c.cfg"), "n1 = 60\nn2 = 1500\np = 0.1\nruns = 2\nseed = 1\n").unwrap();
    ok(&bisbm(&["diagnose", "contraction", "--config", "c.cfg", "--out", "c.csv"], d));
    assert!(fs::read_to_string(d.join("c.csv")).unwrap().lines().count() > 2);
}
