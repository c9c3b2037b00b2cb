use std::path::Path;

use gdform_cli::main_with_args;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["gdform".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(dir.display().to_string());
    main_with_args(v)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn classify_is_byte_identical_under_fixed_clock() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["classify", "--builtin", "bm-2", "--fixed-clock"];
    assert_eq!(run(a.path(), &args), 0);
    assert_eq!(run(b.path(), &args), 0);
    for f in ["report.json", "profiles.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let r = report(a.path());
    assert_eq!(r["result"]["classification"]["verdict"], "Recurrent");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(r.get("generated_at").is_none());
}

#[test]
fn simulate_does_not_depend_on_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = ["simulate", "--builtin", "bm-1", "--x0", "1", "--horizon", "5", "--dt", "0.01", "--paths", "300", "--seed", "9", "--fixed-clock"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut four = base.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(run(a.path(), &one), 0);
    assert_eq!(run(b.path(), &four), 0);
    assert_eq!(report(a.path())["result"], report(b.path())["result"]);
    assert_eq!(
        std::fs::read(a.path().join("ensemble.csv")).unwrap(),
        std::fs::read(b.path().join("ensemble.csv")).unwrap()
    );
}

#[test]
fn seed_changes_hash_and_paths() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = ["simulate", "--builtin", "bm-1", "--x0", "1", "--horizon", "2", "--dt", "0.01", "--paths", "200", "--fixed-clock"];
    let mut s1 = base.to_vec();
    s1.extend(["--seed", "1"]);
    let mut s2 = base.to_vec();
    s2.extend(["--seed", "2"]);
    run(a.path(), &s1);
    run(b.path(), &s2);
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_ne!(ra["config_hash"], rb["config_hash"]);
    assert_ne!(ra["result"]["path_digest"], rb["result"]["path_digest"]);
}

#[test]
fn config_file_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = gdform_core::model::builtin_config("bm-3", &Default::default()).unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&a, &["classify", "--config", path.to_str().unwrap(), "--fixed-clock"]), 0);
    assert_eq!(run(&b, &["classify", "--builtin", "bm-3", "--fixed-clock"]), 0);
    assert_eq!(report(&a)["config_hash"], report(&b)["config_hash"]);
    assert_eq!(report(&a)["result"]["classification"]["verdict"], "Transient");
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["classify", "--builtin", "no-such-model"]), 1);
    assert_eq!(run(dir.path(), &["classify", "--builtin", "bm-2", "--tol=-1"]), 1);
    assert_eq!(run(dir.path(), &["classify"]), 1);
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn volume_and_chi_write_profiles() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["volume", "--builtin", "bm-2", "--rmax", "100", "--n-list", "1,10,100"]), 0);
    let csv = std::fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    assert_eq!(run(dir.path(), &["chi", "--builtin", "bm-2", "--n-list", "10,100"]), 0);
    let r = report(dir.path());
    for e in r["result"]["energies"].as_array().unwrap() {
        assert!(e["total"].as_f64().unwrap() <= e["bound"].as_f64().unwrap());
    }
}
