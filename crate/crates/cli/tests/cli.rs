use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn conelrt(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conelrt"))
        .current_dir(cwd)
        .env_remove("LRT_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SIMULATE: &[&str] = &[
    "simulate", "--model", "factor", "--m", "4", "--gamma", "1,1,1,1", "--delta", "0.3333", "--n", "1000", "--reps",
    "40", "--seed", "1", "--ref", "chisq:2",
];

#[test]
fn simulate_writes_artifacts_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = conelrt(tmp.path(), &[SIMULATE, &["--out", "runs"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("runs/result.csv")).unwrap();
    assert!(csv.starts_with("replicate,lambda,pvalue\n"));
    assert_eq!(csv.lines().count(), 41);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("runs/summary.json")).unwrap()).unwrap();
    for key in ["mean", "q50", "q95", "q99", "ks_reference", "pvalue_mean_stderr", "failures"] {
        assert!(summary["summary"].get(key).is_some(), "{key}");
    }
    assert_eq!(summary["config"]["seed"], 1);

    let o = conelrt(tmp.path(), &["simulate", "--config", "runs/summary.json", "--out", "again"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("again/result.csv")).unwrap(), csv);

    // Flags override the file.
    let o = conelrt(tmp.path(), &["simulate", "--config", "runs/summary.json", "--reps", "5", "--out", "short"]);
    assert_eq!(code(&o), 0);
    let short = fs::read_to_string(tmp.path().join("short/result.csv")).unwrap();
    assert_eq!(short.lines().count(), 6);
    assert!(csv.starts_with(&short));
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&conelrt(tmp.path(), &[SIMULATE, &["--threads", "1", "--out", "a"]].concat())), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_conelrt"))
        .current_dir(tmp.path())
        .env("LRT_THREADS", "3")
        .args([SIMULATE, &["--out", "b"]].concat())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(tmp.path().join("a/result.csv")).unwrap(),
        fs::read_to_string(tmp.path().join("b/result.csv")).unwrap()
    );
}

#[test]
fn other_models() {
    let tmp = tempfile::tempdir().unwrap();
    let o = conelrt(
        tmp.path(),
        &["simulate", "--model", "curve", "--curve", "cuspidal", "--mu0", "0,0", "--n", "100", "--reps", "20", "--seed", "4", "--ref", "chibar:0.5/1,0.5/2", "--out", "c"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = conelrt(
        tmp.path(),
        &["simulate", "--model", "feedback", "--beta", "0.6,0.5,-0.3,0.5,0.5", "--n", "500", "--reps", "10", "--seed", "4", "--ref", "twoline:0.3", "--reference-reps", "1000", "--out", "f"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(tmp.path().join("f/result.csv")).unwrap().lines().count(), 11);
}

#[test]
fn usage_errors_exit_64() {
    let tmp = tempfile::tempdir().unwrap();
    let no_seed: Vec<&str> = SIMULATE.iter().copied().filter(|a| *a != "--seed" && *a != "1").collect();
    assert_eq!(code(&conelrt(tmp.path(), &[&no_seed[..], &["--out", "x"]].concat())), 64);
    assert_eq!(code(&conelrt(tmp.path(), &["simulate", "--bogus"])), 64);
    assert_eq!(code(&conelrt(tmp.path(), &["quantile", "--law", "nonsense:1", "--p", "0.5", "--seed", "1"])), 64);
    assert_eq!(code(&conelrt(tmp.path(), &["limit", "--law", "chisq:1", "--reps", "10", "--out", "x"])), 64);
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn data_errors_exit_65() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&conelrt(tmp.path(), &["simulate", "--config", "bad.json", "--out", "x"])), 65);
    fs::write(tmp.path().join("neg.json"), r#"{"model":{"kind":"factor","params":{"delta":[-1,1,1,1],"gamma":[1,1,1,1]},"test":{"type":"saturated"}},"n":10,"reps":2,"seed":1,"reference":{"law":"chi_sq","df":2}}"#).unwrap();
    assert_eq!(code(&conelrt(tmp.path(), &["simulate", "--config", "neg.json", "--out", "x"])), 65);
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unwritable_output_exits_73() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("file"), "").unwrap();
    let o = conelrt(tmp.path(), &[SIMULATE, &["--out", "file/sub"]].concat());
    assert_eq!(code(&o), 73, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn writes_only_inside_out() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&conelrt(tmp.path(), &["limit", "--law", "maxeig:4", "--reps", "100", "--seed", "2", "--out", "o"])), 0);
    let entries: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("o")]);
    let mut files: Vec<_> = fs::read_dir(tmp.path().join("o")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, vec!["limit.csv", "summary.json"]);
    let csv = fs::read_to_string(tmp.path().join("o/limit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn quantile_prints_value_and_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let o = conelrt(tmp.path(), &["quantile", "--law", "chisq:2", "--p", "0.95", "--reps", "100000", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let v: Vec<f64> = text.split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert!(v[1] > 0.0 && (v[0] - 5.991465).abs() < 4.0 * v[1], "{v:?}");
}

#[test]
fn project_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("z.csv"), "a,b\n3,4\n0,-2\n").unwrap();
    let cone = r#"{"kind":"ray","direction":[1,0]}"#;
    let o = conelrt(tmp.path(), &["project", "--cone", cone, "--input", "z.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<f64> =
        String::from_utf8(o.stdout).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows, vec![16.0, 4.0]);
    assert_eq!(code(&conelrt(tmp.path(), &["project", "--cone", "{}", "--input", "z.csv"])), 65);
}

#[test]
fn table_and_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let o = conelrt(
        tmp.path(),
        &["table1", "--reps", "30", "--seed", "2", "--critical-reps", "10000", "--ms", "4", "--ns", "100", "--rhos", "0.8,0.2", "--out", "t1"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let levels = fs::read_to_string(tmp.path().join("t1/levels.csv")).unwrap();
    assert!(levels.starts_with("m,n,rho,critical,level,stderr,failures\n"));
    assert_eq!(levels.lines().count(), 3);

    let o = conelrt(tmp.path(), &["fig3", "--reps", "20", "--seed", "5", "--out", "f3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for p in ["gamma_1111", "gamma_1110", "gamma_1100", "gamma_1000"] {
        assert!(tmp.path().join("f3").join(p).join("result.csv").is_file(), "{p}");
    }
    let o = conelrt(tmp.path(), &["fig4", "--reps", "20", "--seed", "5", "--out", "f4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("f4/rho_0.1/summary.json").is_file());
}
