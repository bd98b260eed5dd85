use std::path::Path;
use std::process::{Command, Output};

fn conjgamma(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conjgamma"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn second_tables_call_is_a_cache_hit_with_same_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let first = conjgamma(dir.path(), &["tables"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).starts_with("built tables"));
    let second = conjgamma(dir.path(), &["tables"]);
    assert!(second.status.success());
    let s = stdout(&second);
    assert!(s.starts_with("cache hit"), "{s}");
    let sums = |t: &str| t.lines().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(sums(&stdout(&first)), sums(&s));
    assert_eq!(sums(&s).len(), 6);
}

#[test]
fn corrupted_table_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    assert!(conjgamma(dir.path(), &["tables"]).status.success());
    let key_dir = std::fs::read_dir(dir.path().join("tables"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let victim = key_dir.join("v.tbl");
    let mut text = std::fs::read_to_string(&victim).unwrap();
    // flip one digit in the last data line
    let pos = text.trim_end().rfind(|c: char| c.is_ascii_digit()).unwrap();
    let digit = text.as_bytes()[pos];
    let replacement = if digit == b'1' { "2" } else { "1" };
    text.replace_range(pos..pos + 1, replacement);
    std::fs::write(&victim, text).unwrap();

    let out = conjgamma(dir.path(), &["tables"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("v.tbl"), "{err}");
    assert!(err.contains("header mismatch"), "{err}");
}

#[test]
fn dimension_two_is_refused_with_an_explanation() {
    let dir = tempfile::tempdir().unwrap();
    let out = conjgamma(dir.path(), &["run", "asymptotics", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("dimension 2 rejected"), "{err}");
    assert!(err.contains("transient"), "{err}");
    assert!(!dir.path().join("reports").exists());
}

#[test]
fn unknown_experiment_and_bad_flags_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = conjgamma(dir.path(), &["run", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("charfn-check"));
    let out = conjgamma(dir.path(), &["run", "asymptotics", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let out = conjgamma(dir.path(), &["run", "charfn-check", "--eps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn charfn_run_reports_the_closed_form_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, threads: &'static str| {
        vec![
            "run",
            "charfn-check",
            "--samples",
            "4000",
            "--seed",
            "7",
            "--out",
            out,
            "--threads",
            threads,
        ]
    };
    let a = conjgamma(dir.path(), &args("a", "1"));
    assert!(a.status.code().is_some_and(|c| c <= 1), "{}", stderr(&a));
    let text = stdout(&a);
    // exp(-Φ(1)) with Φ(1) = 1/ln 2 − 1
    assert!(text.contains("6.423031e-1"), "{text}");
    assert!(text.contains("seed            7"));

    let b = conjgamma(dir.path(), &args("b", "3"));
    assert_eq!(a.status.code(), b.status.code());
    let ja = std::fs::read(dir.path().join("a/charfn-check.json")).unwrap();
    let jb = std::fs::read(dir.path().join("b/charfn-check.json")).unwrap();
    assert_eq!(ja, jb, "reports differ between thread counts");

    let shown = conjgamma(dir.path(), &["show", "a/charfn-check.json"]);
    assert_eq!(shown.status.code(), a.status.code());
    assert_eq!(
        stdout(&shown),
        std::fs::read_to_string(dir.path().join("a/charfn-check.txt")).unwrap()
    );
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"seed": 11, "experiments": {"capacity_scaling": {"radii": [0.2, 0.1], "n_points": 128}}}"#,
    )
    .unwrap();
    let out = conjgamma(
        dir.path(),
        &["run", "capacity-scaling", "--config", "run.json", "--seed", "12"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/capacity-scaling.json")).unwrap())
            .unwrap();
    let cfg = &json["parameters"]["run_config"];
    assert_eq!(cfg["seed"], 12);
    assert_eq!(cfg["experiments"]["capacity_scaling"]["n_points"], 128);
    assert!(cfg.get("out_dir").is_none());

    std::fs::write(dir.path().join("bad.json"), r#"{"sead": 1}"#).unwrap();
    let out = conjgamma(dir.path(), &["tables", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sead"));
}
