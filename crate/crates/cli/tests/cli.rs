use std::path::Path;
use std::process::{Command, Output};

fn stochmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const HAZARD_STAR: &str = r#"{
  "kind": "star",
  "weights": [10, 8, 6],
  "probs": [0.5, 0.6, 0.7],
  "patience": { "type": "hazard", "r": 0.3 }
}"#;

#[test]
fn star_solve_hazard_example() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "star.json", HAZARD_STAR);
    let policy = dir.path().join("policy.json");
    let out = stochmatch(&["star-solve", path(&inst), "--solver", "hazard", "--policy-out", path(&policy)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("order      (1, 2, 3)"), "{text}");
    assert!(text.contains("ratio      1"), "{text}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(policy).unwrap()).unwrap();
    assert_eq!(doc["type"], "ordered");
    assert_eq!(doc["order"], serde_json::json!([0, 1, 2]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let star = write(dir.path(), "star.json", HAZARD_STAR);
    let bad = write(dir.path(), "bad.json", r#"{"kind": "star", "weights": [1], "probs": [1.5], "patience": {"type": "deterministic", "theta": 1}}"#);
    assert_eq!(stochmatch(&["star-solve", path(&bad)]).status.code(), Some(2));
    assert_eq!(stochmatch(&["star-solve", "/nonexistent/x.json"]).status.code(), Some(2));
    // The DP needs deterministic patience.
    assert_eq!(stochmatch(&["star-solve", path(&star), "--solver", "dp"]).status.code(), Some(3));
    assert_eq!(
        stochmatch(&["match-run", path(&star), "--algorithm", "adv-greedy"]).status.code(),
        Some(3)
    );
}

#[test]
fn match_run_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("m.json");
    let gen = stochmatch(&[
        "gen", "random", "--offline", "3", "--online", "2", "--arrivals", "prophet", "--seed", "5", "-o", path(&inst),
    ]);
    assert!(gen.status.success());
    let run = |csv: &Path, trace: &Path| {
        let out = stochmatch(&[
            "match-run", path(&inst), "--algorithm", "prophet", "--trials", "4000", "--seed", "9", "--csv",
            path(csv), "--trace", path(trace),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("PASS"));
        (std::fs::read(csv).unwrap(), std::fs::read_to_string(trace).unwrap())
    };
    let (a, ta) = run(&dir.path().join("a.csv"), &dir.path().join("a.tsv"));
    let (b, tb) = run(&dir.path().join("b.csv"), &dir.path().join("b.tsv"));
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let csv = String::from_utf8(a).unwrap();
    assert!(csv.starts_with("instance,algorithm,seed,trials,mean,stddev,ci,benchmark_name,benchmark_value,ratio,pass,schema_version\n"));
    assert!(ta.starts_with("arrival\ttype\tattempt\tvertex\tkind\toutcome\n"));
}

#[test]
fn lp_on_generated_gap_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("g.json");
    assert!(stochmatch(&["gen", "stochgap", "-n", "6", "-o", path(&inst)]).status.success());
    let dump = dir.path().join("lp.txt");
    let out = stochmatch(&["lp", path(&inst), "--which", "lp6", "--dump", path(&dump)]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("objective  6"), "{}", stdout(&out));
    let text = std::fs::read_to_string(dump).unwrap();
    assert!(text.starts_with("max:"));
    assert!(text.lines().count() > 1 + 6);
}

#[test]
fn repro_tight_example_passes_and_csv_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(name);
        let out = stochmatch(&["repro", "tight-example", "--csv", path(&csv)]);
        assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
        std::fs::read(csv).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
