mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use atomic_reasoner::bench::{brute_solve, load_tasks};
use atomic_reasoner::metrics::deserialize_trace;
use atomic_reasoner::model::{AnswerSchema, TerminationMode};
use common::{fixture, Reply, StubServer};

fn atomr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomr"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .stdin(Stdio::null())
        .output()
        .expect("atomr runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fx(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

/// The single run directory created under `root`.
fn run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn exit_codes_follow_the_mapping() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "max_rounds = \"lots\"\n").unwrap();
    std::fs::write(dir.join("truncated.json"), "{\"format\": \"atomic-trace/1\", \"tree\": {").unwrap();
    let out = dir.join("out").to_string_lossy().into_owned();
    let rejecting = StubServer::with_responder(|_| Reply::status(401, r#"{"error":"bad key"}"#));
    let case1 = fx("case1.task.json");
    // a cache holding one unrelated entry: every other request misses
    let partial = dir.join("partial-cache");
    std::fs::create_dir(&partial).unwrap();
    let one = std::fs::read_dir(fixture("cache/case1")).unwrap().next().unwrap().unwrap().path();
    std::fs::copy(&one, partial.join(one.file_name().unwrap())).unwrap();

    let table: Vec<(Vec<&str>, i32)> = vec![
        (vec!["--help"], 0),
        (vec!["--version"], 0),
        (vec!["frobnicate"], 1),
        (vec!["solve", "/definitely/not/here.json", "--backend", "scripted", "--script", "x"], 3),
        (vec!["bench", &case1, "--strategy", "bogus"], 1),
        (vec!["bench", &case1, "--backend", "oracle", "--trials", "0", "--out", &out], 1),
        (vec!["solve", &case1, "--backend", "scripted"], 1),
        (vec!["solve", &case1, "--backend", "oracle", "--max-rounds", "1", "--out", &out], 1),
        (vec!["solve", &case1, "--config", "bad.toml"], 1),
        (vec!["solve", &case1, "--config", "missing.toml"], 3),
        (vec!["genpuzzles", "--houses", "9"], 1),
        (vec!["inspect", "truncated.json"], 3),
        (vec!["inspect", "nothing-here.json"], 3),
        (
            vec![
                "solve",
                &case1,
                "--backend",
                "http",
                "--base-url",
                &rejecting.base_url,
                "--model",
                "m",
                "--api-key-env",
                "ATOMR_CLI_TEST_KEY",
                "--out",
                &out,
            ],
            2,
        ),
        (vec!["solve", &case1, "--backend", "replay", "--cache-dir", "no-such-cache", "--out", &out], 3),
        (vec!["solve", &case1, "--backend", "replay", "--cache-dir", "partial-cache", "--out", &out], 2),
    ];
    for (args, want) in table {
        let o = atomr(&args, dir);
        assert_eq!(code(&o), want, "atomr {args:?}\nstderr: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(rejecting.hits() >= 1);
}

#[test]
fn solve_case1_from_replay_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let o = atomr(
        &["solve", &fx("case1.task.json"), "--backend", "replay", "--cache-dir", &fx("cache/case1"), "--out", "runs"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).trim_end().ends_with("The correct answer is (A)"));

    let run = run_dir(&tmp.path().join("runs"));
    assert!(run.file_name().unwrap().to_string_lossy().starts_with("solve-"));
    for f in ["trace.json", "answer.txt", "stats.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let doc = deserialize_trace(&std::fs::read_to_string(run.join("trace.json")).unwrap()).unwrap();
    assert_eq!(doc.tree.round_count(), 4);
    assert_eq!(doc.evaluation.map(|e| e.correct), Some(true));
}

#[test]
fn round_limit_flag_and_config_file_agree() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("two.toml"), "max_rounds = 2\nbackend = \"scripted\"\n").unwrap();
    let script = fx("case1.script.json");
    let via_flag = atomr(
        &["solve", &fx("case1.task.json"), "--backend", "scripted", "--script", &script, "--max-rounds", "2", "--out", "a"],
        tmp.path(),
    );
    let via_file = atomr(
        &["solve", &fx("case1.task.json"), "--config", "two.toml", "--script", &script, "--out", "b"],
        tmp.path(),
    );
    for (o, root) in [(via_flag, "a"), (via_file, "b")] {
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let run = run_dir(&tmp.path().join(root));
        let doc = deserialize_trace(&std::fs::read_to_string(run.join("trace.json")).unwrap()).unwrap();
        assert!(doc.tree.nodes().len() <= 2);
        assert_eq!(doc.tree.terminated().unwrap().mode, TerminationMode::PassiveLimit);
    }
}

#[test]
fn plain_text_problem_from_stdin() {
    use std::io::Write;
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("s.json"),
        r#"{"routing": ["ACTION: PREMISE_DISCOVERY", "ACTION: PREMISE_RETRIEVAL"],
            "solve": ["Two and two.", "Sum is four."],
            "check": ["Check Result: No error.", "Check Result: No error."],
            "summarize": ["The answer is 4."]}"#,
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_atomr"))
        .args(["solve", "--stdin", "--backend", "scripted", "--script", "s.json", "--max-rounds", "2", "--out", "r"])
        .current_dir(tmp.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"What is 2 + 2?\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "The answer is 4.");
}

#[test]
fn genpuzzles_is_seeded_and_unique() {
    let tmp = tempfile::tempdir().unwrap();
    let a = atomr(&["genpuzzles", "--seed", "0", "--count", "5", "--output", "a.jsonl"], tmp.path());
    let b = atomr(&["genpuzzles", "--seed", "0", "--count", "5"], tmp.path());
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let file = std::fs::read_to_string(tmp.path().join("a.jsonl")).unwrap();
    assert_eq!(file, stdout(&b));

    let suite = load_tasks(&tmp.path().join("a.jsonl"), None).unwrap();
    assert_eq!(suite.tasks.len(), 5);
    assert!(suite.rejects.is_empty());
    let mut ids: Vec<_> = suite.tasks.iter().map(|t| t.id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5);
    for t in &suite.tasks {
        let AnswerSchema::Grid(schema) = &t.schema else { panic!("grid task") };
        assert_eq!(brute_solve(schema, &t.clues).unwrap().len(), 1, "{}", t.id);
    }
}

#[test]
fn inspect_shows_suspended_chain_of_case2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = atomr(&["inspect", &fx("case2.trace.json")], tmp.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("Chain ")).count(), 2);
    assert!(text.contains("Chain 1 [suspended]"));
    assert!(text.contains("Chain 2 [active]"));
}

#[test]
fn bench_oracle_then_synth() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&atomr(&["genpuzzles", "--seed", "7", "--count", "20", "--output", "suite.jsonl"], dir)), 0);
    let o = atomr(
        &["bench", "suite.jsonl", "--backend", "oracle", "--trials", "3", "--traces", "--out", "runs"],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().any(|l| l == "overall: 1.000"));

    let run = run_dir(&dir.join("runs"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let items = report["items"].as_array().unwrap();
    assert_eq!(items.len(), 20);
    for item in items {
        let trials = item["trials"].as_array().unwrap();
        assert_eq!(trials.len(), 3);
        assert!(trials.iter().all(|t| t["verdict"] == trials[0]["verdict"]));
    }
    assert_eq!(std::fs::read_dir(run.join("traces")).unwrap().count(), 60);

    let o = atomr(&["synth", &run.join("traces").to_string_lossy(), "--out", "sft"], dir);
    assert_eq!(code(&o), 0);
    let sft = run_dir(&dir.join("sft"));
    let lines = std::fs::read_to_string(sft.join("sft.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 60);
    for line in lines.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["meta"]["correct"], true);
    }
}

#[test]
fn synth_over_empty_dir_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = atomr(&["synth", "empty", "--out", "sft"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("0 records"));
}
