use std::path::Path;
use std::process::{Command, Output};

fn autorefine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autorefine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_store(dir: &Path) -> std::path::PathBuf {
    let store = dir.join("store");
    let out = autorefine(&[
        "synth",
        "--out",
        s(&store),
        "--candidates",
        "300",
        "--train-jobs",
        "30",
        "--eval-jobs",
        "6",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    store
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&autorefine(&[])), 1);
    assert_eq!(code(&autorefine(&["no-such-command"])), 1);
    assert_eq!(code(&autorefine(&["sweep", "--bogus"])), 1);
    assert_eq!(
        code(&autorefine(&[
            "train-q", "--store", "x", "--epochs", "many"
        ])),
        1
    );
    assert_eq!(code(&autorefine(&["--help"])), 0);
    assert_eq!(code(&autorefine(&["--version"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let text = dir.path().join("t.txt");
    std::fs::write(&text, "we hire engineers").unwrap();
    assert_eq!(
        code(&autorefine(&[
            "evaluate",
            "--store",
            s(&missing),
            "--in",
            s(&text)
        ])),
        2
    );

    let jobs = dir.path().join("jobs.jsonl");
    std::fs::write(&jobs, "{\"id\": \"a\", \"title\": \"T\"\n").unwrap();
    let cands = dir.path().join("cands.jsonl");
    std::fs::write(&cands, "").unwrap();
    let out = autorefine(&[
        "ingest",
        "--jobs",
        s(&jobs),
        "--candidates",
        s(&cands),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("jobs.jsonl:1"));

    let store = small_store(dir.path());
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "  ...  ").unwrap();
    assert_eq!(
        code(&autorefine(&[
            "evaluate",
            "--store",
            s(&store),
            "--in",
            s(&empty)
        ])),
        2
    );
}

#[test]
fn invalid_parameter_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let store = small_store(dir.path());
    assert_eq!(
        code(&autorefine(&[
            "train-lm",
            "--store",
            s(&store),
            "--alpha",
            "0.0001"
        ])),
        0
    );
    let out = autorefine(&["train-q", "--store", s(&store), "--tau", "1.5"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        code(&autorefine(&[
            "sweep",
            "--store",
            s(&store),
            "--betas",
            "2,-1"
        ])),
        1
    );
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let store = small_store(dir.path());
    let ok = |args: &[&str]| {
        let out = autorefine(args);
        assert_eq!(
            code(&out),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    ok(&[
        "train-lm",
        "--store",
        s(&store),
        "--order",
        "3",
        "--alpha",
        "0.0001",
    ]);
    ok(&[
        "train-q",
        "--store",
        s(&store),
        "--epochs",
        "7",
        "--lr",
        "1e-3",
        "--tau",
        "0.7",
        "--gamma",
        "1.0",
        "--n",
        "4",
        "--samples-per-prompt",
        "4",
        "--seed",
        "11",
    ]);
    assert!(store.join("lm.json").exists() && store.join("q.json").exists());

    let sweep = ok(&[
        "sweep",
        "--store",
        s(&store),
        "--betas",
        "0,8",
        "--json",
        "--seed",
        "3",
    ]);
    let rows: Vec<serde_json::Value> = sweep
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["label"], "original");
    assert_eq!(rows[2]["beta"], 8.0);

    let report = dir.path().join("report.md");
    ok(&[
        "report",
        "--store",
        s(&store),
        "--out",
        s(&report),
        "--seed",
        "3",
    ]);
    let first = std::fs::read_to_string(&report).unwrap();
    ok(&[
        "report",
        "--store",
        s(&store),
        "--out",
        s(&report),
        "--seed",
        "3",
    ]);
    assert_eq!(first, std::fs::read_to_string(&report).unwrap());
    assert!(first.contains("## Ranking quality"));

    let jobs = store.join("eval_jobs.jsonl");
    let rewritten = ok(&[
        "rewrite",
        "--lm",
        s(&store.join("lm.json")),
        "--q",
        s(&store.join("q.json")),
        "--beta",
        "8",
        "--in",
        s(&jobs),
        "--store",
        s(&store),
    ]);
    let lines: Vec<serde_json::Value> = rewritten
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    for l in &lines {
        assert!(l["result"]["rewritten"].as_str().is_some());
        assert!(l["result"]["token_advantages"].is_array());
        assert!(l["result"]["before"]["diversity"]["score"].is_number());
        assert!(l["result"]["after"]["diversity"]["score"].is_number());
    }

    let evaluated = ok(&["evaluate", "--store", s(&store), "--in", s(&jobs)]);
    let first: serde_json::Value = serde_json::from_str(evaluated.lines().next().unwrap()).unwrap();
    let r = &first["result"];
    let deltas: f64 = r["diversity"]["deltas"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((r["diversity"]["score"].as_f64().unwrap() + 100.0 * deltas).abs() < 1e-9);
    let pool: u64 = r["pool_histogram"]["gender"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(pool, r["pool_size"].as_u64().unwrap());

    let probe = ok(&["probe-gender", "--store", s(&store), "--strip-prefix"]);
    let deltas: serde_json::Value = serde_json::from_str(probe.trim()).unwrap();
    for per_gender in deltas.as_object().unwrap().values() {
        for d in per_gender.as_object().unwrap().values() {
            assert_eq!(d.as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn ingest_writes_a_usable_store() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.jsonl");
    std::fs::write(
        &jobs,
        r#"{"id":"j1","title":"Backend Engineer","company":"Acme","location":"NA","technologies":["rust"],"text":"We build rust services."}
{"id":"j2","title":"Designer","company":"Acme","location":"Europe","remote":true,"text":"We design things."}
"#,
    )
    .unwrap();
    let cands = dir.path().join("cands.jsonl");
    std::fs::write(
        &cands,
        r#"{"id":"c1","text":"rust backend services","gender":"female","geolocation":"NA","occupation":"Backend Engineer"}
{"id":"c2","text":"product design","geolocation":"Europe"}
{"id":"c3","text":"rust and go","gender":"male","geolocation":"Remote"}
"#,
    )
    .unwrap();
    let store = dir.path().join("store");
    let out = autorefine(&[
        "ingest",
        "--jobs",
        s(&jobs),
        "--candidates",
        s(&cands),
        "--out",
        s(&store),
        "--gender-seed",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stored = std::fs::read_to_string(store.join("candidates.jsonl")).unwrap();
    assert!(!stored.contains("unknown"));

    let text = dir.path().join("d.txt");
    std::fs::write(&text, "rust services").unwrap();
    let out = autorefine(&["evaluate", "--store", s(&store), "--in", s(&text)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["pool_size"], 3);
    assert_eq!(v["result"]["top_candidates"][0]["id"], "c1");
}
