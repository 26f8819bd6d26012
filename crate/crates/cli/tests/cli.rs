use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_cedgsearch")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "cedgsearch {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_cedgsearch")).args(args).output().unwrap();
    assert!(!out.status.success(), "cedgsearch {args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: [&str; 16] = [
    "--dim", "8", "--out-dim", "8", "--heads", "2", "--graph-heads", "2", "--epochs", "2", "--batch", "4", "--lr", "1e-2",
    "--min-count", "1",
];

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    run(&["synth", "--n", "10", "--seed", "7", "--out", p(&a)]);
    run(&["synth", "--n", "10", "--seed", "7", "--out", p(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn ingest_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir_all(src.join("nested")).unwrap();
    let bank = include_str!("../../core/fixtures/withdraw.sol");
    fs::write(src.join("bank.sol"), bank).unwrap();
    fs::write(src.join("nested/copy.sol"), bank).unwrap();
    fs::write(src.join("notes.txt"), "not solidity").unwrap();
    fs::write(src.join("broken.sol"), "contract A { function f() public {").unwrap();

    let all = dir.path().join("all.jsonl");
    run(&["ingest", "--src", p(&src), "--out", p(&all)]);
    let lines = fs::read_to_string(&all).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let dedup = dir.path().join("dedup.jsonl");
    run(&["ingest", "--src", p(&src), "--out", p(&dedup), "--dedup"]);
    assert_eq!(fs::read_to_string(&dedup).unwrap().lines().count(), 2);

    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    let id = first["id"].as_str().unwrap();
    assert!(id.starts_with("bank.sol#"));
    let json = run(&["graph", "--corpus", p(&all), "--id", id]);
    let g: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(g["edges"].as_array().unwrap().len(), 12);
    let dot = String::from_utf8(run(&["graph", "--corpus", p(&all), "--id", id, "--dot"]).stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(fails(&["graph", "--corpus", p(&all), "--id", "missing"]).contains("no unit with id"));
}

#[test]
fn train_index_search_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let model = dir.path().join("model.ckpt");
    let index = dir.path().join("index.bin");
    run(&["synth", "--n", "12", "--seed", "3", "--out", p(&corpus)]);

    let mut train = vec!["train", "--corpus", p(&corpus), "--out", p(&model), "--folds", "3", "--seed", "5"];
    train.extend(TINY);
    run(&train);
    let csv = fs::read_to_string(dir.path().join("model.ckpt.loss.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,mean_loss,elapsed_seconds"));
    assert_eq!(csv.lines().count(), 3);
    let cv: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("model.ckpt.cv.json")).unwrap()).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 3);

    // Same flags, same checkpoint.
    let again = dir.path().join("again.ckpt");
    let mut train2 = vec!["train", "--corpus", p(&corpus), "--out", p(&again), "--seed", "5"];
    train2.extend(TINY);
    run(&train2);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    run(&["index", "--corpus", p(&corpus), "--model", p(&model), "--out", p(&index)]);
    assert!(dir.path().join("index.bin.meta.jsonl").exists());

    let out = run(&["search", "--index", p(&index), "--model", p(&model), "--query", "burn reward units", "-k", "3"]);
    let hits: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(hits.len(), 3);
    assert_eq!(hits[0]["rank"], 1);
    assert!(hits.windows(2).all(|w| w[0]["score"].as_f64() >= w[1]["score"].as_f64()));

    let provider = "while read line; do echo '{\"vector\":[1,0,0,0,0,0,0,1]}'; done";
    let out = run(&["search", "--index", p(&index), "--model", p(&model), "--query", "anything", "--provider", provider]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 10);
    let narrow = "while read line; do echo '{\"vector\":[1,2]}'; done";
    let err = fails(&["search", "--index", p(&index), "--model", p(&model), "--query", "x y", "--provider", narrow]);
    assert!(err.contains("expected 8, got 2"), "{err}");

    let eval = |ks: &str| {
        let out = run(&["eval", "--corpus", p(&corpus), "--model", p(&model), "--folds", "3", "--ks", ks]);
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    let r = eval("1,5,10");
    assert_eq!(r["folds"].as_array().unwrap().len(), 3);
    let sr = &r["mean"]["sr"];
    assert!(sr["1"].as_f64() <= sr["5"].as_f64() && sr["5"].as_f64() <= sr["10"].as_f64());
    let mut a = eval("1,5,10");
    let mut b = r.clone();
    a.as_object_mut().unwrap().remove("latency_ms");
    b.as_object_mut().unwrap().remove("latency_ms");
    assert_eq!(a, b);
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.jsonl");
    assert!(fails(&["graph", "--corpus", p(&missing), "--id", "x"]).contains("reading"));
    let corpus = dir.path().join("c.jsonl");
    run(&["synth", "--n", "4", "--seed", "1", "--out", p(&corpus)]);
    let model = dir.path().join("m.ckpt");
    let mut bad = vec!["train", "--corpus", p(&corpus), "--out", p(&model), "--dim", "10", "--heads", "3"];
    bad.extend(["--epochs", "1"]);
    fails(&bad);
    fails(&["synth", "--n", "1", "--out", p(&corpus)]);
}
