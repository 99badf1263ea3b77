use std::path::Path;
use std::process::{Command, Output};

use efo_fit::builder::{perfect_matrices, ScoreFile, SyntheticScorer};
use efo_fit::fuzzy::read_matrix_set;
use efo_fit::kg::{load_split, load_triples};
use efo_fit::selftest::{random_kg, random_split};
use efo_fit::{EntityId, KnowledgeGraph, Matrices, RelationId};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efo-fit"))
        .current_dir(dir)
        .env_remove("EFO_FIT_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

/// e0 -r0-> e1, e0 -r0-> e2, e1 -r1-> e3, e2 -r1-> e3; observed drops the last.
fn toy() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("complete.tsv"),
        "e0\tr0\te1\ne0\tr0\te2\ne1\tr1\te3\ne2\tr1\te3\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("observed.tsv"), "e0\tr0\te1\ne0\tr0\te2\ne1\tr1\te3\n").unwrap();
    dir
}

/// A random graph with enough structure for sampling.
fn random_split_files(seed: u64) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complete = random_kg(&mut rng, 25, 3, 0.12);
    let observed = random_split(&complete, &mut rng, 0.7);
    let label = |g: &KnowledgeGraph, p: &Path| {
        let text: String = g
            .triples()
            .iter()
            .map(|t| format!("{}\t{}\t{}\n", t.head.0, t.relation.0, t.tail.0))
            .collect();
        std::fs::write(p, text).unwrap();
    };
    label(&complete, &dir.path().join("complete.tsv"));
    label(&observed, &dir.path().join("observed.tsv"));
    dir
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn build_perfect_round_trips() {
    let d = toy();
    let o = ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    assert!(stderr(&o).contains("config {"));
    let loaded: Matrices = read_matrix_set(&d.path().join("m.bin")).unwrap();
    let kg = load_triples(&d.path().join("complete.tsv"), None).unwrap();
    assert_eq!(loaded, perfect_matrices::<f64>(&kg));

    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("m.bin.provenance.json")).unwrap()).unwrap();
    let digest = efo_sha(&d.path().join("m.bin"));
    assert_eq!(side["output"]["sha256"], Value::String(digest));
    assert_eq!(side["config"]["mode"], "perfect");
    assert_eq!(side["inputs"].as_array().unwrap().len(), 1);
}

fn efo_sha(p: &Path) -> String {
    use sha2::{Digest, Sha256};
    format!("{:x}", Sha256::digest(std::fs::read(p).unwrap()))
}

#[test]
fn build_calibrated_keeps_observed_at_one() {
    let d = random_split_files(3);
    let (observed, _) =
        load_split(&d.path().join("observed.tsv"), &d.path().join("complete.tsv"), None).unwrap();
    let scorer = SyntheticScorer::new(observed.entity_count(), observed.relation_count(), 9)
        .with_boost(observed.clone(), 3.0);
    ScoreFile::write(&scorer, &d.path().join("s.bin")).unwrap();
    ok(run(
        d.path(),
        &[
            "build", "--mode", "test", "--kg-observed", "observed.tsv", "--kg-complete", "complete.tsv",
            "--scores", "s.bin", "--eps", "0.005", "--delta", "0.001", "--out", "m.bin",
        ],
    ));
    let m: Matrices = read_matrix_set(&d.path().join("m.bin")).unwrap();
    let p = m.primary();
    let n = observed.entity_count();
    for r in 0..observed.relation_count() {
        let mat = p.matrix(RelationId(r as u32)).unwrap();
        for a in 0..n {
            for b in 0..n {
                let v = mat.get(a, b);
                if observed.contains(EntityId(a as u32), RelationId(r as u32), EntityId(b as u32)) {
                    assert_eq!(v, 1.0);
                } else {
                    assert!(v < 1.0, "unobserved ({a},{r},{b}) = {v}");
                }
            }
        }
    }
}

#[test]
fn build_usage_errors() {
    let d = toy();
    let o = run(d.path(), &["build", "--mode", "test", "--kg-observed", "observed.tsv", "--out", "m.bin"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--scores"));
    let o = run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv"]);
    assert_eq!(code(&o), 2);
    let o = run(d.path(), &["build", "--mode", "bogus", "--kg", "complete.tsv", "--out", "m.bin"]);
    assert_eq!(code(&o), 2);
    let o = run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--delta", "1", "--out", "m.bin"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn answer_toy_top_k() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    let o = ok(run(
        d.path(),
        &["answer", "--matrices", "m.bin", "--top-k", "2", "r0(a0,f)", "EX x1. r0(a0,x1) & r1(x1,f)"],
    ));
    let lines = json_lines(&stdout(&o));
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["query"], "r0(a0,f)");
    assert_eq!(lines[0]["top_k"], serde_json::json!([["a1", 1.0], ["a2", 1.0]]));
    assert_eq!(lines[1]["top_k"][0], serde_json::json!(["a3", 1.0]));
    assert_eq!(lines[1]["top_k"][1][1], 0.0);
}

#[test]
fn answer_classifies_and_rejects() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    let not_efo1 = "(i,(n,(p,(p,(e)))),(p,(e))); r0,r1,r0; a0,a1";
    let o = ok(run(d.path(), &["answer", "--classify-only", "--lisp", not_efo1]));
    assert_eq!(json_lines(&stdout(&o))[0]["classes"], serde_json::json!(["NotEFO1"]));
    let o = ok(run(d.path(), &["answer", "--classify-only", "r0(a0,x1) & r1(x1,f) & r0(a1,x2) & r1(x2,f) & r1(x1,x2)"]));
    assert_eq!(json_lines(&stdout(&o))[0]["classes"], serde_json::json!(["Cyclic"]));

    let o = run(d.path(), &["answer", "--matrices", "m.bin", "--lisp", not_efo1]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("not an EFO1 formula"));
    assert!(stderr(&o).contains("universal quantifier"));

    let o = run(d.path(), &["answer", "--matrices", "m.bin", "r0(a0,f) & r1(a1,a1)"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let o = run(d.path(), &["answer", "--matrices", "m.bin", "r0(a0,f) & (EX x1. r1(x1,x2))"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    // Bad queries do not stop the good ones.
    let o = run(d.path(), &["answer", "--matrices", "m.bin", "r0(a0,f", "r0(a0,f)"]);
    assert_eq!(code(&o), 3);
    assert_eq!(json_lines(&stdout(&o)).len(), 1);

    let o = run(d.path(), &["answer", "--matrices", "m.bin", "--exist", "product", "r0(a0,f)"]);
    assert_eq!(code(&o), 2);
    let o = run(d.path(), &["answer", "--matrices", "m.bin"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn enumeration_cap_is_a_limit_error() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    let cycle = "EX x1,x2. r0(a0,x1) & r1(x1,f) & r0(x2,x1) & r1(x2,f)";
    let o = run(d.path(), &["answer", "--matrices", "m.bin", "--max-depth", "0", cycle]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    ok(run(d.path(), &["answer", "--matrices", "m.bin", cycle]));
}

#[test]
fn answer_from_file_with_sidecar() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    std::fs::write(d.path().join("q.txt"), "# toy\nr0(a0,f)\n\nr1(a1,f)\n").unwrap();
    ok(run(d.path(), &["answer", "--matrices", "m.bin", "--queries-file", "q.txt", "--out", "a.jsonl"]));
    let text = std::fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(json_lines(&text).len(), 2);
    assert!(d.path().join("a.jsonl.provenance.json").exists());
}

fn sample(dir: &Path, seed: &str, out: &str) -> Output {
    run(
        dir,
        &[
            "sample", "--kg-observed", "observed.tsv", "--kg-complete", "complete.tsv", "--structures",
            "1p,2p,2i,2in,3c", "--count", "6", "--seed", seed, "--verify", "--out", out,
        ],
    )
}

#[test]
fn sample_is_deterministic_and_verified() {
    let d = random_split_files(1);
    let o = ok(sample(d.path(), "7", "a.jsonl"));
    assert!(stderr(&o).contains("verified"));
    assert!(stdout(&o).contains("1p\t"));
    ok(sample(d.path(), "7", "b.jsonl"));
    ok(sample(d.path(), "8", "c.jsonl"));
    let read = |n: &str| std::fs::read_to_string(d.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert!(!read("a.jsonl").is_empty());
    let side: Value = serde_json::from_str(&read("a.jsonl.provenance.json")).unwrap();
    assert_eq!(side["config"]["seed"], 7);
    assert_eq!(side["inputs"].as_array().unwrap().len(), 2);

    let o = run(
        d.path(),
        &["sample", "--kg-observed", "observed.tsv", "--kg-complete", "complete.tsv", "--structures", "1p,9q", "--out", "x.jsonl"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("9q"));
}

#[test]
fn eval_perfect_and_faithful() {
    let d = random_split_files(2);
    let positive = "1p,2p,3p,2i,3i,ip,pi,2u,up,2m,3c";
    ok(run(
        d.path(),
        &[
            "sample", "--kg-observed", "observed.tsv", "--kg-complete", "complete.tsv", "--structures",
            &format!("{positive},2in,pin"), "--count", "5", "--out", "d.jsonl",
        ],
    ));
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "full.bin"]));
    let o = ok(run(
        d.path(),
        &["eval", "--matrices", "full.bin", "--dataset", "d.jsonl", "--budget-m", "25", "--out", "r.json"],
    ));
    assert!(stdout(&o).contains("avg"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    let rows = r.as_object().unwrap();
    let scored: Vec<_> = rows.iter().filter(|(k, _)| *k != "averages" && *k != "failures").collect();
    assert!(!scored.is_empty());
    for (k, v) in scored {
        assert_eq!(v["mrr"], 100.0, "{k}");
    }
    assert!(d.path().join("r.json.provenance.json").exists());
}

#[test]
fn eval_faithful_on_observed_matrices() {
    let d = random_split_files(4);
    // Ids as the sampler assigns them: the complete graph numbers entities.
    let (observed, _) =
        load_split(&d.path().join("observed.tsv"), &d.path().join("complete.tsv"), None).unwrap();
    let m: Matrices = perfect_matrices(&observed);
    efo_fit::fuzzy::write_matrix_set(&m, &d.path().join("obs.bin")).unwrap();
    ok(run(
        d.path(),
        &[
            "sample", "--kg-observed", "observed.tsv", "--kg-complete", "complete.tsv", "--structures",
            "1p,2p,2i,3i,pi,ip,2u", "--count", "5", "--out", "d.jsonl",
        ],
    ));
    ok(run(
        d.path(),
        &["eval", "--matrices", "obs.bin", "--dataset", "d.jsonl", "--mode", "faithful", "--out", "f.json"],
    ));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("f.json")).unwrap()).unwrap();
    for (k, v) in r.as_object().unwrap() {
        if k != "averages" && k != "failures" {
            assert_eq!(v["mrr"], 100.0, "{k}");
        }
    }
}

#[test]
fn eval_empty_dataset() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--out", "m.bin"]));
    std::fs::write(d.path().join("empty.jsonl"), "").unwrap();
    let o = ok(run(d.path(), &["eval", "--matrices", "m.bin", "--dataset", "empty.jsonl", "--out", "r.json"]));
    assert!(stdout(&o).contains("avg"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["failures"], 0);
    assert!(r["averages"]["all"].is_null());
}

#[test]
fn selftest_passes_and_catches_corruption() {
    let d = tempfile::tempdir().unwrap();
    for seed in 0..10 {
        let s = seed.to_string();
        let o = ok(run(d.path(), &["selftest", "--quick", "--graphs", "1", "--seed", &s]));
        assert_eq!(stdout(&o).matches("PASS").count(), 3);
    }
    let o = run(d.path(), &["selftest", "--quick", "--graphs", "3", "--corrupt"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("counterexample"));
}

#[test]
fn thread_cap_from_env() {
    let d = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_efo-fit");
    let with = |v: &str| {
        Command::new(bin)
            .current_dir(d.path())
            .env("EFO_FIT_THREADS", v)
            .args(["selftest", "--quick", "--graphs", "1"])
            .output()
            .unwrap()
    };
    let o = with("2");
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("\"threads\":2"));
    assert_eq!(code(&with("zero")), 2);
}

#[test]
fn reverse_relations_double_the_count() {
    let d = toy();
    ok(run(d.path(), &["build", "--mode", "perfect", "--kg", "complete.tsv", "--reverse", "--out", "m.bin"]));
    let m: Matrices = read_matrix_set(&d.path().join("m.bin")).unwrap();
    assert_eq!(m.relation_count(), 4);
    // r2 is the inverse of r0: e1 -r2-> e0.
    let o = ok(run(d.path(), &["answer", "--matrices", "m.bin", "--top-k", "1", "r2(a1,f)"]));
    assert_eq!(json_lines(&stdout(&o))[0]["top_k"], serde_json::json!([["a0", 1.0]]));
}
