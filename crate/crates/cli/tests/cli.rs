use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_noma-coc"));
    c.env_remove("NOMA_COC_OUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_scenario(dir: &Path, seed: &str, out: &str) {
    let o = run(dir, &["generate", "--cells", "3", "--users", "4", "--failed", "3", "--seed", seed, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    small_scenario(d.path(), "5", "a.json");
    small_scenario(d.path(), "5", "b.json");
    small_scenario(d.path(), "6", "c.json");
    let a = std::fs::read(d.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.json")).unwrap());
    assert_ne!(a, std::fs::read(d.path().join("c.json")).unwrap());
    assert_eq!(json(&d.path().join("a.json"))["seed"], 5);
}

#[test]
fn solve_embeds_config_and_scores_back() {
    let d = tempfile::tempdir().unwrap();
    small_scenario(d.path(), "2", "s.json");
    let o = run(d.path(), &["solve", "--scenario", "s.json", "--out", "lc.json", "--trace", "t.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(d.path(), &["solve", "--scenario", "s.json", "--optimal", "--out", "opt.json"]);
    assert!(o.status.success());
    let lc = json(&d.path().join("lc.json"));
    let opt = json(&d.path().join("opt.json"));
    assert_eq!(lc["command"], "solve");
    assert_eq!(lc["config"]["scenario"], "s.json");
    assert_eq!(lc["scheme"], "lc_noc");
    assert_eq!(opt["scheme"], "opt_noc");
    let f = |v: &serde_json::Value| v["report"]["failed_objective"].as_f64().unwrap();
    assert!(f(&opt) >= f(&lc) - 1e-6);
    assert!(json(&d.path().join("t.json")).as_array().is_some_and(|t| !t.is_empty()));

    let o = run(
        d.path(),
        &["eval", "--scenarios", "s.json", "--solution", "lc.json", "opt.json", "--out", "e.json"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = json(&d.path().join("e.json"));
    let reports = e["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["failed_objective"], lc["report"]["failed_objective"]);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    small_scenario(d.path(), "2", "s.json");

    let o = run(d.path(), &["solve", "--scenario", "s.json", "--optimal", "--budget-assoc", "3", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(4));

    let o = run(d.path(), &["solve", "--scenario", "s.json", "--pa", "dnn", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["solve", "--mode", "sideways"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(d.path(), &["solve", "--scenario", "missing.json", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(1));

    // A demand no cell can meet.
    let mut s = json(&d.path().join("s.json"));
    s["params"]["s_min"] = serde_json::json!(60.0);
    std::fs::write(d.path().join("hard.json"), s.to_string()).unwrap();
    let o = run(d.path(), &["solve", "--scenario", "hard.json", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let cert = if cert.is_array() { cert[0].clone() } else { cert };
    assert!(cert["max_violation"].as_f64().unwrap() > 0.0);
}

#[test]
fn dataset_split_train_eval() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let o = run(
        p,
        &["--jobs", "2", "dataset", "--n", "40", "--cells", "3", "--users", "4", "--failed", "3", "--seed", "1", "--out", "all.jsonl"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(p.join("all.jsonl")).unwrap().lines().count(), 40);
    let meta = json(&p.join("all.jsonl.meta.json"));
    assert_eq!(meta["seed"], 1);
    assert_eq!(meta["stats"]["samples"], 40);

    let o = run(p, &["dataset", "split", "--input", "all.jsonl", "--seed", "3", "--out-dir", "parts"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let count = |f: &str| std::fs::read_to_string(p.join("parts").join(f)).unwrap().lines().count();
    assert_eq!((count("train.jsonl"), count("val.jsonl"), count("test.jsonl")), (28, 6, 6));

    let o = run(
        p,
        &[
            "train", "--dataset", "parts/train.jsonl", "--val", "parts/val.jsonl", "--epochs", "3", "--seed", "2",
            "--out", "m.bin", "--report", "r.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&std::fs::read(p.join("m.bin")).unwrap()[..8], b"NOMADNN1");
    let r = json(&p.join("r.json"));
    assert_eq!(r["config"]["seed"], 2);
    assert_eq!(r["train"]["val_loss"].as_array().unwrap().len(), 3);

    small_scenario(p, "4", "sc/a.json");
    let o = run(
        p,
        &[
            "eval", "--scheme", "lc_noc_dnn", "--model", "m.bin", "--scenarios", "sc", "--test-split", "parts/test.jsonl",
            "--out", "e.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = json(&p.join("e.json"));
    assert_eq!(e["summary"]["scenarios"], 1);
    assert!(e["test_split"]["below_0.01"].as_f64().is_some());
}

#[test]
fn out_dir_override() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .current_dir(d.path())
        .env("NOMA_COC_OUT_DIR", d.path().join("outs"))
        .args(["generate", "--cells", "2", "--users", "4", "--failed", "2", "--out", "g.json"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("outs/g.json").exists());
    assert!(!d.path().join("g.json").exists());
}

#[test]
fn bench_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &["bench", "--sweep", "failed=2,3", "--cells", "2", "--users", "4", "--reps", "1", "--out", "b.json"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = json(&d.path().join("b.json"));
    let rows = b["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    // 4 clusters: P(4,2) = 12 and P(4,3) = 24 associations.
    assert_eq!(rows[0]["opt_associations"], 12);
    assert_eq!(rows[1]["opt_associations"], 24);
}

#[test]
fn interference_flags() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &[
            "generate", "--cells", "2", "--users", "4", "--failed", "2", "--plan", "full-reuse", "--i-max-dbm", "-70",
            "--s-min", "1", "--out", "g.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&d.path().join("g.json"));
    assert_eq!(g["params"]["s_min"], 1.0);
    assert!((g["params"]["i_max"].as_f64().unwrap() - 1e-7).abs() < 1e-15);
}
