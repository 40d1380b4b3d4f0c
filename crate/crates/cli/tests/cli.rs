use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpa")).args(args).output().expect("spawn tpa")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    dir: TempDir,
    dataset: PathBuf,
    prompts: PathBuf,
}

fn synth(extra: &[&str]) -> Data {
    let dir = TempDir::new().unwrap();
    let dataset = dir.path().join("data.tpae");
    let prompts = dir.path().join("prompts.json");
    let mut args = vec!["synth", "--dataset", s(&dataset), "--prompts", s(&prompts)];
    args.extend_from_slice(extra);
    ok(&tpa(&args));
    Data { dir, dataset, prompts }
}

fn small() -> Data {
    synth(&["--classes", "3", "--per-class", "10", "--dim", "8", "--min-frames", "16", "--max-frames", "20"])
}

fn data_sets(d: &Data) -> Vec<String> {
    vec![
        format!("data.dataset_path={}", s(&d.dataset)),
        format!("data.prompt_bank_path={}", s(&d.prompts)),
    ]
}

fn train(d: &Data, out: &Path, extra: &[&str]) -> Output {
    let mut sets = data_sets(d);
    sets.extend(extra.iter().map(|x| x.to_string()));
    let mut args = vec!["train".to_string(), "--out".into(), s(out).into()];
    for x in &sets {
        args.push("--set".into());
        args.push(x.clone());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    tpa(&refs)
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_counts_and_summary() {
    let d = synth(&["--seed", "0", "--classes", "3", "--per-class", "60", "--dim", "64"]);
    let ds = tpa_core::dataio::Dataset::read(&d.dataset).unwrap();
    assert_eq!(ds.len(), 180);
    assert_eq!(ds.dim(), 64);
    assert_eq!(ds.class_counts(), vec![60, 60, 60]);
    let bank = tpa_core::dataio::PromptBank::load(&d.prompts).unwrap();
    assert_eq!(bank.num_classes(), 3);
}

#[test]
fn synth_is_byte_identical() {
    let a = synth(&["--seed", "5"]);
    let b = synth(&["--seed", "5"]);
    assert_eq!(std::fs::read(&a.dataset).unwrap(), std::fs::read(&b.dataset).unwrap());
    assert_eq!(std::fs::read(&a.prompts).unwrap(), std::fs::read(&b.prompts).unwrap());
    let c = synth(&["--seed", "6"]);
    assert_ne!(std::fs::read(&a.dataset).unwrap(), std::fs::read(&c.dataset).unwrap());
}

#[test]
fn train_writes_reports_and_echoes_overrides() {
    let d = small();
    let out = d.dir.path().join("run");
    let stdout = ok(&train(&d, &out, &["trainer.epochs=2", "classifier.alpha=0"]));
    assert!(stdout.contains("macro F1"));
    let agg = read_json(&out.join("aggregate.json"));
    assert_eq!(agg["folds"].as_array().unwrap().len(), 5);
    assert_eq!(agg["config"]["classifier"]["alpha"].as_f64(), Some(0.0));
    // defaults are materialised
    assert_eq!(agg["config"]["classifier"]["tau"].as_f64(), Some(0.1));
    assert_eq!(agg["config"]["data"]["clip_len"].as_u64(), Some(16));
    for i in 0..5 {
        assert!(out.join(format!("fold_{i}.json")).exists());
        assert!(out.join(format!("fold_{i}.ckpt")).exists());
        let rel = std::fs::read_to_string(out.join(format!("fold_{i}_reliability.csv"))).unwrap();
        assert_eq!(rel.lines().count(), 16);
    }
}

#[test]
fn train_missing_prompt_bank_exits_3() {
    let d = small();
    let out = d.dir.path().join("run");
    let gone = d.dir.path().join("nope.json");
    let o = train(&d, &out, &[&format!("data.prompt_bank_path={}", s(&gone)), "trainer.epochs=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn train_unset_data_path_exits_3() {
    let dir = TempDir::new().unwrap();
    let o = tpa(&["train", "--out", s(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_config_errors_exit_2() {
    let d = small();
    let out = d.dir.path().join("run");
    let o = train(&d, &out, &["classifier.alhpa=0.5"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = d.dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trainer": {"epochs": 3, "bogus": 1}}"#).unwrap();
    let o = tpa(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = train(&d, &out, &["classifier.tau=0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_config_file_is_used() {
    let d = small();
    let cfg = d.dir.path().join("cfg.json");
    let body = serde_json::json!({
        "data": {"dataset_path": d.dataset, "prompt_bank_path": d.prompts},
        "trainer": {"epochs": 1, "folds": 3},
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let out = d.dir.path().join("run");
    ok(&tpa(&["train", "--config", s(&cfg), "--out", s(&out)]));
    let agg = read_json(&out.join("aggregate.json"));
    assert_eq!(agg["folds"].as_array().unwrap().len(), 3);
    assert_eq!(agg["config"]["trainer"]["epochs"].as_u64(), Some(1));
}

#[test]
fn train_is_deterministic_and_parallel_matches_serial() {
    let d = small();
    let a = d.dir.path().join("a");
    let b = d.dir.path().join("b");
    ok(&train(&d, &a, &["trainer.epochs=2"]));
    let mut sets = vec!["train".to_string(), "--out".into(), s(&b).into(), "--parallel-folds".into(), "3".into()];
    for x in data_sets(&d).into_iter().chain(["trainer.epochs=2".to_string()]) {
        sets.push("--set".into());
        sets.push(x);
    }
    let refs: Vec<&str> = sets.iter().map(String::as_str).collect();
    ok(&tpa(&refs));
    for f in ["aggregate.json", "fold_0.json", "fold_4.ckpt", "fold_2_reliability.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_reproduces_best_epoch_metrics() {
    let d = small();
    let out = d.dir.path().join("run");
    ok(&train(&d, &out, &["trainer.epochs=4"]));
    for fold in 0..5 {
        let ck = out.join(format!("fold_{fold}.ckpt"));
        let rel = d.dir.path().join(format!("rel_{fold}.csv"));
        let stdout = ok(&tpa(&[
            "eval",
            "--checkpoint",
            s(&ck),
            "--dataset",
            s(&d.dataset),
            "--val-only",
            "--reliability",
            s(&rel),
        ]));
        let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        let stored = read_json(&out.join(format!("fold_{fold}.json")));
        assert_eq!(report["report"], stored["best"], "fold {fold}");
        assert_eq!(
            std::fs::read(&rel).unwrap(),
            std::fs::read(out.join(format!("fold_{fold}_reliability.csv"))).unwrap()
        );
    }
}

#[test]
fn eval_predictions_and_uncertainty_columns() {
    let d = small();
    let out = d.dir.path().join("run");
    ok(&train(&d, &out, &["trainer.epochs=2", "trainer.folds=2", "cvaesm.enabled=true"]));
    let ck = out.join("fold_0.ckpt");
    let read = |mc: &str| {
        let pred = d.dir.path().join(format!("pred_{mc}.csv"));
        let rel = d.dir.path().join(format!("rel_{mc}.csv"));
        let report = d.dir.path().join(format!("report_{mc}.json"));
        ok(&tpa(&[
            "eval",
            "--checkpoint",
            s(&ck),
            "--dataset",
            s(&d.dataset),
            "--mc-samples",
            mc,
            "--predictions",
            s(&pred),
            "--reliability",
            s(&rel),
            "--out",
            s(&report),
        ]));
        assert_eq!(std::fs::read_to_string(&rel).unwrap().lines().count(), 16);
        assert_eq!(read_json(&report)["report"]["samples"].as_u64(), Some(30));
        let mut r = csv::Reader::from_path(&pred).unwrap();
        let header = r.headers().unwrap().clone();
        let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        (header, rows)
    };

    let (header, rows) = read("1");
    assert_eq!(rows.len(), 30);
    let var_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("mc_var_")).map(|(i, _)| i).collect();
    assert_eq!(var_cols.len(), 3);
    for row in &rows {
        for &i in &var_cols {
            assert_eq!(row[i].parse::<f64>().unwrap(), 0.0);
        }
    }

    let (_, rows) = read("8");
    let any_var = rows.iter().any(|row| var_cols.iter().any(|&i| row[i].parse::<f64>().unwrap() > 0.0));
    assert!(any_var, "prior sampling should spread the predictions");
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let d = small();
    let out = d.dir.path().join("run");
    ok(&train(&d, &out, &["trainer.epochs=1", "trainer.folds=2"]));
    let other = synth(&["--classes", "3", "--per-class", "4", "--dim", "9"]);
    let o = tpa(&["eval", "--checkpoint", s(&out.join("fold_0.ckpt")), "--dataset", s(&other.dataset)]);
    assert_eq!(o.status.code(), Some(3));

    let junk = d.dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let o = tpa(&["eval", "--checkpoint", s(&junk), "--dataset", s(&d.dataset)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gradcheck_default_passes_and_is_deterministic() {
    let a = ok(&tpa(&["gradcheck", "--seeds", "2"]));
    let b = ok(&tpa(&["gradcheck", "--seeds", "2"]));
    assert_eq!(a, b);
    assert!(a.lines().last().unwrap().contains(", 0 failed"));
    assert!(a.contains("loss_ce_contrastive_kl"));
}

#[test]
fn gradcheck_tight_tolerance_fails() {
    let o = tpa(&["gradcheck", "--seeds", "1", "--tolerance", "1e-12"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL"));
    let failing: Vec<&str> = stdout.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert!(!failing.is_empty());
    // each failing row reports its magnitude
    for l in failing {
        let err: f64 = l.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!(err > 1e-12, "{l}");
    }
}

/// Separation 0 leaves labels independent of the frames, so held-out macro
/// F1 should sit near that of guessing.
#[test]
fn separation_zero_is_chance_level() {
    let classes = 3;
    let mut f1s = Vec::new();
    for seed in 0..5u64 {
        let seed_s = seed.to_string();
        let d = synth(&["--seed", &seed_s, "--separation", "0", "--dim", "16"]);
        let out = d.dir.path().join("run");
        ok(&train(&d, &out, &[&format!("trainer.seed={seed}")]));
        // every epoch's validation score, not the best one: picking the best
        // epoch on the validation fold biases the score upward
        let mut sum = 0.0;
        let mut n = 0;
        for fold in 0..5 {
            let report = read_json(&out.join(format!("fold_{fold}.json")));
            for rec in report["trace"].as_array().unwrap() {
                sum += rec["val_macro_f1"].as_f64().unwrap();
                n += 1;
            }
        }
        f1s.push(sum / n as f64);
    }
    let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;

    // uniform random guessing on the same 180 balanced labels
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let labels: Vec<usize> = (0..180).map(|i| i % classes).collect();
    let trials = 2000;
    let mut chance = 0.0;
    for _ in 0..trials {
        let pred: Vec<usize> = labels.iter().map(|_| rng.random_range(0..classes)).collect();
        let mut f1 = 0.0;
        for c in 0..classes {
            let tp = labels.iter().zip(&pred).filter(|&(&y, &p)| y == c && p == c).count() as f64;
            let fp = labels.iter().zip(&pred).filter(|&(&y, &p)| y != c && p == c).count() as f64;
            let fn_ = labels.iter().zip(&pred).filter(|&(&y, &p)| y == c && p != c).count() as f64;
            if tp > 0.0 {
                f1 += 2.0 * tp / (2.0 * tp + fp + fn_);
            }
        }
        chance += f1 / classes as f64;
    }
    chance /= trials as f64;
    assert!((chance - 1.0 / classes as f64).abs() < 0.01);
    assert!((mean - chance).abs() < 0.1, "per-seed {f1s:?}, mean {mean}, chance {chance}");
}
