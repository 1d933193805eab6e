use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qadapt::corpus::{generate_synthetic, save_canonical};
use qadapt::harness::{DataSource, DomainSource, ExperimentConfig};
use qadapt::trainer::SubsetPlan;
use qadapt::SynthDomainSpec;

fn qadapt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qadapt"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qadapt(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&qadapt(dir.path(), &["weights", "--source", "a", "--bogus"])), 1);
    assert_eq!(code(&qadapt(dir.path(), &["stats", "--corpus", "a", "--format", "xml"])), 1);
    assert_eq!(code(&qadapt(dir.path(), &["--help"])), 0);
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qadapt(dir.path(), &["stats", "--corpus", "missing.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.jsonl"));
    fs::write(dir.path().join("broken.json"), "{\"data\": [").unwrap();
    assert_eq!(code(&qadapt(dir.path(), &["stats", "--corpus", "broken.json"])), 2);
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.jsonl", "b.jsonl"] {
        let o = qadapt(dir.path(), &["gen-synth", "--preset", "manual", "--n", "50", "--seed", "9", "--out", out]);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 50);
}

#[test]
fn weights_of_a_corpus_against_itself_are_one() {
    let dir = tempfile::tempdir().unwrap();
    qadapt(dir.path(), &["gen-synth", "--preset", "general", "--n", "200", "--out", "g.jsonl"]);
    let o = qadapt(dir.path(), &["weights", "--source", "g.jsonl", "--target", "g.jsonl", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_lo,bin_hi,p_source,p_target,weight"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 2);
    assert!(rows.iter().all(|r| r.ends_with(",1.0")), "{text}");
}

#[test]
fn stats_writes_reports_to_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    qadapt(dir.path(), &["gen-synth", "--preset", "general", "--n", "100", "--out", "g.jsonl"]);
    qadapt(dir.path(), &["gen-synth", "--preset", "manual", "--n", "100", "--out", "m.jsonl"]);
    let o = qadapt(
        dir.path(),
        &[
            "stats", "--corpus", "g.jsonl", "--edges", "shared-with", "m.jsonl", "--prefix-words", "2", "--format",
            "csv", "--output", "st",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lengths.csv", "prefixes.csv", "shares.csv", "contrast.csv"] {
        assert!(dir.path().join("st").join(f).exists(), "{f}");
    }
    let o = qadapt(dir.path(), &["stats", "--corpus", "g.jsonl", "--edges", "nearby", "m.jsonl"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn overfit_single_pair_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_synthetic(&SynthDomainSpec::manual_like(1, 4)).unwrap();
    save_canonical(&c, dir.path().join("one.jsonl")).unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "ffn_dim": 32},
            "train": {"epochs": 60, "batch_size": 1, "learning_rate": 0.01,
                      "optimizer": {"kind": "adam", "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}}"#,
    )
    .unwrap();
    let o = qadapt(dir.path(), &["train", "--corpus", "one.jsonl", "--config", "cfg.json", "--out", "m.ckpt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(log["steps"], 60);

    let o = qadapt(dir.path(), &["eval", "--model", "m.ckpt", "--corpus", "one.jsonl", "--predictions", "p.json"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["f1"], 1.0);
    let preds: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(preds[&c.pairs()[0].id], c.pairs()[0].answer_text.as_str());

    let o = qadapt(dir.path(), &["finetune", "--base", "m.ckpt", "--corpus", "one.jsonl", "--out", "f.ckpt"]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("f.ckpt").exists());
}

#[test]
fn training_abort_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    qadapt(dir.path(), &["gen-synth", "--preset", "manual", "--n", "20", "--out", "m.jsonl"]);
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"model": {"d_model": 8, "n_layers": 1, "n_heads": 1, "ffn_dim": 8, "max_seq_len": 10}}"#,
    )
    .unwrap();
    let o = qadapt(dir.path(), &["train", "--corpus", "m.jsonl", "--config", "cfg.json", "--out", "x.ckpt"]);
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("x.ckpt").exists());
}

fn small_domain(name: &str, manual: bool, n_train: usize, seed: u64) -> DomainSource {
    let spec = |suffix: &str, n: usize, seed: u64| {
        let mut s = if manual {
            SynthDomainSpec::manual_like(n, seed)
        } else {
            SynthDomainSpec::general_like(n, seed)
        };
        s.name = format!("{name}{suffix}");
        s.context_sentences = (2, 3);
        DataSource::Synth { synth: s }
    };
    DomainSource {
        name: name.into(),
        train: spec("", n_train, seed),
        test: spec("-test", 30, seed + 100),
    }
}

#[test]
fn experiment_curve_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        domains: vec![small_domain("gen", false, 60, 1), small_domain("man", true, 40, 2)],
        plan: SubsetPlan {
            fractions: vec![25.0, 50.0],
            n_draws: 2,
            master_seed: 3,
        },
        ..ExperimentConfig::default()
    };
    cfg.model.d_model = 8;
    cfg.model.ffn_dim = 8;
    cfg.model.n_layers = 1;
    cfg.base_train.epochs = 1;
    cfg.finetune.epochs = 1;
    fs::write(dir.path().join("exp.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    for out in ["r1", "r2"] {
        let o = qadapt(dir.path(), &["experiment", "curve", "--config", "exp.json", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).trim(), Path::new(out).join("curve.json").to_str().unwrap());
    }
    let a = fs::read(dir.path().join("r1/curve.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("r2/curve.json")).unwrap());

    let o = qadapt(dir.path(), &["experiment", "curve", "--config", "exp.json", "--out", "r3", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("r3/curve.csv")).unwrap();
    // base + 2 fractions x 2 draws x {finetune, scratch}
    assert_eq!(csv.lines().count(), 1 + 1 + 8);
}
