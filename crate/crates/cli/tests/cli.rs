//! End-to-end CLI tests driving the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qgen() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qgen"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn desk_config(dir: &Path, max_epochs: usize, sentence_encoder: &str) -> PathBuf {
    let path = dir.join("desk.toml");
    fs::write(
        &path,
        format!(
            r#"[model]
word_dim = 16
hidden = 24
layers = 2
ner_emb_dim = 8
dropout = 0.3
answer_feature = true
ner_feature = true
case_feature = true
coref_feature = true
copy = true
sentence_encoder = "{sentence_encoder}"

[training]
batch_size = 8
lr = 1.0
lr_decay = 0.5
patience = 3
clip_norm = 5.0
max_epochs = {max_epochs}
precision = "f64"

[preprocess]
src_vocab_max = 45000
tgt_vocab_max = 28000
max_source_len = 100
max_question_len = 50

[inference]
beam = 5
max_len = 20
"#
        ),
    )
    .unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn unknown_flag_is_usage_error_exit_2() {
    let out = qgen().arg("train").arg("--bogus-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_hard_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "[model]\nwidth_typo = 3\n").unwrap();
    let out = qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("v"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error category=config"), "{stderr}");
}

#[test]
fn evaluate_identity_fixture_reports_bleu_100() {
    // hypotheses == references -> BLEU 100.0 under the multi setup
    let tmp = tempfile::tempdir().unwrap();
    let config = desk_config(tmp.path(), 2, "off");
    let vocab_dir = tmp.path().join("vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&vocab_dir));
    let data_dir = tmp.path().join("data");
    run_ok(qgen()
        .args(["preprocess", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--name", "train", "--out"])
        .arg(&data_dir));

    // gold questions as hypotheses
    let text = fs::read_to_string(data_dir.join("train.jsonl")).unwrap();
    let mut hyps = String::new();
    for line in text.lines().skip(1) {
        let ex: serde_json::Value = serde_json::from_str(line).unwrap();
        let question = ex["tgt_tokens"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap())
            .collect::<Vec<_>>()
            .join(" ");
        let gen = serde_json::json!({
            "doc_id": ex["doc_id"],
            "sent_index": ex["sent_index"],
            "answer_span": ex["answer_span"],
            "question": question,
        });
        hyps.push_str(&gen.to_string());
        hyps.push('\n');
    }
    let hyp_path = tmp.path().join("hyps.jsonl");
    fs::write(&hyp_path, hyps).unwrap();
    let eval_dir = tmp.path().join("eval");
    let out = run_ok(qgen()
        .args(["evaluate", "--hypotheses"])
        .arg(&hyp_path)
        .arg("--references")
        .arg(data_dir.join("train.jsonl"))
        .args(["--setup", "multi", "--out"])
        .arg(&eval_dir));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bleu4 100.0000"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["bleu4"], 100.0);
}

#[test]
fn train_with_zero_lr_keeps_dev_ppl_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("zero_lr.toml");
    fs::write(
        &config_path,
        r#"[model]
word_dim = 12
hidden = 16
layers = 2
ner_emb_dim = 4
dropout = 0.0
answer_feature = true
ner_feature = true
case_feature = true
coref_feature = true
copy = true
sentence_encoder = "off"

[training]
batch_size = 16
lr = 0.0
lr_decay = 0.5
patience = 1
clip_norm = 5.0
max_epochs = 3
precision = "f64"
"#,
    )
    .unwrap();
    let vocab_dir = tmp.path().join("vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--out")
        .arg(&vocab_dir));
    let data_dir = tmp.path().join("data");
    run_ok(qgen()
        .args(["preprocess", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .args(["--name", "train", "--out"])
        .arg(&data_dir));
    let run_dir = tmp.path().join("run");
    run_ok(qgen()
        .args(["train", "--train"])
        .arg(data_dir.join("train.jsonl"))
        .arg("--dev")
        .arg(data_dir.join("train.jsonl"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config_path)
        .args(["--seed", "3", "--out"])
        .arg(&run_dir));
    let log = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    let ppls: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["dev_ppl"].as_f64().unwrap())
        .collect();
    assert_eq!(ppls.len(), 3);
    assert!(ppls.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{ppls:?}");
}

#[test]
fn full_pipeline_smoke_under_five_minutes() {
    let start = std::time::Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = desk_config(tmp.path(), 6, "pretrained");
    let vocab_dir = tmp.path().join("vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&vocab_dir));
    let data_dir = tmp.path().join("data");
    run_ok(qgen()
        .args(["preprocess", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--name", "train", "--out"])
        .arg(&data_dir));
    let pre_dir = tmp.path().join("pre");
    run_ok(qgen()
        .args(["pretrain-sentence-encoder", "--train"])
        .arg(data_dir.join("train.jsonl"))
        .arg("--dev")
        .arg(data_dir.join("train.jsonl"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&pre_dir));
    let run_dir = tmp.path().join("run");
    run_ok(qgen()
        .args(["train", "--train"])
        .arg(data_dir.join("train.jsonl"))
        .arg("--dev")
        .arg(data_dir.join("train.jsonl"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .arg("--sentence-checkpoint")
        .arg(pre_dir.join("sentence_encoder.ckpt"))
        .args(["--seed", "3", "--out"])
        .arg(&run_dir));
    let gen_dir = tmp.path().join("gen");
    run_ok(qgen()
        .args(["generate", "--checkpoint"])
        .arg(run_dir.join("model.ckpt"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--input")
        .arg(data_dir.join("train.jsonl"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&gen_dir));
    let eval_dir = tmp.path().join("eval");
    let out = run_ok(qgen()
        .args(["evaluate", "--hypotheses"])
        .arg(gen_dir.join("generations.jsonl"))
        .arg("--references")
        .arg(data_dir.join("train.jsonl"))
        .args(["--setup", "single", "--out"])
        .arg(&eval_dir));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bleu4"));
    // artifacts carry content hashes
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.get("model.ckpt").is_some());
    let gens = fs::read_to_string(gen_dir.join("generations.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 50);
    assert!(start.elapsed().as_secs() < 300, "pipeline smoke exceeded 5 minutes");
}

#[test]
fn generate_refuses_mismatched_vocab_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = desk_config(tmp.path(), 1, "off");
    // vocab + data + model from the fixture
    let vocab_dir = tmp.path().join("vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&vocab_dir));
    let data_dir = tmp.path().join("data");
    run_ok(qgen()
        .args(["preprocess", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--name", "train", "--out"])
        .arg(&data_dir));
    let run_dir = tmp.path().join("run");
    run_ok(qgen()
        .args(["train", "--train"])
        .arg(data_dir.join("train.jsonl"))
        .arg("--dev")
        .arg(data_dir.join("train.jsonl"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&run_dir));
    // a vocab built from different data has a different hash
    let other_vocab = tmp.path().join("other_vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("beyonce.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&other_vocab));
    let out = qgen()
        .args(["generate", "--checkpoint"])
        .arg(run_dir.join("model.ckpt"))
        .arg("--vocab")
        .arg(other_vocab.join("vocab.json"))
        .arg("--input")
        .arg(data_dir.join("train.jsonl"))
        .arg("--out")
        .arg(tmp.path().join("gen"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "integrity failures exit 3");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error category=integrity"), "{stderr}");
}

#[test]
fn identical_seed_and_config_reproduce_artifact_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = desk_config(tmp.path(), 2, "off");
    let vocab_dir = tmp.path().join("vocab");
    run_ok(qgen()
        .args(["build-vocab", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&vocab_dir));
    let data_dir = tmp.path().join("data");
    run_ok(qgen()
        .args(["preprocess", "--input"])
        .arg(fixture("train_50.json"))
        .arg("--vocab")
        .arg(vocab_dir.join("vocab.json"))
        .arg("--config")
        .arg(&config)
        .args(["--name", "train", "--out"])
        .arg(&data_dir));
    let run_once = |dir: &Path| -> serde_json::Value {
        run_ok(qgen()
            .args(["train", "--train"])
            .arg(data_dir.join("train.jsonl"))
            .arg("--dev")
            .arg(data_dir.join("train.jsonl"))
            .arg("--vocab")
            .arg(vocab_dir.join("vocab.json"))
            .arg("--config")
            .arg(&config)
            .args(["--seed", "11", "--out"])
            .arg(dir));
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
    };
    let m1 = run_once(&tmp.path().join("runA"));
    let m2 = run_once(&tmp.path().join("runB"));
    assert_eq!(m1["model.ckpt"], m2["model.ckpt"], "checkpoint hashes must match");
    assert_eq!(m1["run_config.json"], m2["run_config.json"]);
}
