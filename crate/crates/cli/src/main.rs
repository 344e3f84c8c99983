//! `qgen`: one binary orchestrating the pipeline — preprocess,
//! build-vocab, pretrain-sentence-encoder, train, generate, evaluate,
//! ablate.
//!
//! Exit codes: 0 success, 2 usage errors, 3 data/vocab integrity errors,
//! 1 anything else. Failures print one machine-parsable line:
//! `error category=<category>: <message>`.

mod config;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use qgen_core::corpus::{
    load_dataset, read_examples, write_examples, AnnotationFile, IndexedExample, VocabFile,
};
use qgen_core::inference::generate_corpus;
use qgen_core::model::QgModel;
use qgen_core::tensor::Graph;
use qgen_core::training::{
    ladder, pretrain_sentence_encoder, run_ablation, AblationSetup, Checkpoint,
    SentenceEncoderMode,
};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "qgen",
    about = "Answer-focused neural question generation pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build source/target vocabularies from a training dataset.
    BuildVocab(BuildVocabArgs),
    /// Tokenize, annotate, align answers, and index a dataset split.
    Preprocess(PreprocessArgs),
    /// Two-step sentence-encoder pre-training.
    PretrainSentenceEncoder(PretrainArgs),
    /// SGD training with perplexity-based model selection.
    Train(TrainArgs),
    /// Beam-search generation over a preprocessed split.
    Generate(GenerateArgs),
    /// Score generated questions against gold references.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the cumulative feature-ablation ladder.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct CommonOut {
    /// Output directory; all artifacts land here with content hashes.
    #[arg(long)]
    out: PathBuf,
    /// Config file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Dataset JSON (articles/paragraphs/qas layout).
    #[arg(long)]
    input: PathBuf,
    /// Annotation sidecar JSON.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    /// Vocabulary file produced by build-vocab.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Basename of the emitted examples file (<name>.jsonl).
    #[arg(long, default_value = "examples")]
    name: String,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct PretrainArgs {
    /// Preprocessed training split (.jsonl).
    #[arg(long)]
    train: PathBuf,
    /// Preprocessed dev split (.jsonl).
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Sentence-encoder checkpoint from pretrain-sentence-encoder
    /// (required when the config says sentence_encoder = "pretrained").
    #[arg(long)]
    sentence_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Preprocessed split to generate questions for.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generation output (.jsonl of {doc_id, sent_index, answer_span,
    /// question}).
    #[arg(long)]
    hypotheses: PathBuf,
    /// Preprocessed gold split (.jsonl).
    #[arg(long)]
    references: PathBuf,
    /// Reference-set protocol.
    #[arg(long, value_parser = ["multi", "single"])]
    setup: String,
    #[command(flatten)]
    common: CommonOut,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Preprocessed test split used for metric rows.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[command(flatten)]
    common: CommonOut,
}

struct CliError {
    category: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    fn new(category: &'static str, message: impl std::fmt::Display) -> Self {
        CliError { category, message: message.to_string(), code: 1 }
    }

    fn integrity(message: impl std::fmt::Display) -> Self {
        CliError { category: "integrity", message: message.to_string(), code: 3 }
    }
}

macro_rules! cli_from {
    ($ty:ty, $cat:literal) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($cat, e)
            }
        }
    };
}
cli_from!(std::io::Error, "io");
cli_from!(qgen_core::training::TrainError, "training");
cli_from!(qgen_core::eval::EvalError, "evaluation");
cli_from!(qgen_core::params::ParamError, "checkpoint");

impl From<qgen_core::corpus::CorpusError> for CliError {
    fn from(e: qgen_core::corpus::CorpusError) -> Self {
        match e {
            qgen_core::corpus::CorpusError::VocabHashMismatch { .. } => CliError::integrity(e),
            other => CliError::new("corpus", other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildVocab(a) => build_vocab_cmd(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::PretrainSentenceEncoder(a) => pretrain_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error category={}: {}", e.category, e.message);
            ExitCode::from(e.code)
        }
    }
}

// ── shared helpers ──────────────────────────────────────────────────────

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(toml::from_str("").expect("defaults parse")),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| CliError::new("config", e))
        }
    }
}

fn load_annotations(path: Option<&Path>) -> Result<Option<AnnotationFile>, CliError> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Ok(Some(AnnotationFile::parse(&text)?))
        }
    }
}

fn load_vocab(path: &Path) -> Result<VocabFile, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(VocabFile::parse(&text)?)
}

fn load_split(path: &Path, expect_hash: &str) -> Result<Vec<IndexedExample>, CliError> {
    let file = fs::File::open(path)?;
    let (examples, _) = read_examples(BufReader::new(file), Some(expect_hash))?;
    Ok(examples)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory with a content-hash manifest over its artifacts.
struct OutDir {
    dir: PathBuf,
    hashes: Vec<(String, String)>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), hashes: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.hashes.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    /// Resolved-config snapshot plus the content-hash manifest. Diagnostic
    /// logs carry wall-clock timing and stay out of the manifest.
    fn finish(mut self, subcommand: &str, seed: u64, config: &FileConfig) -> Result<(), CliError> {
        let snapshot = serde_json::json!({
            "subcommand": subcommand,
            "seed": seed,
            "config": config,
        });
        let bytes = serde_json::to_vec_pretty(&snapshot).expect("snapshot serializes");
        self.write("run_config.json", &bytes)?;
        let manifest: serde_json::Map<String, serde_json::Value> = self
            .hashes
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let manifest_bytes =
            serde_json::to_vec_pretty(&serde_json::Value::Object(manifest)).expect("manifest");
        fs::write(self.dir.join("manifest.json"), manifest_bytes)?;
        Ok(())
    }
}

// ── subcommands ─────────────────────────────────────────────────────────

fn build_vocab_cmd(args: BuildVocabArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let (records, skipped) = load_dataset(&args.input).map_err(CliError::from)?;
    let annotations = load_annotations(args.annotations.as_deref())?;
    let pre = config.preprocess_config();
    let out = qgen_core::corpus::preprocess(&records, annotations.as_ref(), &pre, None)?;
    let mut dir = OutDir::create(&args.common.out)?;
    let vocab_file = VocabFile::new(out.src_vocab, out.tgt_vocab);
    dir.write("vocab.json", vocab_file.to_json().as_bytes())?;
    let stats = serde_json::json!({
        "stats": out.stats,
        "skipped_missing_answers": skipped,
        "vocab_hash": vocab_file.hash(),
    });
    dir.write("build_vocab_stats.json", &serde_json::to_vec_pretty(&stats).unwrap())?;
    dir.finish("build-vocab", args.common.seed, &config)?;
    println!("vocab written: src {} tgt {}", vocab_file.src.size(), vocab_file.tgt.size());
    Ok(())
}

fn preprocess_cmd(args: PreprocessArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let vocab = load_vocab(&args.vocab)?;
    let (records, skipped) = load_dataset(&args.input).map_err(CliError::from)?;
    let annotations = load_annotations(args.annotations.as_deref())?;
    let pre = config.preprocess_config();
    let out = qgen_core::corpus::preprocess(
        &records,
        annotations.as_ref(),
        &pre,
        Some((vocab.src.clone(), vocab.tgt.clone())),
    )?;
    let mut buf = Vec::new();
    write_examples(&mut buf, &out.examples, &out.vocab_hash)?;
    let mut dir = OutDir::create(&args.common.out)?;
    dir.write(&format!("{}.jsonl", args.name), &buf)?;
    let stats = serde_json::json!({
        "stats": out.stats,
        "skipped_missing_answers": skipped,
        "vocab_hash": out.vocab_hash,
    });
    dir.write(&format!("{}_stats.json", args.name), &serde_json::to_vec_pretty(&stats).unwrap())?;
    dir.finish("preprocess", args.common.seed, &config)?;
    println!("{} examples written", out.examples.len());
    Ok(())
}

fn pretrain_cmd(args: PretrainArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let vocab = load_vocab(&args.vocab)?;
    let hash = vocab.hash();
    let train_data = load_split(&args.train, &hash)?;
    let dev_data = load_split(&args.dev, &hash)?;
    let mut model_config = config.model_config(vocab.src.size(), vocab.tgt.size());
    model_config.use_sentence_encoder = true;
    let train_config = config.train_config(args.common.seed);
    let outcome =
        pretrain_sentence_encoder(&train_data, &dev_data, &model_config, &train_config, &hash)?;
    let mut dir = OutDir::create(&args.common.out)?;
    let mut ckpt_bytes = Vec::new();
    outcome.checkpoint.write(&mut ckpt_bytes)?;
    dir.write("sentence_encoder.ckpt", &ckpt_bytes)?;
    let mut log = String::new();
    for e in &outcome.step1_log {
        log.push_str(&serde_json::to_string(&serde_json::json!({"step": 1, "log": e})).unwrap());
        log.push('\n');
    }
    for e in &outcome.step2_log {
        log.push_str(&serde_json::to_string(&serde_json::json!({"step": 2, "log": e})).unwrap());
        log.push('\n');
    }
    fs::write(args.common.out.join("pretrain_log.jsonl"), log)?;
    dir.finish("pretrain-sentence-encoder", args.common.seed, &config)?;
    println!(
        "sentence encoder pretrained: best dev cosine loss {:.6} at epoch {}",
        outcome.checkpoint.meta.dev_ppl, outcome.checkpoint.meta.epoch
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let vocab = load_vocab(&args.vocab)?;
    let hash = vocab.hash();
    let train_data = load_split(&args.train, &hash)?;
    let dev_data = load_split(&args.dev, &hash)?;
    let model_config = config.model_config(vocab.src.size(), vocab.tgt.size());
    let train_config = config.train_config(args.common.seed);

    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let model = QgModel::init(&mut g, model_config, &mut rng, None, None);
    match config.model.sentence_encoder {
        SentenceEncoderMode::Pretrained => {
            let path = args.sentence_checkpoint.as_deref().ok_or_else(|| {
                CliError::new(
                    "config",
                    "sentence_encoder = \"pretrained\" requires --sentence-checkpoint",
                )
            })?;
            let ckpt = Checkpoint::load(path)?;
            if ckpt.meta.vocab_hash != hash {
                return Err(CliError::integrity(format!(
                    "sentence checkpoint was trained with vocab {}, supplied vocab is {}",
                    ckpt.meta.vocab_hash, hash
                )));
            }
            model.registry.import_prefixed(&mut g, &ckpt.tensors, "encoder.sent_lstm")?;
        }
        SentenceEncoderMode::Scratch | SentenceEncoderMode::Off => {}
    }

    let outcome =
        qgen_core::training::train(&mut g, &model, &train_data, &dev_data, &train_config, &hash)?;
    let mut dir = OutDir::create(&args.common.out)?;
    let mut ckpt_bytes = Vec::new();
    outcome.best.write(&mut ckpt_bytes)?;
    dir.write("model.ckpt", &ckpt_bytes)?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e).unwrap());
        log.push('\n');
    }
    fs::write(args.common.out.join("train_log.jsonl"), log)?;
    dir.finish("train", args.common.seed, &config)?;
    println!(
        "best dev perplexity {:.6} at epoch {}",
        outcome.best.meta.dev_ppl, outcome.best_epoch
    );
    Ok(())
}

fn generate_cmd(args: GenerateArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let vocab = load_vocab(&args.vocab)?;
    let hash = vocab.hash();
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    // a checkpoint only drives generation over the vocabulary it saw
    if ckpt.meta.vocab_hash != hash {
        return Err(CliError::integrity(format!(
            "checkpoint vocab hash {} disagrees with supplied vocab {}",
            ckpt.meta.vocab_hash, hash
        )));
    }
    let data = load_split(&args.input, &hash)?;
    let beam = args.beam.unwrap_or(config.inference.beam);
    let max_len = args.max_len.unwrap_or(config.inference.max_len);

    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.meta.train_config.seed);
    let model = QgModel::init(&mut g, ckpt.meta.model_config.clone(), &mut rng, None, None);
    model.registry.import(&mut g, &ckpt.tensors)?;
    let tgt = &vocab.tgt;
    let generations = generate_corpus(
        &mut g,
        &model,
        &data,
        |id| tgt.token(id).to_string(),
        beam,
        max_len,
        args.common.seed,
    );
    let mut out = String::new();
    for gen in &generations {
        out.push_str(&serde_json::to_string(gen).unwrap());
        out.push('\n');
    }
    let mut dir = OutDir::create(&args.common.out)?;
    dir.write("generations.jsonl", out.as_bytes())?;
    dir.finish("generate", args.common.seed, &config)?;
    println!("{} questions generated", generations.len());
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let setup = match args.setup.as_str() {
        "multi" => qgen_core::eval::RefSetup::MultiRef,
        _ => qgen_core::eval::RefSetup::SingleRef,
    };
    let hyp_text = fs::read_to_string(&args.hypotheses)?;
    let mut generations = Vec::new();
    for line in hyp_text.lines().filter(|l| !l.trim().is_empty()) {
        let gen: qgen_core::inference::Generation =
            serde_json::from_str(line).map_err(|e| CliError::new("evaluation", e))?;
        generations.push(gen);
    }
    let file = fs::File::open(&args.references)?;
    let (gold, _) = read_examples(BufReader::new(file), None)?;
    let refset = qgen_core::eval::ReferenceSet::build(&generations, &gold, setup)?;
    let report = qgen_core::eval::score(&refset)?;
    let mut dir = OutDir::create(&args.common.out)?;
    dir.write("report.json", &serde_json::to_vec_pretty(&report).unwrap())?;
    dir.finish("evaluate", args.common.seed, &config)?;
    println!(
        "bleu4 {:.4} meteor_simplified {:.4} rouge_l {:.4} unique {}",
        report.bleu4, report.meteor_simplified, report.rouge_l, report.unique_count
    );
    Ok(())
}

fn ablate_cmd(args: AblateArgs) -> Result<(), CliError> {
    let config = load_config(args.common.config.as_deref())?;
    let vocab = load_vocab(&args.vocab)?;
    let hash = vocab.hash();
    let train_data = load_split(&args.train, &hash)?;
    let dev_data = load_split(&args.dev, &hash)?;
    let test_data = load_split(&args.test, &hash)?;
    let mut data_hasher = Sha256::new();
    for p in [&args.train, &args.dev, &args.test] {
        data_hasher.update(fs::read(p)?);
    }
    let data_hash: String =
        data_hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    let setup = AblationSetup {
        train_data: &train_data,
        dev_data: &dev_data,
        test_data: &test_data,
        base_encoder: config.encoder_config(),
        train_config: config.train_config(args.common.seed),
        src_vocab: &vocab.src,
        tgt_vocab: &vocab.tgt,
        vocab_hash: hash,
        data_hash,
        beam: config.inference.beam,
        max_len: config.inference.max_len,
        rungs: ladder(),
    };
    let rows = run_ablation(&setup)?;
    let mut dir = OutDir::create(&args.common.out)?;
    dir.write("ablation.json", &serde_json::to_vec_pretty(&rows).unwrap())?;
    dir.finish("ablate", args.common.seed, &config)?;
    for row in &rows {
        println!(
            "{:<12} bleu4 {:>7.3} meteor {:>7.3} rougeL {:>7.3} dev_ppl {:>8.3}",
            row.model_name, row.bleu4, row.meteor, row.rouge_l, row.dev_ppl
        );
    }
    Ok(())
}
