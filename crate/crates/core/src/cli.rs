//! The `swmnn` command line.
//!
//! Every command writes its artifacts into an output directory and finishes
//! with a `manifest.json` that records the effective arguments, the resolved
//! configuration and seed, and content hashes of every input and output.
//! `swmnn replay` re-runs a manifest and verifies the outputs byte for byte.
//!
//! Options may also come from a `--config` file of `key = value` lines; flags
//! given on the command line take precedence over the file. Seeds fall back
//! to the `RATIONALITY_SEED` environment variable.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{self, PerturbMode, PerturbPolicy, SplitSpec};
use crate::error::{read_to_string, write_file};
use crate::lexicon::SememeLexicon;
use crate::model::{self, SwmConfig, Variant};
use crate::ngram::{NGramModel, ThresholdClassifier};
use crate::pipeline::{self, Bundle, Example, LEXICON_FILE};
use crate::synthetic::{self, SynthConfig, SynthSpec};
use crate::trainer::{self, TrainConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SEED_ENV: &str = "RATIONALITY_SEED";

#[derive(Debug, Parser)]
#[command(name = "swmnn", version, about = "Sentence semantic rationality detection with sememe-word matching")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a labelled dataset from a POS-tagged corpus.
    GenData(GenDataArgs),
    /// Generate the synthetic toy language, its lexicon and a dataset.
    GenSynth(GenSynthArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Evaluate a saved model on labelled sentences.
    Eval(EvalArgs),
    /// Train several variants on the same data and compare them.
    Ablate(AblateArgs),
    /// Kneser-Ney language model with a validation-fitted threshold.
    BaselineKn(BaselineKnArgs),
    /// Compare backpropagated and numerical gradients on tiny models.
    GradCheck(GradCheckArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Corpus with one sentence per line as space-separated `word_TAG` tokens.
    #[arg(long)]
    pub corpus: PathBuf,
    /// replace1, replace2, swap-same-pos, swap-random, mixed or lm-gen.
    #[arg(long)]
    pub mode: PerturbMode,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Sentences with at most this many tokens are skipped.
    #[arg(long, default_value_t = datagen::DEFAULT_MIN_LENGTH)]
    pub min_length: usize,
    /// Comma-separated tags that are never replaced or moved.
    #[arg(long)]
    pub punct_tags: Option<String>,
    /// Train, valid and test fractions of the corpus.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    /// Exact positives per split; overrides `--split`.
    #[arg(long)]
    pub counts: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub categories: usize,
    #[arg(long, default_value_t = 8)]
    pub nouns_per_category: usize,
    #[arg(long, default_value_t = 0.5)]
    pub polysemous_fraction: f64,
    #[arg(long, default_value_t = 0.25)]
    pub held_out_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    pub held_out_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub verbs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub attribute_verb_fraction: f64,
    #[arg(long, default_value_t = 8)]
    pub fillers: usize,
    #[arg(long, default_value_t = 1000)]
    pub train_pairs: usize,
    #[arg(long, default_value_t = 125)]
    pub valid_pairs: usize,
    #[arg(long, default_value_t = 125)]
    pub test_pairs: usize,
}

/// Model shape and optimizer settings shared by `train` and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Embedding, hidden and attention size.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    /// Word vocabulary size including PAD and UNK.
    #[arg(long, default_value_t = crate::lexicon::WORD_VOCAB_CAPACITY)]
    pub word_vocab_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Updates between validation passes.
    #[arg(long, default_value_t = 200)]
    pub validate_every: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
}

impl ModelArgs {
    pub fn model_template(&self) -> SwmConfig {
        let mut c = SwmConfig::new(1, 1).with_dims(self.dim);
        c.dropout = self.dropout;
        c.max_sentence_length = self.max_len;
        c
    }

    pub fn train_config(&self, variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip,
            epochs: self.epochs,
            validate_every: self.validate_every,
            batch_size: self.batch_size,
            seed,
            variant,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with `train.tsv` and `valid.tsv` (and optionally `test.tsv`).
    #[arg(long)]
    pub data: PathBuf,
    /// Sememe lexicon, one `word<TAB>sememes | sememes` line per word.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, default_value = "full")]
    pub variant: Variant,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to `runs/train-<variant>-<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// A labelled TSV file, or a dataset directory whose `test.tsv` is used.
    #[arg(long)]
    pub data: PathBuf,
    /// Also write per-sentence attention and matching weights.
    #[arg(long)]
    pub dump_attention: bool,
    /// Defaults to `runs/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Directory with `train.tsv`, `valid.tsv` and `test.tsv`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Comma-separated variants; all of them by default.
    #[arg(long)]
    pub variants: Option<String>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to `runs/ablate-<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BaselineKnArgs {
    /// Directory with `train.tsv`, `valid.tsv` and `test.tsv`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Defaults to `runs/baseline-kn-<order>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Sentence length.
    #[arg(long, default_value_t = 3)]
    pub len: usize,
    /// Senses per word.
    #[arg(long, default_value_t = 2)]
    pub senses: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Comma-separated variants; all of them by default.
    #[arg(long)]
    pub variants: Option<String>,
    /// Defaults to `runs/grad-check`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Path and content hash of one file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    /// SHA-256 over `blob <len>\0<contents>`, as in git's SHA-256 object format.
    pub sha256: String,
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective arguments, config-file values and resolved seed included.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path)?)?)
    }
}

/// Git-style content hash of a byte string.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileRecord {
        path: path.display().to_string(),
        sha256: blob_hash(&bytes),
    })
}

/// Hashes of every file below `dir` except the manifest, sorted by relative path.
pub fn hash_outputs(dir: &Path) -> Result<Vec<FileRecord>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileRecord>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if path != root.join(MANIFEST_FILE) {
                let mut rec = hash_file(&path)?;
                rec.path = path.strip_prefix(root).unwrap_or(&path).display().to_string();
                out.push(rec);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Splits `key = value` lines into `--key=value` arguments. Blank lines and
/// `#` comments are ignored; `true` turns a switch on and `false` leaves it off.
pub fn config_file_args(text: &str, origin: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("invalid key in {line:?}"),
            });
        }
        match value.trim() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => args.push(format!("--{key}={v}")),
        }
    }
    Ok(args)
}

/// Removes `--config` from `argv` and splices the file's options in right
/// after the subcommand, so that later command-line flags override them.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it
                .next()
                .ok_or_else(|| Error::invalid("--config requires a file path"))?;
            config = Some(path);
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    if rest.len() < 2 {
        return Err(Error::invalid("--config must follow a subcommand"));
    }
    let injected = config_file_args(&read_to_string(Path::new(&path))?, &path)?;
    let tail = rest.split_off(2);
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let values = parts
        .iter()
        .map(|p| p.parse::<T>().ok())
        .collect::<Option<Vec<T>>>()
        .filter(|v| v.len() == 3)
        .ok_or_else(|| Error::invalid(format!("{what} needs three comma-separated numbers, got {text:?}")))?;
    values
        .try_into()
        .map_err(|_| Error::invalid(format!("{what}: expected three values")))
}

fn parse_variants(list: Option<&str>) -> Result<Vec<Variant>> {
    let Some(list) = list else {
        return Ok(Variant::ALL.to_vec());
    };
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: Variant = name.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no variants given"));
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_split(dir: &Path, name: &str) -> Result<Vec<Example>> {
    datagen::load_examples(&dir.join(format!("{name}.tsv")))
}

fn load_lexicon(path: &Path) -> Result<SememeLexicon> {
    pipeline::parse_lexicon(&read_to_string(path)?, &path.display().to_string())
}

/// What a finished command reports back to [`execute`].
struct Outcome {
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    out: PathBuf,
    /// False when the run completed but its check failed.
    passed: bool,
}

fn gen_data(a: &GenDataArgs) -> Result<Outcome> {
    let mut policy = PerturbPolicy::new(a.mode, a.seed);
    policy.min_length = a.min_length;
    if let Some(tags) = &a.punct_tags {
        policy.punct_tags = tags
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect::<BTreeSet<_>>();
    }
    let split = match &a.counts {
        Some(c) => SplitSpec::Counts(parse_list(c, "--counts")?),
        None => SplitSpec::Ratios(parse_list(&a.split, "--split")?),
    };
    let corpus = datagen::load_corpus(&a.corpus)?;
    let dataset = datagen::build_dataset(&corpus.sentences, &policy, split)?;
    create_dir(&a.out)?;
    dataset.write(&a.out)?;
    print!("{}", dataset.summary_table());
    if corpus.skipped_empty > 0 {
        println!("skipped {} empty corpus lines", corpus.skipped_empty);
    }
    Ok(Outcome {
        config: serde_json::json!({ "policy": policy, "split": format!("{split:?}") }),
        seed: Some(a.seed),
        inputs: vec![a.corpus.clone()],
        out: a.out.clone(),
        passed: true,
    })
}

fn gen_synth(a: &GenSynthArgs) -> Result<Outcome> {
    let config = SynthConfig {
        categories: a.categories,
        nouns_per_category: a.nouns_per_category,
        polysemous_fraction: a.polysemous_fraction,
        held_out_fraction: a.held_out_fraction,
        verbs: a.verbs,
        attribute_verb_fraction: a.attribute_verb_fraction,
        fillers: a.fillers,
        pairs: [a.train_pairs, a.valid_pairs, a.test_pairs],
        held_out_rate: a.held_out_rate,
        seed: a.seed,
    };
    let spec = SynthSpec::generate(&config)?;
    let data = synthetic::gen_synthetic(&spec)?;
    create_dir(&a.out)?;
    data.write(&a.out)?;
    print!("{}", data.dataset.summary_table());
    println!(
        "nouns {} ({:.0}% polysemous, {} held out)",
        spec.nouns.len(),
        100.0 * spec.polysemous_fraction(),
        spec.held_out.len()
    );
    Ok(Outcome {
        config: serde_json::to_value(&config)?,
        seed: Some(a.seed),
        inputs: vec![],
        out: a.out.clone(),
        passed: true,
    })
}

#[derive(Serialize)]
struct TrainSummary {
    variant: Variant,
    initial_valid_accuracy: f64,
    best_valid_accuracy: f64,
    best_update: usize,
    updates: usize,
    test_accuracy: Option<f64>,
}

fn train_cmd(a: &TrainArgs) -> Result<Outcome> {
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/train-{}-{}", a.variant, a.seed)));
    let train = load_split(&a.data, "train")?;
    let valid = load_split(&a.data, "valid")?;
    let test_path = a.data.join("test.tsv");
    let test = if test_path.exists() {
        Some(datagen::load_examples(&test_path)?)
    } else {
        None
    };
    let lexicon = load_lexicon(&a.lexicon)?;
    let template = a.model.model_template();
    let tc = a.model.train_config(a.variant, a.seed);
    let (bundle, outcome) = pipeline::fit(&train, &valid, lexicon, &template, a.model.word_vocab_size, &tc)?;
    let test_accuracy = test.as_deref().map(|t| bundle.accuracy(t)).transpose()?;
    create_dir(&out)?;
    bundle.save(&out)?;
    write_file(&out.join("train.log.tsv"), trainer::format_log(&outcome.log))?;
    let summary = TrainSummary {
        variant: a.variant,
        initial_valid_accuracy: outcome.initial_valid_accuracy,
        best_valid_accuracy: outcome.best_valid_accuracy,
        best_update: outcome.best_update,
        updates: outcome.updates,
        test_accuracy,
    };
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "{}: best valid acc {:.4} at update {} of {}",
        a.variant, outcome.best_valid_accuracy, outcome.best_update, outcome.updates
    );
    if let Some(t) = test_accuracy {
        println!("{}: test acc {t:.4}", a.variant);
    }
    let mut inputs = vec![a.data.join("train.tsv"), a.data.join("valid.tsv"), a.lexicon.clone()];
    if test.is_some() {
        inputs.push(test_path);
    }
    Ok(Outcome {
        config: serde_json::json!({ "model": bundle.model.config, "train": tc }),
        seed: Some(a.seed),
        inputs,
        out,
        passed: true,
    })
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join("\t")
}

/// One block per sentence: tokens, gold and predicted label, class
/// probabilities, then each attention distribution and, per word, the
/// matching weights over its senses.
fn attention_dump(bundle: &Bundle, data: &[Example]) -> Result<String> {
    let mut out = String::new();
    for (i, (tokens, label)) in data.iter().enumerate() {
        let trace = bundle.trace(tokens)?;
        let _ = writeln!(out, "# sentence {i}\tlabel={label}\tpredicted={}", trace.predicted());
        let _ = writeln!(out, "tokens\t{}", tokens.join("\t"));
        let _ = writeln!(out, "probabilities\t{}", join_f64(&trace.probabilities));
        if let Some(w) = &trace.word_attention {
            let _ = writeln!(out, "word_attention\t{}", join_f64(w));
        }
        if let Some(s) = &trace.sememe_attention {
            let _ = writeln!(out, "sememe_attention\t{}", join_f64(s));
        }
        if let Some(m) = &trace.matching {
            for (tok, weights) in tokens.iter().zip(m) {
                let _ = writeln!(out, "matching\t{tok}\t{}", join_f64(weights));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn eval_cmd(a: &EvalArgs) -> Result<Outcome> {
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs/eval"));
    let data_path = if a.data.is_dir() {
        a.data.join("test.tsv")
    } else {
        a.data.clone()
    };
    let data = datagen::load_examples(&data_path)?;
    if data.is_empty() {
        return Err(Error::invalid(format!("{} has no examples", data_path.display())));
    }
    let bundle = Bundle::load(&a.model)?;
    let predictions = bundle.predictions(&data)?;
    let correct = predictions.iter().zip(&data).filter(|(p, (_, y))| *p == y).count();
    let accuracy = correct as f64 / data.len() as f64;
    create_dir(&out)?;
    let mut lines = String::from("label\tpredicted\tsentence\n");
    for (p, (tokens, y)) in predictions.iter().zip(&data) {
        let _ = writeln!(lines, "{y}\t{p}\t{}", tokens.join(" "));
    }
    write_file(&out.join("predictions.tsv"), lines)?;
    let report = serde_json::json!({
        "variant": bundle.variant,
        "examples": data.len(),
        "correct": correct,
        "accuracy": accuracy,
    });
    write_file(&out.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    if a.dump_attention {
        write_file(&out.join("attention.txt"), attention_dump(&bundle, &data)?)?;
    }
    println!("{}: accuracy {accuracy:.4} ({correct}/{})", bundle.variant, data.len());
    let mut inputs: Vec<PathBuf> = [pipeline::CHECKPOINT_FILE, pipeline::WORDS_FILE, pipeline::SEMEMES_FILE, LEXICON_FILE]
        .iter()
        .map(|f| a.model.join(f))
        .collect();
    inputs.push(data_path);
    Ok(Outcome {
        config: serde_json::json!({ "dump_attention": a.dump_attention }),
        seed: None,
        inputs,
        out,
        passed: true,
    })
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
}

/// Tab-separated table with each variant's test accuracy relative to `full`.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let full = rows.iter().find(|r| r.variant == Variant::Full).map(|r| r.test_accuracy);
    let mut out = String::from("variant\tvalid_acc\ttest_acc\tdelta_vs_full\n");
    for r in rows {
        let delta = match full {
            Some(f) => format!("{:+.4}", r.test_accuracy - f),
            None => "NA".to_string(),
        };
        let _ = writeln!(out, "{}\t{:.4}\t{:.4}\t{delta}", r.variant, r.valid_accuracy, r.test_accuracy);
    }
    out
}

fn ablate(a: &AblateArgs) -> Result<Outcome> {
    let variants = parse_variants(a.variants.as_deref())?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/ablate-{}", a.seed)));
    let train = load_split(&a.data, "train")?;
    let valid = load_split(&a.data, "valid")?;
    let test = load_split(&a.data, "test")?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let template = a.model.model_template();
    create_dir(&out)?;
    let mut rows = Vec::new();
    for &variant in &variants {
        let tc = a.model.train_config(variant, a.seed);
        let (bundle, outcome) =
            pipeline::fit(&train, &valid, lexicon.clone(), &template, a.model.word_vocab_size, &tc)?;
        let row = AblationRow {
            variant,
            valid_accuracy: outcome.best_valid_accuracy,
            test_accuracy: bundle.accuracy(&test)?,
        };
        log::info!("{variant}: valid {:.4} test {:.4}", row.valid_accuracy, row.test_accuracy);
        write_file(&out.join(format!("{variant}.log.tsv")), trainer::format_log(&outcome.log))?;
        rows.push(row);
    }
    let table = ablation_table(&rows);
    write_file(&out.join("ablation.tsv"), &table)?;
    print!("{table}");
    Ok(Outcome {
        config: serde_json::json!({
            "variants": variants,
            "model": pipeline::prepare(&train, &valid, lexicon, &template, a.model.word_vocab_size)?.model_config,
            "train": a.model.train_config(variants[0], a.seed),
        }),
        seed: Some(a.seed),
        inputs: vec![
            a.data.join("train.tsv"),
            a.data.join("valid.tsv"),
            a.data.join("test.tsv"),
            a.lexicon.clone(),
        ],
        out,
        passed: true,
    })
}

fn baseline_kn(a: &BaselineKnArgs) -> Result<Outcome> {
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/baseline-kn-{}", a.order)));
    let train = load_split(&a.data, "train")?;
    let valid = load_split(&a.data, "valid")?;
    let test = load_split(&a.data, "test")?;
    let positives: Vec<Vec<String>> = train.into_iter().filter(|(_, y)| *y == 1).map(|(t, _)| t).collect();
    if positives.is_empty() {
        return Err(Error::invalid("the training split has no rational (label 1) sentences"));
    }
    let lm = NGramModel::train(&positives, a.order)?;
    let classifier = ThresholdClassifier::fit(lm, &valid)?;
    let test_accuracy = classifier.accuracy(&test)?;
    create_dir(&out)?;
    classifier.model.save(&out.join("kn.json"))?;
    let report = serde_json::json!({
        "order": a.order,
        "discounts": classifier.model.discounts(),
        "threshold": classifier.threshold,
        "valid_accuracy": classifier.validation_accuracy,
        "test_accuracy": test_accuracy,
    });
    write_file(&out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "kn{}: threshold {:.6}, valid acc {:.4}, test acc {test_accuracy:.4}",
        a.order, classifier.threshold, classifier.validation_accuracy
    );
    Ok(Outcome {
        config: serde_json::json!({ "order": a.order }),
        seed: None,
        inputs: vec![a.data.join("train.tsv"), a.data.join("valid.tsv"), a.data.join("test.tsv")],
        out,
        passed: true,
    })
}

fn grad_check(a: &GradCheckArgs) -> Result<Outcome> {
    let variants = parse_variants(a.variants.as_deref())?;
    if a.dim == 0 || a.len == 0 || a.senses == 0 {
        return Err(Error::invalid("dim, len and senses must be at least 1"));
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs/grad-check"));
    let (model, sentence) = model::gradcheck::tiny_instance(a.seed, a.dim, a.len, a.senses);
    let mut table = String::from("variant\tlabel\tmax_rel_err\tpassed\n");
    let mut passed = true;
    for &variant in &variants {
        for label in 0..2 {
            let report = model::gradcheck::gradient_check(&model, &sentence, label, variant, a.step, a.tol)?;
            passed &= report.passed();
            let _ = writeln!(table, "{variant}\t{label}\t{:.3e}\t{}", report.max_rel_err(), report.passed());
        }
    }
    create_dir(&out)?;
    write_file(&out.join("gradcheck.tsv"), &table)?;
    print!("{table}");
    Ok(Outcome {
        config: serde_json::json!({
            "dim": a.dim, "len": a.len, "senses": a.senses,
            "step": a.step, "tol": a.tol, "variants": variants,
        }),
        seed: Some(a.seed),
        inputs: vec![],
        out,
        passed,
    })
}

fn replay(a: &ReplayArgs) -> Result<bool> {
    let manifest = RunManifest::load(&a.manifest)?;
    let mut argv = manifest.argv.clone();
    if argv.get(1).map(String::as_str) == Some("replay") {
        return Err(Error::invalid("a replay manifest cannot be replayed"));
    }
    if let Some(dir) = &a.out {
        argv.push(format!("--out={}", dir.display()));
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| Error::invalid(format!("recorded arguments: {e}")))?;
    let (out, _) = execute(&cli.command, &argv)?;
    let now = hash_outputs(&out)?;
    let mut identical = true;
    for rec in &manifest.outputs {
        match now.iter().find(|r| r.path == rec.path) {
            Some(r) if r.sha256 == rec.sha256 => {}
            Some(_) => {
                identical = false;
                println!("differs: {}", rec.path);
            }
            None => {
                identical = false;
                println!("missing: {}", rec.path);
            }
        }
    }
    for r in now.iter().filter(|r| !manifest.outputs.iter().any(|m| m.path == r.path)) {
        identical = false;
        println!("unexpected: {}", r.path);
    }
    if identical {
        println!("replay: all {} outputs identical", manifest.outputs.len());
    } else {
        println!("replay: outputs differ from the manifest");
    }
    Ok(identical)
}

/// Runs one command and writes its manifest. Returns the output directory
/// and whether the command's own check passed.
fn execute(command: &Command, argv: &[String]) -> Result<(PathBuf, bool)> {
    let (name, outcome) = match command {
        Command::GenData(a) => ("gen-data", gen_data(a)?),
        Command::GenSynth(a) => ("gen-synth", gen_synth(a)?),
        Command::Train(a) => ("train", train_cmd(a)?),
        Command::Eval(a) => ("eval", eval_cmd(a)?),
        Command::Ablate(a) => ("ablate", ablate(a)?),
        Command::BaselineKn(a) => ("baseline-kn", baseline_kn(a)?),
        Command::GradCheck(a) => ("grad-check", grad_check(a)?),
        Command::Replay(a) => return Ok((PathBuf::new(), replay(a)?)),
    };
    let mut argv = argv.to_vec();
    if let Some(seed) = outcome.seed {
        argv.push(format!("--seed={seed}"));
    }
    let manifest = RunManifest {
        tool: "swmnn".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        argv,
        config: outcome.config,
        seed: outcome.seed,
        inputs: outcome.inputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?,
        outputs: hash_outputs(&outcome.out)?,
    };
    write_file(
        &outcome.out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok((outcome.out, outcome.passed))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 when a run or its check fails and 2
/// for invalid input.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command, &argv) {
        Ok((_, true)) => 0,
        Ok((_, false)) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
