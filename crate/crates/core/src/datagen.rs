//! Rationality datasets built from a POS-tagged corpus.
//!
//! Every source sentence that survives perturbation contributes one positive
//! (the original) and one negative (the perturbed copy), so every split is
//! exactly balanced. Sentences are assigned to splits before any
//! perturbation happens, and replacement candidates come from the training
//! split only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file};
use crate::ngram::NGramModel;
use crate::{Error, Result};

pub const DEFAULT_MIN_LENGTH: usize = 8;
/// Draws allowed before a replacement gives up on finding a new surface.
pub const MAX_RESAMPLE: usize = 100;
pub const LM_ORDER: usize = 5;

/// Punctuation tags of the common Chinese and English tag sets.
pub const DEFAULT_PUNCT_TAGS: &[&str] = &[
    "PU", "PUNCT", "w", "wp", ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "HYPH", "NFP",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedToken {
    pub surface: String,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<TaggedToken>,
    /// Zero-based index of the sentence in its corpus.
    pub provenance: usize,
}

impl TaggedSentence {
    /// Parses `surface_TAG` tokens; the tag follows the last underscore.
    pub fn parse(line: &str, provenance: usize) -> std::result::Result<Self, String> {
        let mut tokens = Vec::new();
        for tok in line.split_whitespace() {
            let Some((surface, tag)) = tok.rsplit_once('_') else {
                return Err(format!("token `{tok}` has no `_TAG` suffix"));
            };
            if surface.is_empty() || tag.is_empty() {
                return Err(format!("token `{tok}` has an empty surface or tag"));
            }
            tokens.push(TaggedToken {
                surface: surface.to_string(),
                tag: tag.to_string(),
            });
        }
        if tokens.is_empty() {
            return Err("empty sentence".into());
        }
        Ok(TaggedSentence { tokens, provenance })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn to_line(&self) -> String {
        let parts: Vec<String> = self.tokens.iter().map(|t| format!("{}_{}", t.surface, t.tag)).collect();
        parts.join(" ")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<TaggedSentence>,
    pub skipped_empty: usize,
}

pub fn parse_corpus(text: &str, origin: &str) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            corpus.skipped_empty += 1;
            continue;
        }
        let provenance = corpus.sentences.len();
        let sentence = TaggedSentence::parse(line, provenance).map_err(|msg| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        })?;
        corpus.sentences.push(sentence);
    }
    if corpus.skipped_empty > 0 {
        log::info!("{origin}: skipped {} empty lines", corpus.skipped_empty);
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(&read_to_string(path)?, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceOp {
    None,
    Replace1,
    Replace2,
    SwapSamePos,
    SwapRandom,
    LmGen,
}

/// How negatives are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Replace one word with another of the same tag (`dataset1`).
    Replace1,
    /// Replace two words, each with another of its tag (`dataset2`).
    Replace2,
    /// Swap two words sharing a tag (`dataset3`).
    SwapSamePos,
    /// Swap any two non-punctuation words (`dataset4`).
    SwapRandom,
    /// Per sentence, a seeded coin picks `Replace1` or `SwapSamePos`; the
    /// other op is tried if the first has no legal candidate.
    Mixed,
    /// Sentences of the source's length sampled from a 5-gram model of the
    /// training positives.
    LmGen,
}

impl PerturbMode {
    pub const ALL: [PerturbMode; 6] = [
        PerturbMode::Replace1,
        PerturbMode::Replace2,
        PerturbMode::SwapSamePos,
        PerturbMode::SwapRandom,
        PerturbMode::Mixed,
        PerturbMode::LmGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbMode::Replace1 => "replace1",
            PerturbMode::Replace2 => "replace2",
            PerturbMode::SwapSamePos => "swap-same-pos",
            PerturbMode::SwapRandom => "swap-random",
            PerturbMode::Mixed => "mixed",
            PerturbMode::LmGen => "lm-gen",
        }
    }

    /// Number of token positions a negative differs from its source in.
    pub fn changed_positions(op: SourceOp) -> Option<usize> {
        match op {
            SourceOp::Replace1 => Some(1),
            SourceOp::Replace2 | SourceOp::SwapSamePos | SourceOp::SwapRandom => Some(2),
            SourceOp::None => Some(0),
            SourceOp::LmGen => None,
        }
    }
}

impl fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "replace1" | "dataset1" => PerturbMode::Replace1,
            "replace2" | "dataset2" => PerturbMode::Replace2,
            "swap-same-pos" | "dataset3" => PerturbMode::SwapSamePos,
            "swap-random" | "dataset4" => PerturbMode::SwapRandom,
            "mixed" | "final" => PerturbMode::Mixed,
            "lm-gen" => PerturbMode::LmGen,
            other => {
                let names: Vec<&str> = PerturbMode::ALL.iter().map(|m| m.name()).collect();
                return Err(Error::invalid(format!(
                    "unknown mode `{other}`; expected one of {} or dataset1..dataset4",
                    names.join(", ")
                )));
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbPolicy {
    pub mode: PerturbMode,
    /// Sentences with at most this many tokens are skipped.
    pub min_length: usize,
    pub punct_tags: BTreeSet<String>,
    pub seed: u64,
}

impl PerturbPolicy {
    pub fn new(mode: PerturbMode, seed: u64) -> Self {
        PerturbPolicy {
            mode,
            min_length: DEFAULT_MIN_LENGTH,
            punct_tags: DEFAULT_PUNCT_TAGS.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_length < 1 {
            return Err(Error::invalid("min_length must be at least 1"));
        }
        Ok(())
    }

    fn is_punct(&self, t: &TaggedToken) -> bool {
        self.punct_tags.contains(&t.tag)
    }

    /// The random stream for one sentence, independent of every other sentence.
    pub fn sentence_rng(&self, provenance: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(provenance as u64);
        rng
    }
}

/// Distinct surfaces observed with each tag, sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PosIndex {
    by_tag: BTreeMap<String, Vec<String>>,
}

impl PosIndex {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a TaggedSentence>, punct_tags: &BTreeSet<String>) -> Self {
        let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for s in sentences {
            for t in &s.tokens {
                if !punct_tags.contains(&t.tag) {
                    sets.entry(t.tag.clone()).or_default().insert(t.surface.clone());
                }
            }
        }
        PosIndex {
            by_tag: sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }

    pub fn candidates(&self, tag: &str) -> &[String] {
        self.by_tag.get(tag).map(Vec::as_slice).unwrap_or(&[])
    }

    fn has_alternative(&self, t: &TaggedToken) -> bool {
        self.candidates(&t.tag).iter().any(|s| *s != t.surface)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, thiserror::Error)]
pub enum SkipReason {
    #[error("length {len} not above the minimum {min}")]
    TooShort { len: usize, min: usize },
    #[error("no word has a same-tag replacement")]
    NoReplacement,
    #[error("no pair of words shares a tag")]
    NoSamePosPair,
    #[error("fewer than two swappable words")]
    NoSwapPair,
    #[error("gave up after {MAX_RESAMPLE} draws")]
    ResampleLimit,
    #[error("language model produced no sentence")]
    EmptyGeneration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    /// 1 for rational, 0 for irrational.
    pub label: usize,
    pub op: SourceOp,
    pub provenance: usize,
}

impl LabeledExample {
    pub fn positive(s: &TaggedSentence) -> Self {
        LabeledExample {
            tokens: s.surfaces(),
            label: 1,
            op: SourceOp::None,
            provenance: s.provenance,
        }
    }

    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}", self.label, self.tokens.join(" "))
    }
}

/// Exchanges the surfaces at two positions.
pub fn swap_positions(s: &TaggedSentence, i: usize, j: usize) -> Vec<String> {
    let mut out = s.surfaces();
    out.swap(i, j);
    out
}

fn draw_replacement<R: Rng + ?Sized>(t: &TaggedToken, index: &PosIndex, rng: &mut R) -> Option<String> {
    let pool = index.candidates(&t.tag);
    if pool.is_empty() {
        return None;
    }
    for _ in 0..MAX_RESAMPLE {
        let c = &pool[rng.gen_range(0..pool.len())];
        if *c != t.surface {
            return Some(c.clone());
        }
    }
    None
}

fn replace<R: Rng + ?Sized>(
    s: &TaggedSentence,
    count: usize,
    policy: &PerturbPolicy,
    index: &PosIndex,
    rng: &mut R,
) -> std::result::Result<Vec<String>, SkipReason> {
    let positions: Vec<usize> = (0..s.len())
        .filter(|&i| !policy.is_punct(&s.tokens[i]) && index.has_alternative(&s.tokens[i]))
        .collect();
    if positions.len() < count {
        return Err(SkipReason::NoReplacement);
    }
    let mut out = s.surfaces();
    for &i in positions.choose_multiple(rng, count) {
        out[i] = draw_replacement(&s.tokens[i], index, rng).ok_or(SkipReason::ResampleLimit)?;
    }
    Ok(out)
}

fn swap<R: Rng + ?Sized>(
    s: &TaggedSentence,
    same_pos: bool,
    policy: &PerturbPolicy,
    rng: &mut R,
) -> std::result::Result<Vec<String>, SkipReason> {
    let open: Vec<usize> = (0..s.len()).filter(|&i| !policy.is_punct(&s.tokens[i])).collect();
    let mut pairs = Vec::new();
    for (a, &i) in open.iter().enumerate() {
        for &j in &open[a + 1..] {
            let (x, y) = (&s.tokens[i], &s.tokens[j]);
            // a swap of identical surfaces would leave the sentence unchanged
            if x.surface != y.surface && (!same_pos || x.tag == y.tag) {
                pairs.push((i, j));
            }
        }
    }
    let &(i, j) = pairs.choose(rng).ok_or(if same_pos {
        SkipReason::NoSamePosPair
    } else {
        SkipReason::NoSwapPair
    })?;
    Ok(swap_positions(s, i, j))
}

/// Builds the negative for one sentence, or the reason it has none.
/// [`PerturbMode::LmGen`] is not a per-sentence edit; see [`lm_generate`].
pub fn perturb<R: Rng + ?Sized>(
    s: &TaggedSentence,
    policy: &PerturbPolicy,
    index: &PosIndex,
    rng: &mut R,
) -> std::result::Result<LabeledExample, SkipReason> {
    if s.len() <= policy.min_length {
        return Err(SkipReason::TooShort {
            len: s.len(),
            min: policy.min_length,
        });
    }
    let (op, tokens) = match policy.mode {
        PerturbMode::Replace1 => (SourceOp::Replace1, replace(s, 1, policy, index, rng)?),
        PerturbMode::Replace2 => (SourceOp::Replace2, replace(s, 2, policy, index, rng)?),
        PerturbMode::SwapSamePos => (SourceOp::SwapSamePos, swap(s, true, policy, rng)?),
        PerturbMode::SwapRandom => (SourceOp::SwapRandom, swap(s, false, policy, rng)?),
        PerturbMode::Mixed => {
            let first_replace = rng.gen_bool(0.5);
            let attempt = |replace_op: bool, rng: &mut R| {
                if replace_op {
                    replace(s, 1, policy, index, rng).map(|t| (SourceOp::Replace1, t))
                } else {
                    swap(s, true, policy, rng).map(|t| (SourceOp::SwapSamePos, t))
                }
            };
            match attempt(first_replace, rng) {
                Ok(r) => r,
                Err(_) => attempt(!first_replace, rng)?,
            }
        }
        PerturbMode::LmGen => {
            return Err(SkipReason::EmptyGeneration);
        }
    };
    Ok(LabeledExample {
        tokens,
        label: 0,
        op,
        provenance: s.provenance,
    })
}

/// Samples `count` sentences left to right with lengths in `[min_len, max_len]`.
pub fn lm_generate(
    model: &NGramModel,
    min_len: usize,
    max_len: usize,
    count: usize,
    argmax: bool,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if min_len < 1 || min_len > max_len {
        return Err(Error::invalid(format!("invalid length range [{min_len}, {max_len}]")));
    }
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            model.generate(min_len, max_len, argmax, &mut rng)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    /// Fractions of the corpus; every perturbable sentence is kept.
    Ratios([f64; 3]),
    /// Exact positives per split; the corpus is partitioned in these proportions.
    Counts([usize; 3]),
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SplitSummary {
    pub sources: usize,
    pub positive: usize,
    pub negative: usize,
    pub skipped: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Train, valid and test, each as positive/negative pairs in source order.
    pub splits: [Vec<LabeledExample>; 3],
    pub summary: [SplitSummary; 3],
}

impl Dataset {
    pub fn train(&self) -> &[LabeledExample] {
        &self.splits[0]
    }

    pub fn valid(&self) -> &[LabeledExample] {
        &self.splits[1]
    }

    pub fn test(&self) -> &[LabeledExample] {
        &self.splits[2]
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::from("split\tpositive\tnegative\ttotal\n");
        let mut totals = [0usize; 3];
        for (name, s) in SPLIT_NAMES.iter().zip(&self.summary) {
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\n",
                s.positive,
                s.negative,
                s.positive + s.negative
            ));
            totals[0] += s.positive;
            totals[1] += s.negative;
            totals[2] += s.positive + s.negative;
        }
        out.push_str(&format!("all\t{}\t{}\t{}\n", totals[0], totals[1], totals[2]));
        for (name, s) in SPLIT_NAMES.iter().zip(&self.summary) {
            for (reason, n) in &s.skipped {
                out.push_str(&format!("# {name}: skipped {n}: {reason}\n"));
            }
        }
        out
    }

    /// Writes `train.tsv`, `valid.tsv`, `test.tsv` and `summary.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in SPLIT_NAMES.iter().zip(&self.splits) {
            write_file(&dir.join(format!("{name}.tsv")), format_examples(split))?;
        }
        write_file(&dir.join("summary.tsv"), self.summary_table())
    }
}

pub fn format_examples(examples: &[LabeledExample]) -> String {
    examples.iter().map(|e| e.to_tsv_line() + "\n").collect()
}

fn partition_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let train = (ratios[0] * n as f64).round() as usize;
    let valid = ((ratios[1] * n as f64).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    Ok([train, valid, n - train - valid])
}

/// Splits, perturbs and balances a corpus.
///
/// Sentences are shuffled with the policy seed, partitioned, and then each
/// split is perturbed independently with one random stream per sentence.
pub fn build_dataset(corpus: &[TaggedSentence], policy: &PerturbPolicy, split: SplitSpec) -> Result<Dataset> {
    policy.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let ratios = match split {
        SplitSpec::Ratios(r) => r,
        SplitSpec::Counts(c) => {
            let total: usize = c.iter().sum();
            if total == 0 {
                return Err(Error::invalid("requested split sizes are all zero"));
            }
            if total > corpus.len() {
                return Err(Error::invalid(format!(
                    "corpus too small: {} sentences for {total} requested positives",
                    corpus.len()
                )));
            }
            c.map(|x| x as f64 / total as f64)
        }
    };
    let sizes = partition_sizes(corpus.len(), ratios)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(policy.seed));
    let mut pools: Vec<Vec<&TaggedSentence>> = Vec::with_capacity(3);
    let mut start = 0;
    for size in sizes {
        let mut pool: Vec<&TaggedSentence> = order[start..start + size].iter().map(|&i| &corpus[i]).collect();
        pool.sort_by_key(|s| s.provenance);
        pools.push(pool);
        start += size;
    }

    let index = PosIndex::build(pools[0].iter().copied(), &policy.punct_tags);
    let lm = if policy.mode == PerturbMode::LmGen {
        let train: Vec<Vec<String>> = pools[0].iter().map(|s| s.surfaces()).collect();
        if train.is_empty() {
            return Err(Error::invalid("language-model generation needs a nonempty training split"));
        }
        Some(NGramModel::train(&train, LM_ORDER)?)
    } else {
        None
    };

    let mut splits: [Vec<LabeledExample>; 3] = Default::default();
    let mut summary: [SplitSummary; 3] = Default::default();
    for (k, pool) in pools.iter().enumerate() {
        let results: Vec<std::result::Result<LabeledExample, SkipReason>> = pool
            .par_iter()
            .map(|s| {
                let mut rng = policy.sentence_rng(s.provenance);
                match &lm {
                    Some(m) => lm_negative(s, policy, m, &mut rng),
                    None => Ok(perturb(s, policy, &index, &mut rng)),
                }
            })
            .collect::<Result<_>>()?;
        summary[k].sources = pool.len();
        for (s, r) in pool.iter().zip(results) {
            if let SplitSpec::Counts(c) = split {
                if summary[k].positive == c[k] {
                    break;
                }
            }
            match r {
                Ok(neg) => {
                    splits[k].push(LabeledExample::positive(s));
                    splits[k].push(neg);
                    summary[k].positive += 1;
                    summary[k].negative += 1;
                }
                Err(reason) => {
                    let key = match reason {
                        SkipReason::TooShort { .. } => "too short".to_string(),
                        other => other.to_string(),
                    };
                    *summary[k].skipped.entry(key).or_default() += 1;
                }
            }
        }
        if let SplitSpec::Counts(c) = split {
            if summary[k].positive < c[k] {
                return Err(Error::invalid(format!(
                    "corpus too small: {} split has {} usable sentences, {} requested",
                    SPLIT_NAMES[k], summary[k].positive, c[k]
                )));
            }
        }
    }
    Ok(Dataset { splits, summary })
}

fn lm_negative(
    s: &TaggedSentence,
    policy: &PerturbPolicy,
    model: &NGramModel,
    rng: &mut ChaCha8Rng,
) -> Result<std::result::Result<LabeledExample, SkipReason>> {
    if s.len() <= policy.min_length {
        return Ok(Err(SkipReason::TooShort {
            len: s.len(),
            min: policy.min_length,
        }));
    }
    let tokens = model.generate(s.len(), s.len(), false, rng)?;
    if tokens.is_empty() {
        return Ok(Err(SkipReason::EmptyGeneration));
    }
    Ok(Ok(LabeledExample {
        tokens,
        label: 0,
        op: SourceOp::LmGen,
        provenance: s.provenance,
    }))
}

/// Parses `label<TAB>tokens` lines into (tokens, label) pairs.
pub fn parse_examples(text: &str, origin: &str) -> Result<Vec<(Vec<String>, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        };
        let (label, tokens) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `label<TAB>tokens`".into()))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("label `{other}` is not 0 or 1"))),
        };
        let tokens: Vec<String> = tokens.split_whitespace().map(String::from).collect();
        if tokens.is_empty() {
            return Err(err("example has no tokens".into()));
        }
        out.push((tokens, label));
    }
    Ok(out)
}

pub fn load_examples(path: &Path) -> Result<Vec<(Vec<String>, usize)>> {
    parse_examples(&read_to_string(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(line: &str) -> TaggedSentence {
        TaggedSentence::parse(line, 0).unwrap()
    }

    fn long_sentence(i: usize) -> String {
        format!(
            "the_DT big_JJ cat{i}_NN saw_VB a_DT small_JJ dog{i}_NN near_IN the_DT old_JJ barn{i}_NN ._PU"
        )
    }

    #[test]
    fn parses_tagged_line() {
        let s = sent("the_DT cat_NN sleeps_VB");
        assert_eq!(s.len(), 3);
        assert_eq!(s.tokens[1].tag, "NN");
        assert_eq!(s.to_line(), "the_DT cat_NN sleeps_VB");
        assert_eq!(sent("snake_case_NN").tokens[0].surface, "snake_case");
    }

    #[test]
    fn corpus_counts_empty_lines_and_names_bad_line() {
        let c = parse_corpus("a_X b_Y\n\n  \nc_Z\n", "c.txt").unwrap();
        assert_eq!(c.sentences.len(), 2);
        assert_eq!(c.skipped_empty, 2);
        assert_eq!(c.sentences[1].provenance, 1);
        let err = parse_corpus("a_X\nb_Y oops\n", "c.txt").unwrap_err().to_string();
        assert!(err.starts_with("c.txt:2:"), "{err}");
    }

    #[test]
    fn swap_example() {
        let s = sent("the_DT red_ADJ cat_NN saw_VB the_DT blue_ADJ dog_NN");
        assert_eq!(swap_positions(&s, 1, 5).join(" "), "the blue cat saw the red dog");
    }

    #[test]
    fn short_sentence_is_skipped() {
        let s = sent("a_X b_X c_X d_X e_X");
        let p = PerturbPolicy::new(PerturbMode::SwapSamePos, 0);
        let idx = PosIndex::build([&s], &p.punct_tags);
        let r = perturb(&s, &p, &idx, &mut p.sentence_rng(0));
        assert_eq!(r.unwrap_err(), SkipReason::TooShort { len: 5, min: 8 });
    }

    #[test]
    fn only_punctuation_repeats_means_no_same_pos_swap() {
        let s = sent("a_A ,_PU b_B ,_PU c_C ;_PU d_D ._PU e_E");
        let p = PerturbPolicy::new(PerturbMode::SwapSamePos, 0);
        let idx = PosIndex::build([&s], &p.punct_tags);
        assert_eq!(
            perturb(&s, &p, &idx, &mut p.sentence_rng(0)).unwrap_err(),
            SkipReason::NoSamePosPair
        );
    }

    #[test]
    fn each_mode_changes_the_mandated_positions() {
        let corpus: Vec<TaggedSentence> = (0..4).map(|i| TaggedSentence::parse(&long_sentence(i), i).unwrap()).collect();
        for mode in [
            PerturbMode::Replace1,
            PerturbMode::Replace2,
            PerturbMode::SwapSamePos,
            PerturbMode::SwapRandom,
            PerturbMode::Mixed,
        ] {
            let p = PerturbPolicy::new(mode, 3);
            let idx = PosIndex::build(&corpus, &p.punct_tags);
            for s in &corpus {
                let neg = perturb(s, &p, &idx, &mut p.sentence_rng(s.provenance)).unwrap();
                let diff = s.surfaces().iter().zip(&neg.tokens).filter(|(a, b)| a != b).count();
                assert_eq!(Some(diff), PerturbMode::changed_positions(neg.op), "{mode}");
                assert_eq!(neg.tokens.last().unwrap(), ".");
            }
        }
    }

    #[test]
    fn ratio_split_arithmetic() {
        let corpus: Vec<TaggedSentence> = (0..10).map(|i| TaggedSentence::parse(&long_sentence(i), i).unwrap()).collect();
        let p = PerturbPolicy::new(PerturbMode::SwapSamePos, 1);
        let d = build_dataset(&corpus, &p, SplitSpec::Ratios([0.8, 0.1, 0.1])).unwrap();
        let sizes: Vec<usize> = d.splits.iter().map(Vec::len).collect();
        assert_eq!(sizes, [16, 2, 2]);
        assert!(d.summary_table().contains("all\t10\t10\t20"));
    }

    #[test]
    fn count_split_and_too_small_corpus() {
        let corpus: Vec<TaggedSentence> = (0..10).map(|i| TaggedSentence::parse(&long_sentence(i), i).unwrap()).collect();
        let p = PerturbPolicy::new(PerturbMode::Replace1, 1);
        let d = build_dataset(&corpus, &p, SplitSpec::Counts([6, 2, 2])).unwrap();
        assert_eq!(d.summary.iter().map(|s| s.positive).collect::<Vec<_>>(), [6, 2, 2]);
        assert!(build_dataset(&corpus, &p, SplitSpec::Counts([8, 2, 2])).is_err());
        assert!(build_dataset(&corpus, &p, SplitSpec::Ratios([0.5, 0.1, 0.1])).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let corpus: Vec<TaggedSentence> = (0..30).map(|i| TaggedSentence::parse(&long_sentence(i % 7), i).unwrap()).collect();
        let p = PerturbPolicy::new(PerturbMode::Mixed, 9);
        let a = build_dataset(&corpus, &p, SplitSpec::Ratios([0.6, 0.2, 0.2])).unwrap();
        let b = build_dataset(&corpus, &p, SplitSpec::Ratios([0.6, 0.2, 0.2])).unwrap();
        for k in 0..3 {
            assert_eq!(format_examples(&a.splits[k]), format_examples(&b.splits[k]));
        }
    }

    #[test]
    fn lm_mode_keeps_lengths() {
        let corpus: Vec<TaggedSentence> = (0..12).map(|i| TaggedSentence::parse(&long_sentence(i), i).unwrap()).collect();
        let p = PerturbPolicy::new(PerturbMode::LmGen, 2);
        let d = build_dataset(&corpus, &p, SplitSpec::Ratios([0.5, 0.25, 0.25])).unwrap();
        for pair in d.train().chunks(2) {
            assert_eq!(pair[0].tokens.len(), pair[1].tokens.len());
            assert_eq!(pair[1].op, SourceOp::LmGen);
        }
    }

    #[test]
    fn lm_generate_examples() {
        let m = NGramModel::train(&[vec!["a", "b", "c"]], 3).unwrap();
        assert!(lm_generate(&m, 1, 5, 0, false, 0).unwrap().is_empty());
        assert_eq!(lm_generate(&m, 1, 5, 2, true, 0).unwrap(), vec![vec!["a", "b", "c"]; 2]);
        let a = lm_generate(&m, 2, 4, 5, false, 11).unwrap();
        assert_eq!(a, lm_generate(&m, 2, 4, 5, false, 11).unwrap());
        assert!(lm_generate(&m, 3, 2, 1, false, 0).is_err());
    }

    #[test]
    fn modes_parse_by_dataset_name() {
        assert_eq!("dataset3".parse::<PerturbMode>().unwrap(), PerturbMode::SwapSamePos);
        assert_eq!("dataset4".parse::<PerturbMode>().unwrap(), PerturbMode::SwapRandom);
        for m in PerturbMode::ALL {
            assert_eq!(m.name().parse::<PerturbMode>().unwrap(), m);
        }
        assert!("dataset9".parse::<PerturbMode>().is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let e = LabeledExample {
            tokens: vec!["a".into(), "b".into()],
            label: 0,
            op: SourceOp::Replace1,
            provenance: 4,
        };
        let parsed = parse_examples(&format_examples(&[e.clone()]), "x").unwrap();
        assert_eq!(parsed, vec![(e.tokens, 0)]);
        assert!(parse_examples("2\ta b\n", "x").is_err());
        assert!(parse_examples("1 a b\n", "x").is_err());
    }
}
