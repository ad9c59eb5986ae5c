//! Interpolated Kneser-Ney n-gram language model and the threshold
//! classifier built on top of it.
//!
//! The highest order uses raw counts; every lower order uses continuation
//! counts (the number of distinct left neighbours). The unigram level
//! interpolates with a uniform distribution over the vocabulary, so every
//! token, including `<unk>`, has nonzero probability in every context.
//! Sentences are padded with `order - 1` start symbols and one end symbol.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file};
use crate::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

/// Discount used when the count-of-counts estimate is degenerate.
pub const FALLBACK_DISCOUNT: f64 = 0.75;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    order: usize,
    /// `<s>`, `</s>`, `<unk>`, then training tokens in lexicographic order.
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k - 1]`: order-k n-gram → raw count (k = order) or continuation count.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// `contexts[k - 1]`: (k-1)-token history → (sum of counts, distinct followers).
    contexts: Vec<HashMap<Vec<u32>, (u64, u64)>>,
    discounts: Vec<f64>,
}

/// Discount `n1 / (n1 + 2·n2)` from the number of n-grams seen once and twice.
pub fn estimate_discount(n1: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return FALLBACK_DISCOUNT;
    }
    let d = n1 as f64 / (n1 as f64 + 2.0 * n2 as f64);
    if d > 0.0 && d < 1.0 {
        d
    } else {
        FALLBACK_DISCOUNT
    }
}

fn build_contexts(counts: &HashMap<Vec<u32>, u64>) -> HashMap<Vec<u32>, (u64, u64)> {
    let mut out: HashMap<Vec<u32>, (u64, u64)> = HashMap::new();
    for (gram, &c) in counts {
        let e = out.entry(gram[..gram.len() - 1].to_vec()).or_default();
        e.0 += c;
        e.1 += 1;
    }
    out
}

fn discount_of(counts: &HashMap<Vec<u32>, u64>) -> f64 {
    let n1 = counts.values().filter(|&&c| c == 1).count() as u64;
    let n2 = counts.values().filter(|&&c| c == 2).count() as u64;
    estimate_discount(n1, n2)
}

impl NGramModel {
    /// Trains an interpolated Kneser-Ney model of the given order.
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if sentences.is_empty() {
            return Err(Error::invalid("cannot train an n-gram model on an empty corpus"));
        }
        let mut words: Vec<&str> = sentences
            .iter()
            .flatten()
            .map(AsRef::as_ref)
            .filter(|w| ![BOS, EOS, UNK].contains(w))
            .collect();
        words.sort_unstable();
        words.dedup();
        let mut tokens: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
        tokens.extend(words.into_iter().map(String::from));
        let index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();

        // every predicted position contributes one n-gram of each order
        let mut grams: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        for s in sentences {
            let ids = pad(order, s.iter().map(|w| index[w.as_ref()]));
            for i in order - 1..ids.len() {
                for k in 1..=order {
                    *grams[k - 1].entry(ids[i + 1 - k..=i].to_vec()).or_default() += 1;
                }
            }
        }
        let mut counts = Vec::with_capacity(order);
        for k in 1..order {
            let mut cont: HashMap<Vec<u32>, u64> = HashMap::new();
            for gram in grams[k].keys() {
                *cont.entry(gram[1..].to_vec()).or_default() += 1;
            }
            counts.push(cont);
        }
        counts.push(std::mem::take(&mut grams[order - 1]));
        Ok(Self::from_counts(order, tokens, counts))
    }

    fn from_counts(order: usize, tokens: Vec<String>, counts: Vec<HashMap<Vec<u32>, u64>>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let contexts = counts.iter().map(build_contexts).collect();
        let discounts = counts.iter().map(discount_of).collect();
        NGramModel {
            order,
            tokens,
            index,
            counts,
            contexts,
            discounts,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    /// Tokens that can be predicted: everything but `<s>`.
    pub fn vocabulary(&self) -> &[String] {
        &self.tokens[1..]
    }

    fn id(&self, token: &str) -> u32 {
        if token == BOS {
            return BOS_ID;
        }
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    fn prob_ids(&self, history: &[u32], w: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.prob_order(keep + 1, &history[history.len() - keep..], w)
    }

    fn prob_order(&self, k: usize, ctx: &[u32], w: u32) -> f64 {
        if k == 0 {
            return 1.0 / (self.tokens.len() - 1) as f64;
        }
        let lower = self.prob_order(k - 1, &ctx[1.min(ctx.len())..], w);
        let Some(&(total, distinct)) = self.contexts[k - 1].get(ctx) else {
            return lower;
        };
        let mut gram = ctx.to_vec();
        gram.push(w);
        let c = self.counts[k - 1].get(&gram).copied().unwrap_or(0) as f64;
        let d = self.discounts[k - 1];
        let total = total as f64;
        (c - d).max(0.0) / total + d * distinct as f64 / total * lower
    }

    /// `P(word | history)`; only the last `order - 1` history tokens matter.
    /// Unknown tokens are scored as `<unk>`.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let h: Vec<u32> = history.iter().map(|t| self.id(t.as_ref())).collect();
        self.prob_ids(&h, self.id(word))
    }

    /// Full conditional distribution over [`NGramModel::vocabulary`].
    pub fn distribution<S: AsRef<str>>(&self, history: &[S]) -> Vec<(String, f64)> {
        let h: Vec<u32> = history.iter().map(|t| self.id(t.as_ref())).collect();
        (1..self.tokens.len() as u32)
            .map(|w| (self.tokens[w as usize].clone(), self.prob_ids(&h, w)))
            .collect()
    }

    /// Average natural-log probability per predicted token, end symbol included.
    pub fn logprob<S: AsRef<str>>(&self, sentence: &[S]) -> Result<f64> {
        if sentence.is_empty() {
            return Err(Error::invalid("cannot score an empty sentence"));
        }
        let ids = pad(self.order, sentence.iter().map(|w| self.id(w.as_ref())));
        let start = self.order - 1;
        let total: f64 = (start..ids.len())
            .map(|i| self.prob_ids(&ids[..i], ids[i]).ln())
            .sum();
        Ok(total / (ids.len() - start) as f64)
    }

    /// Most probable next token after `history` (ties to the lexicographically first).
    pub fn most_likely_next<S: AsRef<str>>(&self, history: &[S]) -> String {
        let mut h: Vec<String> = vec![BOS.to_string(); self.order - 1];
        h.extend(history.iter().map(|s| s.as_ref().to_string()));
        let dist = self.distribution(&h);
        let mut best = 0;
        for (i, (_, p)) in dist.iter().enumerate() {
            if *p > dist[best].1 {
                best = i;
            }
        }
        dist[best].0.clone()
    }

    /// Samples a sentence left to right. `</s>` is suppressed until
    /// `min_len` tokens exist and generation stops at `max_len`; `<unk>` is
    /// never emitted. With `argmax`, the most probable token is taken.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        min_len: usize,
        max_len: usize,
        argmax: bool,
        rng: &mut R,
    ) -> Result<Vec<String>> {
        if self.counts[self.order - 1].is_empty() {
            return Err(Error::invalid("n-gram model is untrained"));
        }
        let mut history: Vec<u32> = vec![BOS_ID; self.order - 1];
        let mut out = Vec::new();
        while out.len() < max_len {
            let mut weights: Vec<(u32, f64)> = (1..self.tokens.len() as u32)
                .filter(|&w| w != UNK_ID && (w != EOS_ID || out.len() >= min_len))
                .map(|w| (w, self.prob_ids(&history, w)))
                .collect();
            if weights.is_empty() {
                break;
            }
            let next = if argmax {
                let mut best = weights[0];
                for &(w, p) in &weights[1..] {
                    if p > best.1 {
                        best = (w, p);
                    }
                }
                best.0
            } else {
                let z: f64 = weights.iter().map(|(_, p)| p).sum();
                let mut r = rng.gen::<f64>() * z;
                let last = weights.last().expect("nonempty").0;
                let mut pick = last;
                for (w, p) in weights.drain(..) {
                    if r < p {
                        pick = w;
                        break;
                    }
                    r -= p;
                }
                pick
            };
            if next == EOS_ID {
                break;
            }
            out.push(self.tokens[next as usize].clone());
            history.push(next);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let tables = self
            .counts
            .iter()
            .map(|t| {
                let mut rows: Vec<(Vec<u32>, u64)> = t.iter().map(|(g, c)| (g.clone(), *c)).collect();
                rows.sort();
                rows
            })
            .collect();
        Ok(serde_json::to_string(&ModelFile {
            format_version: FORMAT_VERSION,
            order: self.order,
            tokens: self.tokens.clone(),
            discounts: self.discounts.clone(),
            tables,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported n-gram model version {}",
                f.format_version
            )));
        }
        if f.order < 1 || f.tables.len() != f.order || f.tokens.len() < 3 {
            return Err(Error::invalid("malformed n-gram model file"));
        }
        let n = f.tokens.len() as u32;
        let mut counts = Vec::with_capacity(f.order);
        for (k, rows) in f.tables.into_iter().enumerate() {
            let mut table = HashMap::with_capacity(rows.len());
            for (gram, c) in rows {
                if gram.len() != k + 1 || gram.iter().any(|&t| t >= n) {
                    return Err(Error::invalid("n-gram table entry has the wrong shape"));
                }
                table.insert(gram, c);
            }
            counts.push(table);
        }
        let mut model = Self::from_counts(f.order, f.tokens, counts);
        if f.discounts.len() != f.order || f.discounts.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::invalid("n-gram discounts must lie in (0, 1)"));
        }
        model.discounts = f.discounts;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    /// Human-readable, sorted dump of every table for diffing.
    pub fn dump_text(&self) -> String {
        let mut out = format!("# interpolated Kneser-Ney, order {}\n", self.order);
        for (k, table) in self.counts.iter().enumerate() {
            let kind = if k + 1 == self.order { "count" } else { "continuation" };
            out.push_str(&format!(
                "\n\\{}-grams: discount={} ({kind})\n",
                k + 1,
                self.discounts[k]
            ));
            let mut rows: Vec<(String, u64)> = table
                .iter()
                .map(|(g, c)| {
                    let words: Vec<&str> = g.iter().map(|&t| self.tokens[t as usize].as_str()).collect();
                    (words.join(" "), *c)
                })
                .collect();
            rows.sort();
            for (g, c) in rows {
                out.push_str(&format!("{g}\t{c}\n"));
            }
        }
        out
    }
}

fn pad(order: usize, ids: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut out = vec![BOS_ID; order - 1];
    out.extend(ids);
    out.push(EOS_ID);
    out
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    order: usize,
    tokens: Vec<String>,
    discounts: Vec<f64>,
    tables: Vec<Vec<(Vec<u32>, u64)>>,
}

/// Picks the cutoff that maximizes accuracy on `(score, label)` pairs, where
/// label 1 is predicted iff `score >= threshold`.
///
/// Candidates are the midpoints between consecutive distinct scores plus one
/// value below the minimum and one above the maximum. Ties go to the lower
/// threshold. Returns `(threshold, accuracy)`.
pub fn best_threshold(scored: &[(f64, usize)]) -> Result<(f64, f64)> {
    let has = |l: usize| scored.iter().any(|&(_, y)| y == l);
    if !has(0) || !has(1) {
        return Err(Error::invalid("threshold fitting needs both labels"));
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("validation scores"));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len() as f64;
    // threshold below everything: all predicted rational
    let mut correct = sorted.iter().filter(|(_, y)| *y == 1).count();
    let lo = sorted[0].0;
    let mut best = (lo - 1.0, correct);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        // move every example with this score to the "irrational" side
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 == 1 {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() {
            (s + sorted[i].0) / 2.0
        } else {
            s + 1.0
        };
        if correct > best.1 {
            best = (threshold, correct);
        }
    }
    Ok((best.0, best.1 as f64 / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdClassifier {
    pub model: NGramModel,
    pub threshold: f64,
    pub validation_accuracy: f64,
}

impl ThresholdClassifier {
    /// Fits the cutoff on labelled validation sentences.
    pub fn fit<S: AsRef<str>>(model: NGramModel, validation: &[(Vec<S>, usize)]) -> Result<Self> {
        let scored = validation
            .iter()
            .map(|(s, y)| Ok((model.logprob(s)?, *y)))
            .collect::<Result<Vec<_>>>()?;
        let (threshold, validation_accuracy) = best_threshold(&scored)?;
        Ok(ThresholdClassifier {
            model,
            threshold,
            validation_accuracy,
        })
    }

    pub fn score<S: AsRef<str>>(&self, sentence: &[S]) -> Result<f64> {
        self.model.logprob(sentence)
    }

    /// 1 (rational) iff the average log-probability reaches the threshold.
    pub fn classify<S: AsRef<str>>(&self, sentence: &[S]) -> Result<usize> {
        Ok(usize::from(self.score(sentence)? >= self.threshold))
    }

    pub fn accuracy<S: AsRef<str>>(&self, data: &[(Vec<S>, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("cannot evaluate on an empty dataset"));
        }
        let mut correct = 0;
        for (s, y) in data {
            if self.classify(s)? == *y {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(text: &str) -> Vec<Vec<String>> {
        text.split('/')
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn bigram_hand_worked() {
        let m = NGramModel::train(&corpus("a b / a b"), 2).unwrap();
        // bigram counts: (<s> a)=2, (a b)=2, (b </s>)=2 -> no singletons -> fallback
        assert_eq!(m.discounts(), &[FALLBACK_DISCOUNT, FALLBACK_DISCOUNT]);
        let d = 0.75;
        // continuation counts: a, b, </s> each have one distinct left neighbour
        // vocabulary {</s>, <unk>, a, b}
        let p1_b = (1.0 - d) / 3.0 + d * 3.0 / 3.0 * 0.25;
        let p_b_given_a = (2.0 - d) / 2.0 + d * 1.0 / 2.0 * p1_b;
        assert!((m.prob(&["a"], "b") - p_b_given_a).abs() < 1e-12);
        let p1_unk = d * 3.0 / 3.0 * 0.25;
        assert!((m.prob(&["a"], "zzz") - d / 2.0 * p1_unk).abs() < 1e-12);
    }

    #[test]
    fn discount_estimate() {
        assert_eq!(estimate_discount(4, 2), 0.5);
        assert_eq!(estimate_discount(0, 3), FALLBACK_DISCOUNT);
        assert_eq!(estimate_discount(3, 0), FALLBACK_DISCOUNT);
    }

    #[test]
    fn unigram_model_is_normalized() {
        let m = NGramModel::train(&corpus("a b c / a a d / e"), 1).unwrap();
        let total: f64 = m.distribution::<&str>(&[]).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unseen_context_backs_off() {
        let m = NGramModel::train(&corpus("a b c d e / b c d a"), 5).unwrap();
        let p = m.prob(&["e", "e", "d", "a"], "b");
        assert!(p > 0.0);
        let total: f64 = m.distribution(&["x", "y", "z", "w"]).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn training_sentence_scores_above_its_reverse() {
        let m = NGramModel::train(&corpus("the cat sat on the mat"), 3).unwrap();
        let s = ["the", "cat", "sat", "on", "the", "mat"];
        let mut r = s;
        r.reverse();
        assert!(m.logprob(&s).unwrap() > m.logprob(&r).unwrap());
        assert!(m.logprob::<&str>(&[]).is_err());
        assert!(m.logprob(&["never", "seen"]).unwrap().is_finite());
    }

    #[test]
    fn rejects_order_zero_and_empty_corpus() {
        assert!(NGramModel::train(&corpus("a"), 0).is_err());
        assert!(NGramModel::train::<String>(&[], 2).is_err());
    }

    #[test]
    fn argmax_generation_follows_counts() {
        let m = NGramModel::train(&corpus("a b c"), 3).unwrap();
        assert_eq!(m.most_likely_next(&["a", "b"]), "c");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(m.generate(1, 10, true, &mut rng).unwrap(), ["a", "b", "c"]);
        let s1 = m.generate(2, 6, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s2 = m.generate(2, 6, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.len() >= 2 && s1.len() <= 6);
    }

    #[test]
    fn threshold_examples() {
        let scored = [(-1.0, 1), (-2.0, 1), (-5.0, 0), (-6.0, 0)];
        assert_eq!(best_threshold(&scored).unwrap(), (-3.5, 1.0));

        let interleaved = [(-1.0, 1), (-2.0, 0), (-3.0, 1), (-4.0, 0)];
        let (_, acc) = best_threshold(&interleaved).unwrap();
        assert!(acc < 1.0);
        assert_eq!(acc, 0.75);

        let flat = [(-2.0, 1), (-2.0, 0), (-2.0, 1), (-2.0, 0)];
        let (t, acc) = best_threshold(&flat).unwrap();
        assert_eq!(acc, 0.5);
        assert!(t < -2.0);

        assert!(best_threshold(&[(-1.0, 1), (-2.0, 1)]).is_err());
    }

    #[test]
    fn classifier_toy_setup() {
        let train = corpus("the cat sat on the mat / the dog sat on the rug");
        let m = NGramModel::train(&train, 3).unwrap();
        let valid: Vec<(Vec<String>, usize)> = vec![
            (corpus("the cat sat on the rug")[0].clone(), 1),
            (corpus("mat the on sat cat the")[0].clone(), 0),
            (corpus("the dog sat on the mat")[0].clone(), 1),
            (corpus("rug dog the the on sat")[0].clone(), 0),
        ];
        let clf = ThresholdClassifier::fit(m, &valid).unwrap();
        assert_eq!(clf.validation_accuracy, 1.0);
        assert_eq!(clf.classify(&train[0]).unwrap(), 1);
        assert_eq!(clf.classify(&["qq", "zz", "xx", "yy", "ww"]).unwrap(), 0);
        let at = ThresholdClassifier {
            threshold: clf.score(&train[1]).unwrap(),
            ..clf.clone()
        };
        assert_eq!(at.classify(&train[1]).unwrap(), 1);
    }

    #[test]
    fn model_file_round_trip_and_dump() {
        let m = NGramModel::train(&corpus("a b c / a c b / b b a d"), 3).unwrap();
        let back = NGramModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let dump = m.dump_text();
        assert!(dump.contains("\\3-grams"));
        assert!(dump.contains("<s> <s> a\t2"));
        assert!(NGramModel::from_json("{}").is_err());
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
        let word = prop_oneof![Just("a"), Just("b"), Just("c"), Just("d"), Just("e")].prop_map(String::from);
        proptest::collection::vec(proptest::collection::vec(word, 1..5), 1..5)
    }

    proptest! {
        #[test]
        fn every_context_is_normalized(c in arb_corpus(), order in 1usize..5, h in proptest::collection::vec(0usize..6, 0..5)) {
            let m = NGramModel::train(&c, order).unwrap();
            let names = ["a", "b", "c", "d", "e", "<s>"];
            let history: Vec<&str> = h.iter().map(|&i| names[i]).collect();
            let dist = m.distribution(&history);
            prop_assert!(dist.iter().all(|(_, p)| *p > 0.0));
            prop_assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn serialization_round_trips(c in arb_corpus(), order in 1usize..5) {
            let m = NGramModel::train(&c, order).unwrap();
            prop_assert_eq!(&NGramModel::from_json(&m.to_json().unwrap()).unwrap(), &m);
        }
    }
}
