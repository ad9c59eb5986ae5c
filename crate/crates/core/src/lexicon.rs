//! HowNet-shaped sememe knowledge base: words have one or more senses, and
//! every sense is annotated with a nonempty set of sememes.
//!
//! Lexicon file format (UTF-8, one word per line):
//!
//! ```text
//! apple	fruit | computer,bring,SpecialBrand
//! ```
//!
//! Senses are separated by `|`, sememes within a sense by `,`. Blank lines
//! and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{read_to_string, write_file};
use crate::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Default capacities of the word and sememe vocabularies.
pub const WORD_VOCAB_CAPACITY: usize = 50_000;
pub const SEMEME_VOCAB_CAPACITY: usize = 20_000;

/// Bijective token ↔ index map with reserved `PAD = 0` and `UNK = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    capacity: usize,
}

impl Vocabulary {
    /// An empty vocabulary holding only PAD and UNK.
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 3 {
            return Err(Error::invalid(format!(
                "vocabulary capacity must be at least 3, got {capacity}"
            )));
        }
        let tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = tokens.iter().cloned().zip(0..).collect();
        Ok(Vocabulary {
            index,
            tokens,
            capacity,
        })
    }

    /// Keeps the most frequent tokens, ties broken lexicographically, up to `capacity`.
    pub fn build<I, S>(corpus: I, capacity: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tok in corpus {
            let tok = tok.as_ref();
            if tok == PAD_TOKEN || tok == UNK_TOKEN {
                continue;
            }
            *counts.entry(tok.to_string()).or_default() += 1;
        }
        Self::from_counts(counts, capacity)
    }

    pub fn from_counts(counts: HashMap<String, usize>, capacity: usize) -> Result<Self> {
        let mut vocab = Vocabulary::new(capacity)?;
        if counts.is_empty() {
            log::warn!("building vocabulary from an empty corpus; only PAD and UNK are present");
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (tok, _) in ranked.into_iter().take(capacity - 2) {
            vocab.push(tok);
        }
        Ok(vocab)
    }

    fn push(&mut self, tok: String) -> usize {
        let id = self.tokens.len();
        self.index.insert(tok.clone(), id);
        self.tokens.push(tok);
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    /// Adds `token` if absent and capacity remains; returns its index or UNK.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(id) = self.get(token) {
            return id;
        }
        if self.tokens.len() >= self.capacity {
            return UNK_ID;
        }
        self.push(token.to_string())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// One token per line; the line number is the index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Parses [`Vocabulary::to_text`] output. Capacity is frozen at the loaded size.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 2 || lines[0] != PAD_TOKEN || lines[1] != UNK_TOKEN {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"),
            });
        }
        let mut vocab = Vocabulary::new(lines.len().max(3))?;
        for (i, tok) in lines.iter().enumerate().skip(2) {
            if tok.is_empty() || vocab.get(tok).is_some() {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: i + 1,
                    msg: format!("empty or duplicate token {tok:?}"),
                });
            }
            vocab.push(tok.to_string());
        }
        vocab.capacity = vocab.tokens.len().max(3);
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, &path.display().to_string())
    }
}

/// One sense of a word: a nonempty, duplicate-free list of sememe indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sense {
    sememes: Vec<usize>,
}

impl Sense {
    pub fn new(sememes: Vec<usize>) -> Result<Self> {
        if sememes.is_empty() {
            return Err(Error::invalid("a sense needs at least one sememe"));
        }
        let mut seen = Vec::with_capacity(sememes.len());
        for s in sememes {
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        Ok(Sense { sememes: seen })
    }

    pub fn sememes(&self) -> &[usize] {
        &self.sememes
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub senses: Vec<Sense>,
}

/// Word → senses → sememes, with its own sememe vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SememeLexicon {
    entries: HashMap<String, LexiconEntry>,
    /// Words in first-appearance order.
    order: Vec<String>,
    sememes: Vocabulary,
}

type RawEntry = (String, Vec<Vec<String>>);

fn parse_raw(text: &str, origin: &str) -> Result<Vec<RawEntry>> {
    let mut merged: Vec<RawEntry> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (word, rest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `word<TAB>senses`".into()))?;
        let word = word.trim();
        if word.is_empty() {
            return Err(err("empty word".into()));
        }
        if rest.trim().is_empty() {
            return Err(err(format!("word {word:?} has no senses")));
        }
        let mut senses = Vec::new();
        for sense in rest.split('|') {
            let mut sememes: Vec<String> = Vec::new();
            for s in sense.split(',') {
                let s = s.trim();
                if s.is_empty() {
                    return Err(err(format!("empty sememe in a sense of {word:?}")));
                }
                if !sememes.iter().any(|x| x == s) {
                    sememes.push(s.to_string());
                }
            }
            if !senses.contains(&sememes) {
                senses.push(sememes);
            }
        }
        match position.get(word) {
            Some(&p) => {
                for s in senses {
                    if !merged[p].1.contains(&s) {
                        merged[p].1.push(s);
                    }
                }
            }
            None => {
                position.insert(word.to_string(), merged.len());
                merged.push((word.to_string(), senses));
            }
        }
    }
    Ok(merged)
}

impl SememeLexicon {
    /// Parses lexicon text and builds the sememe vocabulary from it.
    pub fn parse(text: &str, origin: &str, sememe_capacity: usize) -> Result<Self> {
        let raw = parse_raw(text, origin)?;
        let sememes = Vocabulary::build(
            raw.iter()
                .flat_map(|(_, senses)| senses.iter().flatten())
                .map(String::as_str),
            sememe_capacity,
        )?;
        Self::from_raw(raw, sememes)
    }

    /// Parses lexicon text against a fixed sememe vocabulary; unknown sememes map to UNK.
    pub fn parse_with_vocab(text: &str, origin: &str, sememes: Vocabulary) -> Result<Self> {
        Self::from_raw(parse_raw(text, origin)?, sememes)
    }

    fn from_raw(raw: Vec<RawEntry>, sememes: Vocabulary) -> Result<Self> {
        let mut entries = HashMap::with_capacity(raw.len());
        let mut order = Vec::with_capacity(raw.len());
        for (word, senses) in raw {
            let mut out: Vec<Sense> = Vec::with_capacity(senses.len());
            for s in &senses {
                let sense = Sense::new(s.iter().map(|x| sememes.id(x)).collect())?;
                if !out.contains(&sense) {
                    out.push(sense);
                }
            }
            order.push(word.clone());
            entries.insert(word.clone(), LexiconEntry { word, senses: out });
        }
        Ok(SememeLexicon {
            entries,
            order,
            sememes,
        })
    }

    pub fn load(path: &Path, sememe_capacity: usize) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string(), sememe_capacity)
    }

    pub fn load_with_vocab(path: &Path, sememes: Vocabulary) -> Result<Self> {
        Self::parse_with_vocab(&read_to_string(path)?, &path.display().to_string(), sememes)
    }

    pub fn entry(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(word)
    }

    /// Entries in file order.
    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.order.iter().map(move |w| &self.entries[w])
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn sememe_vocab(&self) -> &Vocabulary {
        &self.sememes
    }

    /// Senses of `word`. A word missing from the lexicon gets one synthetic
    /// sense whose only sememe is the word itself, interned into the sememe
    /// vocabulary while capacity remains and UNK afterwards.
    pub fn senses_of(&mut self, word: &str) -> Vec<Sense> {
        if let Some(e) = self.entries.get(word) {
            return e.senses.clone();
        }
        let id = self.sememes.intern(word);
        vec![Sense { sememes: vec![id] }]
    }

    /// Read-only variant of [`SememeLexicon::senses_of`]: never grows the vocabulary.
    pub fn lookup_senses(&self, word: &str) -> Vec<Sense> {
        match self.entries.get(word) {
            Some(e) => e.senses.clone(),
            None => vec![Sense {
                sememes: vec![self.sememes.id(word)],
            }],
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&e.word);
            out.push('\t');
            let senses: Vec<String> = e
                .senses
                .iter()
                .map(|s| {
                    s.sememes
                        .iter()
                        .map(|&id| self.sememes.token(id).unwrap_or(UNK_TOKEN))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            out.push_str(&senses.join(" | "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }
}

/// Model input for one sentence: word indices and, per word, its senses as
/// sememe-index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub senses: Vec<Vec<Vec<usize>>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Maps surface tokens to model inputs using a word vocabulary and a lexicon.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub words: Vocabulary,
    pub lexicon: SememeLexicon,
}

impl Encoder {
    pub fn new(words: Vocabulary, lexicon: SememeLexicon) -> Self {
        Encoder { words, lexicon }
    }

    /// Encodes without touching either vocabulary.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> EncodedSentence {
        let mut out = EncodedSentence {
            words: Vec::with_capacity(tokens.len()),
            senses: Vec::with_capacity(tokens.len()),
        };
        for t in tokens {
            let t = t.as_ref();
            out.words.push(self.words.id(t));
            out.senses.push(
                self.lexicon
                    .lookup_senses(t)
                    .into_iter()
                    .map(|s| s.sememes)
                    .collect(),
            );
        }
        out
    }

    /// Encodes and interns out-of-lexicon words as their own sememe.
    pub fn encode_interning<S: AsRef<str>>(&mut self, tokens: &[S]) -> EncodedSentence {
        for t in tokens {
            self.lexicon.senses_of(t.as_ref());
        }
        self.encode(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const APPLE: &str = "apple\tfruit | computer,bring,SpecialBrand\n";

    #[test]
    fn parses_figure_one_entry() {
        let lex = SememeLexicon::parse(APPLE, "t", 100).unwrap();
        let e = lex.entry("apple").unwrap();
        assert_eq!(e.senses.len(), 2);
        assert_eq!(e.senses[0].sememes().len(), 1);
        assert_eq!(e.senses[1].sememes().len(), 3);
        let names: Vec<&str> = e.senses[1]
            .sememes()
            .iter()
            .map(|&i| lex.sememe_vocab().token(i).unwrap())
            .collect();
        assert_eq!(names, ["computer", "bring", "SpecialBrand"]);
    }

    #[test]
    fn rejects_word_without_senses() {
        let err = SememeLexicon::parse("ok\ta\nbad\t  \n", "lex.tsv", 100).unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "lex.tsv");
            }
            other => panic!("{other:?}"),
        }
        assert!(SememeLexicon::parse("bad\n", "t", 100).is_err());
        assert!(SememeLexicon::parse("bad\ta,,b\n", "t", 100).is_err());
    }

    #[test]
    fn duplicate_words_merge_in_order() {
        let text = "bank\tinstitution,money\nriver\twater\nbank\tland,water | institution,money\n";
        let lex = SememeLexicon::parse(text, "t", 100).unwrap();
        assert_eq!(lex.len(), 2);
        let bank = lex.entry("bank").unwrap();
        let v = lex.sememe_vocab();
        let names: Vec<Vec<&str>> = bank
            .senses
            .iter()
            .map(|s| s.sememes().iter().map(|&i| v.token(i).unwrap()).collect())
            .collect();
        assert_eq!(names, vec![vec!["institution", "money"], vec!["land", "water"]]);
    }

    #[test]
    fn duplicate_sememes_within_sense_are_dropped() {
        let lex = SememeLexicon::parse("w\ta,b,a\n", "t", 100).unwrap();
        assert_eq!(lex.entry("w").unwrap().senses[0].sememes().len(), 2);
    }

    #[test]
    fn senses_of_known_and_unknown_words() {
        let mut lex = SememeLexicon::parse(APPLE, "t", 100).unwrap();
        assert_eq!(lex.senses_of("apple").len(), 2);
        let s = lex.senses_of("zzyzx");
        assert_eq!(s.len(), 1);
        assert_eq!(lex.sememe_vocab().token(s[0].sememes()[0]), Some("zzyzx"));
        // interned once
        let before = lex.sememe_vocab().len();
        lex.senses_of("zzyzx");
        assert_eq!(lex.sememe_vocab().len(), before);
    }

    #[test]
    fn senses_of_unknown_word_at_capacity_is_unk() {
        // fruit, computer, bring, SpecialBrand + PAD/UNK = 6
        let mut lex = SememeLexicon::parse(APPLE, "t", 6).unwrap();
        assert_eq!(lex.sememe_vocab().len(), 6);
        let s = lex.senses_of("zzyzx");
        assert_eq!(s[0].sememes(), &[UNK_ID]);
    }

    #[test]
    fn build_vocab_breaks_ties_lexicographically() {
        let corpus = ["a", "c", "b", "a", "a"];
        let v = Vocabulary::build(corpus, 4).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "a", "b"]);
        assert_eq!(v.id("c"), UNK_ID);

        let v = Vocabulary::build(["z", "y", "x"], 10).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "x", "y", "z"]);
    }

    #[test]
    fn build_vocab_respects_capacity() {
        let corpus: Vec<String> = (0..60_000).map(|i| format!("w{i}")).collect();
        let v = Vocabulary::build(&corpus, WORD_VOCAB_CAPACITY).unwrap();
        assert_eq!(v.len(), WORD_VOCAB_CAPACITY);
        assert!(Vocabulary::new(2).is_err());
    }

    #[test]
    fn empty_corpus_gives_reserved_tokens_only() {
        let v = Vocabulary::build(Vec::<String>::new(), 10).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = Vocabulary::build(["b", "a", "b"], 10).unwrap();
        let back = Vocabulary::from_text(&v.to_text(), "v").unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert!(Vocabulary::from_text("x\ny\n", "v").is_err());
    }

    #[test]
    fn encoder_maps_oov_words_to_their_own_sememe() {
        let lex = SememeLexicon::parse(APPLE, "t", 100).unwrap();
        let words = Vocabulary::build(["the", "apple"], 10).unwrap();
        let mut enc = Encoder::new(words, lex);
        let frozen = enc.encode(&["the", "apple", "rots"]);
        assert_eq!(frozen.senses[0], vec![vec![UNK_ID]]);
        let grown = enc.encode_interning(&["the", "apple", "rots"]);
        assert_eq!(grown.words[2], UNK_ID);
        assert_eq!(grown.senses[1].len(), 2);
        let the = enc.lexicon.sememe_vocab().get("the").unwrap();
        assert_eq!(grown.senses[0], vec![vec![the]]);
    }

    fn arb_lexicon() -> impl Strategy<Value = String> {
        let sememe = "[a-z]{1,4}";
        let sense = proptest::collection::vec(sememe, 1..4).prop_map(|v| v.join(","));
        let senses = proptest::collection::vec(sense, 1..4).prop_map(|v| v.join(" | "));
        proptest::collection::vec(("[a-z]{1,5}", senses), 1..12).prop_map(|rows| {
            rows.into_iter()
                .map(|(w, s)| format!("{w}\t{s}\n"))
                .collect::<String>()
        })
    }

    proptest! {
        #[test]
        fn serialize_then_load_is_identity(text in arb_lexicon()) {
            let lex = SememeLexicon::parse(&text, "t", SEMEME_VOCAB_CAPACITY).unwrap();
            let back = SememeLexicon::parse(&lex.to_text(), "t", SEMEME_VOCAB_CAPACITY).unwrap();
            prop_assert_eq!(&lex, &back);
            for e in lex.entries() {
                prop_assert!(!e.senses.is_empty());
                for s in &e.senses {
                    prop_assert!(!s.sememes().is_empty());
                    prop_assert!(s.sememes().iter().all(|&i| i < lex.sememe_vocab().len()));
                }
            }
        }

        #[test]
        fn senses_of_is_never_empty(text in arb_lexicon(), word in "\\PC{0,8}") {
            let mut lex = SememeLexicon::parse(&text, "t", 8).unwrap();
            prop_assert!(!lex.lookup_senses(&word).is_empty());
            prop_assert!(!lex.senses_of(&word).is_empty());
        }
    }
}
