//! A small artificial language whose rationality labels follow from
//! sememe-level selectional restrictions.
//!
//! Each sentence has one adjective, one noun and one verb. Every noun has one
//! or two senses; a sense carries a category sememe and optionally an
//! attribute sememe. Every adjective applies to a set of categories; every
//! verb allows a set of subject categories and may require an attribute. The
//! intended sense of the noun is the one whose category the adjective admits,
//! and the sentence is rational iff the verb accepts that sense. The two
//! senses of a polysemous noun carry different attributes, so averaging them
//! hides which attribute the intended sense has. Negatives differ from their
//! positive only in the noun. Some nouns never occur in training, so the word
//! vocabulary maps them to UNK while the lexicon still gives their senses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, LabeledExample, SourceOp, SplitSummary, TaggedSentence, TaggedToken, SPLIT_NAMES};
use crate::error::{read_to_string, write_file};
use crate::{Error, Result};

pub const NOUN_TAG: &str = "NN";
pub const ADJ_TAG: &str = "JJ";
pub const VERB_TAG: &str = "VB";
pub const FILLER_TAG: &str = "RB";
pub const DET_TAG: &str = "DT";
pub const PUNCT_TAG: &str = "PU";

const ATTRIBUTE_NAMES: [&str; 2] = ["BIG", "SMALL"];

const CATEGORY_NAMES: [&str; 8] = [
    "ANIMAL", "PLANT", "BUILDING", "FOOD", "BRAND", "VEHICLE", "TOOL", "CLOTH",
];

const TEMPLATES: [&str; 5] = [
    "the {adj} {noun} {verb} .",
    "the {adj} {noun} {verb} {filler} .",
    "{filler} the {adj} {noun} {verb} .",
    "the {adj} {noun} {filler} {verb} .",
    "{filler} , the {adj} {noun} {verb} {filler} .",
];

/// Draws allowed for one example pair before the spec is declared inconsistent.
const MAX_ATTEMPTS: usize = 10_000;

/// Knobs for [`SynthSpec::generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub categories: usize,
    pub nouns_per_category: usize,
    /// Fraction of nouns with a second sense in another category.
    pub polysemous_fraction: f64,
    /// Fraction of nouns never used in the training split.
    pub held_out_fraction: f64,
    /// Verbs generated; each allows two categories.
    pub verbs: usize,
    /// Fraction of verbs that also require an attribute.
    pub attribute_verb_fraction: f64,
    pub fillers: usize,
    /// Positive/negative pairs per split.
    pub pairs: [usize; 3],
    /// Chance that a validation or test pair draws its nouns from the held-out set.
    pub held_out_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            categories: 4,
            nouns_per_category: 8,
            polysemous_fraction: 0.5,
            held_out_fraction: 0.25,
            verbs: 8,
            attribute_verb_fraction: 1.0,
            fillers: 8,
            pairs: [1000, 125, 125],
            held_out_rate: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseSpec {
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl SenseSpec {
    pub fn new(category: &str, attribute: Option<&str>) -> Self {
        SenseSpec {
            category: category.to_string(),
            attribute: attribute.map(String::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSpec {
    /// Subject categories the verb allows.
    pub allows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires: Option<String>,
}

impl VerbSpec {
    pub fn accepts(&self, sense: &SenseSpec) -> bool {
        self.allows.contains(&sense.category)
            && self.requires.as_ref().map_or(true, |r| sense.attribute.as_ref() == Some(r))
    }
}

/// A fully explicit artificial language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub categories: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    pub nouns: BTreeMap<String, Vec<SenseSpec>>,
    /// Adjective → categories it admits.
    pub adjectives: BTreeMap<String, Vec<String>>,
    pub verbs: BTreeMap<String, VerbSpec>,
    pub held_out: BTreeSet<String>,
    /// Words with no lexicon entry.
    pub fillers: Vec<String>,
    pub templates: Vec<String>,
    pub pairs: [usize; 3],
    pub held_out_rate: f64,
    pub seed: u64,
}

fn pseudo_word<R: Rng + ?Sized>(rng: &mut R, taken: &mut BTreeSet<String>, syllables: usize) -> String {
    const ONSETS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    loop {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(ONSETS[rng.gen_range(0..ONSETS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

impl SynthSpec {
    /// Builds a pseudo-word language from `config`.
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        if config.categories < 3 || config.categories > CATEGORY_NAMES.len() {
            return Err(Error::invalid(format!(
                "categories must be in [3, {}]",
                CATEGORY_NAMES.len()
            )));
        }
        if config.nouns_per_category < 2 {
            return Err(Error::invalid("every category needs at least two nouns"));
        }
        if config.verbs < config.categories {
            return Err(Error::invalid("need at least one verb per category"));
        }
        let fractions = [
            config.polysemous_fraction,
            config.held_out_fraction,
            config.held_out_rate,
            config.attribute_verb_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("fractions must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut taken: BTreeSet<String> = BTreeSet::from(["the".to_string()]);
        let k = config.categories;
        let categories: Vec<String> = CATEGORY_NAMES[..k].iter().map(|s| s.to_string()).collect();
        let attrs = ATTRIBUTE_NAMES;

        let total = k * config.nouns_per_category;
        let polysemous = (config.polysemous_fraction * total as f64).ceil() as usize;
        let per_cat_held = ((config.held_out_fraction * config.nouns_per_category as f64).round() as usize)
            .min(config.nouns_per_category - 1);
        // polysemy and held-out status are drawn independently
        let mut poly = vec![false; total];
        for i in rand::seq::index::sample(&mut rng, total, polysemous) {
            poly[i] = true;
        }
        let mut held = vec![false; total];
        for c in 0..k {
            for j in rand::seq::index::sample(&mut rng, config.nouns_per_category, per_cat_held) {
                held[c * config.nouns_per_category + j] = true;
            }
        }
        let mut nouns = BTreeMap::new();
        let mut held_out = BTreeSet::new();
        for (c, cat) in categories.iter().enumerate() {
            for j in 0..config.nouns_per_category {
                let idx = c * config.nouns_per_category + j;
                let w = pseudo_word(&mut rng, &mut taken, 2);
                let a = rng.gen_range(0..attrs.len());
                let mut senses = vec![SenseSpec::new(cat, Some(attrs[a]))];
                if poly[idx] {
                    let other = (c + 1 + rng.gen_range(0..k - 1)) % k;
                    senses.push(SenseSpec::new(&categories[other], Some(attrs[1 - a])));
                }
                if held[idx] {
                    held_out.insert(w.clone());
                }
                nouns.insert(w, senses);
            }
        }

        let mut adjectives = BTreeMap::new();
        for a in 0..k {
            for b in a + 1..k {
                let w = pseudo_word(&mut rng, &mut taken, 3);
                adjectives.insert(w, vec![categories[a].clone(), categories[b].clone()]);
            }
        }

        let mut verbs = BTreeMap::new();
        let with_attr = (config.attribute_verb_fraction * config.verbs as f64).round() as usize;
        for v in 0..config.verbs {
            let first = v % k;
            let second = (first + 1 + rng.gen_range(0..k - 1)) % k;
            let w = pseudo_word(&mut rng, &mut taken, 2) + "s";
            // attribute-requiring verbs are spread over the category cycle
            let requires = (v * with_attr / config.verbs != (v + 1) * with_attr / config.verbs)
                .then(|| attrs[rng.gen_range(0..attrs.len())].to_string());
            verbs.insert(
                w,
                VerbSpec {
                    allows: vec![categories[first].clone(), categories[second].clone()],
                    requires,
                },
            );
        }

        let fillers = (0..config.fillers)
            .map(|_| pseudo_word(&mut rng, &mut taken, 2) + "ly")
            .collect();

        let spec = SynthSpec {
            categories,
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            nouns,
            adjectives,
            verbs,
            held_out,
            fillers,
            templates: TEMPLATES.iter().map(|s| s.to_string()).collect(),
            pairs: config.pairs,
            held_out_rate: config.held_out_rate,
            seed: config.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let known_cat = |kind: &str, w: &str, c: &String| -> Result<()> {
            if self.categories.contains(c) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{kind} `{w}` uses unknown category `{c}`")))
            }
        };
        let known_attr = |kind: &str, w: &str, a: &Option<String>| -> Result<()> {
            match a {
                Some(a) if !self.attributes.contains(a) => {
                    Err(Error::invalid(format!("{kind} `{w}` uses unknown attribute `{a}`")))
                }
                _ => Ok(()),
            }
        };
        for (w, senses) in &self.nouns {
            if senses.is_empty() {
                return Err(Error::invalid(format!("noun `{w}` has no senses")));
            }
            for sense in senses {
                known_cat("noun", w, &sense.category)?;
                known_attr("noun", w, &sense.attribute)?;
            }
            let cats: BTreeSet<&String> = senses.iter().map(|s| &s.category).collect();
            if cats.len() != senses.len() {
                return Err(Error::invalid(format!("noun `{w}` has two senses in one category")));
            }
        }
        for (w, cats) in &self.adjectives {
            if cats.is_empty() {
                return Err(Error::invalid(format!("adjective `{w}` admits no category")));
            }
            for c in cats {
                known_cat("adjective", w, c)?;
            }
        }
        for (w, v) in &self.verbs {
            if v.allows.is_empty() {
                return Err(Error::invalid(format!("verb `{w}` allows no category")));
            }
            for c in &v.allows {
                known_cat("verb", w, c)?;
            }
            known_attr("verb", w, &v.requires)?;
        }
        for c in &self.categories {
            let n = self
                .nouns
                .values()
                .filter(|s| s.iter().any(|x| x.category == *c))
                .count();
            if n < 2 {
                return Err(Error::invalid(format!("category `{c}` has fewer than two nouns")));
            }
        }
        if let Some(w) = self.held_out.iter().find(|w| !self.nouns.contains_key(*w)) {
            return Err(Error::invalid(format!("held-out word `{w}` is not a noun")));
        }
        let mut seen = BTreeSet::new();
        let all = self
            .nouns
            .keys()
            .chain(self.adjectives.keys())
            .chain(self.verbs.keys())
            .chain(self.fillers.iter());
        for w in all {
            if !seen.insert(w) {
                return Err(Error::invalid(format!("word `{w}` has more than one role")));
            }
        }
        if self.templates.is_empty() {
            return Err(Error::invalid("no templates"));
        }
        for t in &self.templates {
            for slot in ["{adj}", "{noun}", "{verb}"] {
                if t.matches(slot).count() != 1 {
                    return Err(Error::invalid(format!("template `{t}` needs exactly one {slot}")));
                }
            }
            if t.contains("{filler}") && self.fillers.is_empty() {
                return Err(Error::invalid(format!("template `{t}` needs fillers")));
            }
        }
        Ok(())
    }

    pub fn polysemous_fraction(&self) -> f64 {
        let poly = self.nouns.values().filter(|s| s.len() > 1).count();
        poly as f64 / self.nouns.len() as f64
    }

    /// Sememe lexicon text: each noun sense carries its category sememe and
    /// attribute sememe; adjectives and verbs carry a sememe of their own.
    /// Fillers, `the` and punctuation are left out.
    pub fn lexicon_text(&self) -> String {
        let mut out = String::new();
        for (w, senses) in &self.nouns {
            let senses: Vec<String> = senses
                .iter()
                .map(|s| match &s.attribute {
                    Some(a) => format!("{},{a}", s.category),
                    None => s.category.clone(),
                })
                .collect();
            out.push_str(&format!("{w}\t{}\n", senses.join(" | ")));
        }
        for w in self.adjectives.keys() {
            out.push_str(&format!("{w}\tattr_{w}\n"));
        }
        for w in self.verbs.keys() {
            out.push_str(&format!("{w}\tact_{w}\n"));
        }
        out
    }

    /// The sense the adjective selects, if exactly one qualifies.
    fn intended(&self, noun: &str, adj: Option<&str>) -> Option<&SenseSpec> {
        let senses = self.nouns.get(noun)?;
        let admitted: Vec<&SenseSpec> = match adj {
            Some(a) => {
                let cats = self.adjectives.get(a)?;
                senses.iter().filter(|s| cats.contains(&s.category)).collect()
            }
            None => senses.iter().collect(),
        };
        match admitted.as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }

    /// Recomputes a label from the rules alone: find the noun, adjective and
    /// verb, resolve the noun's sense with the adjective, and ask whether the
    /// verb accepts that sense. Errors if the sentence is not decidable.
    pub fn rule_label<S: AsRef<str>>(&self, tokens: &[S]) -> Result<usize> {
        let find = |is: &dyn Fn(&str) -> bool| -> Vec<&str> {
            tokens.iter().map(AsRef::as_ref).filter(|t| is(t)).collect()
        };
        let nouns = find(&|t| self.nouns.contains_key(t));
        let adjs = find(&|t| self.adjectives.contains_key(t));
        let verbs = find(&|t| self.verbs.contains_key(t));
        if nouns.len() != 1 || verbs.len() != 1 || adjs.len() > 1 {
            return Err(Error::invalid(format!(
                "expected one noun, one verb and at most one adjective, found {}, {} and {}",
                nouns.len(),
                verbs.len(),
                adjs.len()
            )));
        }
        let sense = self
            .intended(nouns[0], adjs.first().copied())
            .ok_or_else(|| Error::invalid(format!("the sense of `{}` is ambiguous", nouns[0])))?;
        Ok(usize::from(self.verbs[verbs[0]].accepts(sense)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}

/// Generated artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub lexicon: String,
    /// Tagged positives of the training split.
    pub corpus: Vec<TaggedSentence>,
    pub dataset: Dataset,
}

impl SynthData {
    /// Writes `grammar.json`, `lexicon.tsv`, `corpus.txt` and the dataset files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.dataset.write(dir)?;
        write_file(&dir.join("grammar.json"), self.spec.to_json()?)?;
        write_file(&dir.join("lexicon.tsv"), &self.lexicon)?;
        let corpus: String = self.corpus.iter().map(|s| s.to_line() + "\n").collect();
        write_file(&dir.join("corpus.txt"), corpus)
    }
}

struct Pools<'a> {
    seen: Vec<&'a String>,
    held: Vec<&'a String>,
}

fn realize(spec: &SynthSpec, template: &str, adj: &str, noun: &str, verb: &str, fillers: &[&str]) -> Vec<TaggedToken> {
    let mut next_filler = fillers.iter();
    template
        .split_whitespace()
        .map(|slot| {
            let (surface, tag) = match slot {
                "{adj}" => (adj, ADJ_TAG),
                "{noun}" => (noun, NOUN_TAG),
                "{verb}" => (verb, VERB_TAG),
                "{filler}" => (*next_filler.next().unwrap_or(&spec.fillers[0].as_str()), FILLER_TAG),
                "the" => ("the", DET_TAG),
                p => (p, PUNCT_TAG),
            };
            TaggedToken {
                surface: surface.to_string(),
                tag: tag.to_string(),
            }
        })
        .collect()
}

/// One positive/negative pair, or `None` if this draw cannot be completed.
fn draw_pair<R: Rng + ?Sized>(spec: &SynthSpec, nouns: &[&String], rng: &mut R) -> Option<(Vec<TaggedToken>, Vec<TaggedToken>)> {
    let (verb, v) = spec.verbs.iter().nth(rng.gen_range(0..spec.verbs.len()))?;
    let (adj, _) = spec.adjectives.iter().nth(rng.gen_range(0..spec.adjectives.len()))?;
    let with = |want: bool| -> Vec<&&String> {
        nouns
            .iter()
            .filter(|n| spec.intended(n, Some(adj)).is_some_and(|s| v.accepts(s) == want))
            .collect()
    };
    let (good, bad) = (with(true), with(false));
    let pos_noun = good.choose(rng)?;
    let neg_noun = bad.choose(rng)?;
    let template = spec.templates.choose(rng)?;
    let fillers: Vec<&str> = (0..2)
        .map(|_| spec.fillers.choose(rng).map(String::as_str).unwrap_or(""))
        .collect();
    Some((
        realize(spec, template, adj, pos_noun, verb, &fillers),
        realize(spec, template, adj, neg_noun, verb, &fillers),
    ))
}

/// Generates the lexicon, the tagged training corpus and a balanced dataset.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let pools = Pools {
        seen: spec.nouns.keys().filter(|n| !spec.held_out.contains(*n)).collect(),
        held: spec.nouns.keys().filter(|n| spec.held_out.contains(*n)).collect(),
    };
    let mut splits: [Vec<LabeledExample>; 3] = Default::default();
    let mut summary: [SplitSummary; 3] = Default::default();
    let mut corpus = Vec::new();
    let mut provenance = 0;
    for (k, &pairs) in spec.pairs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64 + 1);
        for _ in 0..pairs {
            let mut attempts = 0;
            let (pos, neg) = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(Error::invalid(format!(
                        "cannot build a {} pair: no adjective/verb combination admits both a rational and an irrational noun",
                        SPLIT_NAMES[k]
                    )));
                }
                let use_held = k > 0 && !pools.held.is_empty() && rng.gen_bool(spec.held_out_rate);
                let pool = if use_held { &pools.held } else { &pools.seen };
                if let Some(pair) = draw_pair(spec, pool, &mut rng) {
                    break pair;
                }
            };
            let surfaces = |t: &[TaggedToken]| t.iter().map(|x| x.surface.clone()).collect::<Vec<_>>();
            splits[k].push(LabeledExample {
                tokens: surfaces(&pos),
                label: 1,
                op: SourceOp::None,
                provenance,
            });
            splits[k].push(LabeledExample {
                tokens: surfaces(&neg),
                label: 0,
                op: SourceOp::Replace1,
                provenance,
            });
            if k == 0 {
                corpus.push(TaggedSentence { tokens: pos, provenance });
            }
            provenance += 1;
        }
        summary[k] = SplitSummary {
            sources: pairs,
            positive: pairs,
            negative: pairs,
            skipped: BTreeMap::new(),
        };
    }
    Ok(SynthData {
        spec: spec.clone(),
        lexicon: spec.lexicon_text(),
        corpus,
        dataset: Dataset { splits, summary },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::SememeLexicon;

    fn toy() -> SynthSpec {
        let cats = |cs: &[&str]| -> Vec<String> { cs.iter().map(|c| c.to_string()).collect() };
        let noun = |w: &str, senses: &[(&str, &str)]| {
            let senses = senses.iter().map(|(c, a)| SenseSpec::new(c, Some(a))).collect();
            (w.to_string(), senses)
        };
        let verb = |w: &str, allows: &[&str], requires: Option<&str>| {
            let v = VerbSpec {
                allows: cats(allows),
                requires: requires.map(String::from),
            };
            (w.to_string(), v)
        };
        SynthSpec {
            categories: cats(&["PLANT", "ANIMATE", "BUILDING", "BRAND"]),
            attributes: cats(&["BIG", "SMALL"]),
            nouns: BTreeMap::from([
                noun("fern", &[("PLANT", "SMALL")]),
                noun("oak", &[("PLANT", "BIG")]),
                noun("cat", &[("ANIMATE", "SMALL")]),
                noun("horse", &[("ANIMATE", "BIG")]),
                noun("building", &[("BUILDING", "BIG")]),
                noun("shed", &[("BUILDING", "SMALL")]),
                noun("apple", &[("PLANT", "SMALL"), ("BRAND", "BIG")]),
                noun("nova", &[("BRAND", "SMALL")]),
            ]),
            adjectives: BTreeMap::from([
                ("green".to_string(), cats(&["PLANT", "ANIMATE"])),
                ("listed".to_string(), cats(&["BRAND", "BUILDING"])),
            ]),
            verbs: BTreeMap::from([
                verb("wilts", &["PLANT"], None),
                verb("sleeps", &["ANIMATE"], None),
                verb("trades", &["BRAND"], None),
                verb("looms", &["PLANT", "BUILDING"], Some("BIG")),
            ]),
            held_out: BTreeSet::new(),
            fillers: vec!["today".into()],
            templates: TEMPLATES.iter().map(|s| s.to_string()).collect(),
            pairs: [20, 5, 5],
            held_out_rate: 0.0,
            seed: 4,
        }
    }

    #[test]
    fn selectional_examples() {
        let s = toy();
        assert_eq!(s.rule_label(&["the", "fern", "wilts"]).unwrap(), 1);
        assert_eq!(s.rule_label(&["the", "building", "wilts"]).unwrap(), 0);
        // the adjective picks the PLANT sense of a PLANT/BRAND noun
        assert_eq!(s.rule_label(&["the", "green", "apple", "wilts"]).unwrap(), 1);
        assert_eq!(s.rule_label(&["the", "listed", "apple", "wilts"]).unwrap(), 0);
        assert_eq!(s.rule_label(&["the", "listed", "apple", "trades"]).unwrap(), 1);
        assert!(s.rule_label(&["the", "apple", "wilts"]).is_err());
        assert!(s.rule_label(&["the", "fern"]).is_err());
    }

    #[test]
    fn attribute_of_the_selected_sense_decides() {
        let s = toy();
        assert_eq!(s.rule_label(&["the", "green", "oak", "looms"]).unwrap(), 1);
        assert_eq!(s.rule_label(&["the", "green", "fern", "looms"]).unwrap(), 0);
        // the PLANT sense of apple is SMALL even though its BRAND sense is BIG
        assert_eq!(s.rule_label(&["the", "green", "apple", "looms"]).unwrap(), 0);
        assert_eq!(s.rule_label(&["the", "listed", "building", "looms"]).unwrap(), 1);
        assert_eq!(s.rule_label(&["the", "listed", "shed", "looms"]).unwrap(), 0);
    }

    #[test]
    fn generated_labels_follow_the_rules() {
        let data = gen_synthetic(&toy()).unwrap();
        for split in &data.dataset.splits {
            let pos = split.iter().filter(|e| e.label == 1).count();
            assert_eq!(pos * 2, split.len());
            for e in split {
                assert_eq!(data.spec.rule_label(&e.tokens).unwrap(), e.label, "{:?}", e.tokens);
            }
        }
        assert_eq!(data.corpus.len(), 20);
    }

    #[test]
    fn pairs_differ_only_in_the_noun() {
        let data = gen_synthetic(&toy()).unwrap();
        for pair in data.dataset.train().chunks(2) {
            let diff: Vec<usize> = (0..pair[0].tokens.len())
                .filter(|&i| pair[0].tokens[i] != pair[1].tokens[i])
                .collect();
            assert_eq!(diff.len(), 1);
            assert!(data.spec.nouns.contains_key(&pair[1].tokens[diff[0]]));
        }
    }

    #[test]
    fn same_seed_same_artifacts() {
        let config = SynthConfig {
            pairs: [50, 10, 10],
            seed: 5,
            ..SynthConfig::default()
        };
        let a = gen_synthetic(&SynthSpec::generate(&config).unwrap()).unwrap();
        let b = gen_synthetic(&SynthSpec::generate(&config).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&SynthSpec::generate(&SynthConfig { seed: 6, ..config }).unwrap()).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn default_language_shape() {
        let spec = SynthSpec::generate(&SynthConfig::default()).unwrap();
        assert!(spec.polysemous_fraction() >= 0.3);
        let words = spec.nouns.len() + spec.adjectives.len() + spec.verbs.len() + spec.fillers.len();
        assert!(words <= 200);
        assert!(!spec.held_out.is_empty());
        let data = gen_synthetic(&SynthSpec {
            pairs: [100, 40, 40],
            ..spec
        })
        .unwrap();
        let train_words: BTreeSet<&String> = data.dataset.train().iter().flat_map(|e| &e.tokens).collect();
        assert!(data.spec.held_out.iter().all(|w| !train_words.contains(w)));
        let test_words: BTreeSet<&String> = data.dataset.test().iter().flat_map(|e| &e.tokens).collect();
        assert!(data.spec.held_out.iter().any(|w| test_words.contains(w)));
    }

    #[test]
    fn lexicon_parses_and_round_trips_spec() {
        let spec = toy();
        let lex = SememeLexicon::parse(&spec.lexicon_text(), "lex", 100).unwrap();
        assert_eq!(lex.entry("apple").unwrap().senses.len(), 2);
        assert!(lex.entry("today").is_none());
        assert_eq!(SynthSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let mut s = toy();
        s.verbs.get_mut("wilts").unwrap().allows.push("LIGHT".into());
        assert!(s.validate().is_err());
        let mut s = toy();
        s.verbs.get_mut("wilts").unwrap().requires = Some("HEAVY".into());
        assert!(s.validate().is_err());
        let mut s = toy();
        s.nouns.remove("oak");
        s.nouns.remove("fern");
        assert!(s.validate().is_err());
        let mut s = toy();
        s.nouns.insert("twin".into(), vec![SenseSpec::new("PLANT", None); 2]);
        assert!(s.validate().is_err());
        // every verb accepts everything: no negative can be built
        let mut s = toy();
        for v in s.verbs.values_mut() {
            v.allows = s.categories.clone();
            v.requires = None;
        }
        assert!(gen_synthetic(&s).is_err());
    }
}
