//! From token-level examples to a trained, saved and reloadable model.
//!
//! A model directory holds:
//!
//! ```text
//! model.ckpt     checkpoint (config, variant, parameters)
//! words.vocab    word vocabulary, one token per line
//! sememes.vocab  sememe vocabulary, including interned out-of-lexicon words
//! lexicon.tsv    the sememe lexicon the model was trained with
//! ```

use std::path::Path;

use rayon::prelude::*;

use crate::lexicon::{
    EncodedSentence, Encoder, SememeLexicon, Vocabulary, SEMEME_VOCAB_CAPACITY,
};
use crate::model::{Checkpoint, Dropout, ForwardTrace, SwmConfig, SwmModel, Variant};
use crate::trainer::{self, LabeledSentence, TrainConfig, TrainOutcome};
use crate::{Error, Result};

/// Tokens and a 0/1 label.
pub type Example = (Vec<String>, usize);

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const WORDS_FILE: &str = "words.vocab";
pub const SEMEMES_FILE: &str = "sememes.vocab";
pub const LEXICON_FILE: &str = "lexicon.tsv";

fn check_labels(data: &[Example]) -> Result<()> {
    match data.iter().find(|(_, y)| *y > 1) {
        Some((_, y)) => Err(Error::InvalidLabel(*y)),
        None => Ok(()),
    }
}

/// Encodes examples without touching the encoder's vocabularies.
pub fn encode_examples(encoder: &Encoder, data: &[Example]) -> Result<Vec<LabeledSentence>> {
    check_labels(data)?;
    Ok(data
        .iter()
        .map(|(tokens, label)| LabeledSentence {
            sentence: encoder.encode(tokens),
            label: *label,
        })
        .collect())
}

/// Vocabularies, encoded splits and the matching model shape.
pub struct Prepared {
    pub encoder: Encoder,
    pub model_config: SwmConfig,
    pub train: Vec<LabeledSentence>,
    pub valid: Vec<LabeledSentence>,
}

/// Builds the word vocabulary from `train` (at most `word_capacity` entries,
/// PAD and UNK included), interns out-of-lexicon training words as their own
/// sememe, and sizes the model to both vocabularies. `template` supplies
/// every non-vocabulary dimension.
pub fn prepare(
    train: &[Example],
    valid: &[Example],
    lexicon: SememeLexicon,
    template: &SwmConfig,
    word_capacity: usize,
) -> Result<Prepared> {
    check_labels(train)?;
    let words = Vocabulary::build(train.iter().flat_map(|(t, _)| t.iter().map(String::as_str)), word_capacity)?;
    let mut encoder = Encoder::new(words, lexicon);
    let train: Vec<LabeledSentence> = train
        .iter()
        .map(|(tokens, label)| LabeledSentence {
            sentence: encoder.encode_interning(tokens),
            label: *label,
        })
        .collect();
    let valid = encode_examples(&encoder, valid)?;
    let model_config = SwmConfig {
        word_vocab_size: encoder.words.len(),
        sememe_vocab_size: encoder.lexicon.sememe_vocab().len(),
        ..template.clone()
    };
    Ok(Prepared {
        encoder,
        model_config,
        train,
        valid,
    })
}

pub fn parse_lexicon(text: &str, origin: &str) -> Result<SememeLexicon> {
    SememeLexicon::parse(text, origin, SEMEME_VOCAB_CAPACITY)
}

/// A trained model with everything needed to score raw tokens.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub model: SwmModel,
    pub variant: Variant,
    pub encoder: Encoder,
}

impl Bundle {
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> EncodedSentence {
        self.encoder.encode(tokens)
    }

    /// `[p(irrational), p(rational)]`.
    pub fn probabilities<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        self.model.predict(&self.encode(tokens), self.variant)
    }

    pub fn trace<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ForwardTrace> {
        self.model.forward(&self.encode(tokens), self.variant, &mut Dropout::Off)
    }

    /// Accuracy over labelled examples, evaluated in parallel.
    pub fn accuracy(&self, data: &[Example]) -> Result<f64> {
        let encoded = encode_examples(&self.encoder, data)?;
        trainer::evaluate(&self.model, &encoded, self.variant)
    }

    pub fn predictions(&self, data: &[Example]) -> Result<Vec<usize>> {
        data.par_iter()
            .map(|(t, _)| Ok(crate::model::argmax(&self.probabilities(t)?)))
            .collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config.clone(),
            variant: self.variant,
            params: self.model.params.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
        self.encoder.words.save(&dir.join(WORDS_FILE))?;
        self.encoder.lexicon.sememe_vocab().save(&dir.join(SEMEMES_FILE))?;
        self.encoder.lexicon.save(&dir.join(LEXICON_FILE))
    }

    /// Loads a model directory and checks the vocabularies against the checkpoint.
    pub fn load(dir: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
        let words = Vocabulary::load(&dir.join(WORDS_FILE))?;
        let sememes = Vocabulary::load(&dir.join(SEMEMES_FILE))?;
        let lexicon = SememeLexicon::load_with_vocab(&dir.join(LEXICON_FILE), sememes)?;
        Self::from_parts(ckpt, words, lexicon)
    }

    pub fn from_parts(ckpt: Checkpoint, words: Vocabulary, lexicon: SememeLexicon) -> Result<Self> {
        let sizes = [
            ("word_embedding", ckpt.config.word_vocab_size, words.len()),
            ("sememe_embedding", ckpt.config.sememe_vocab_size, lexicon.sememe_vocab().len()),
        ];
        for (name, rows, vocab) in sizes {
            if rows != vocab {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has {rows} rows but the vocabulary has {vocab} entries"
                )));
            }
        }
        Ok(Bundle {
            model: SwmModel::new(ckpt.config, ckpt.params)?,
            variant: ckpt.variant,
            encoder: Encoder::new(words, lexicon),
        })
    }
}

/// Prepares the data, trains one variant and returns the best model.
pub fn fit(
    train: &[Example],
    valid: &[Example],
    lexicon: SememeLexicon,
    template: &SwmConfig,
    word_capacity: usize,
    config: &TrainConfig,
) -> Result<(Bundle, TrainOutcome)> {
    let prepared = prepare(train, valid, lexicon, template, word_capacity)?;
    let outcome = trainer::train(&prepared.model_config, &prepared.train, &prepared.valid, config)?;
    let bundle = Bundle {
        model: outcome.model.clone(),
        variant: config.variant,
        encoder: prepared.encoder,
    };
    Ok((bundle, outcome))
}
