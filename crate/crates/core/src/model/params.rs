use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::lexicon::PAD_ID;
use crate::{Error, Result};

/// Range of the uniform initializer used for weight matrices and attention
/// context vectors. Biases start at zero.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwmConfig {
    pub word_vocab_size: usize,
    pub sememe_vocab_size: usize,
    pub word_emb_dim: usize,
    pub sememe_emb_dim: usize,
    /// Hidden units per LSTM direction.
    pub hidden: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    pub max_sentence_length: usize,
}

pub const NUM_CLASSES: usize = 2;

impl SwmConfig {
    pub fn new(word_vocab_size: usize, sememe_vocab_size: usize) -> Self {
        SwmConfig {
            word_vocab_size,
            sememe_vocab_size,
            word_emb_dim: 128,
            sememe_emb_dim: 128,
            hidden: 128,
            attention_dim: 128,
            dropout: 0.5,
            max_sentence_length: 200,
        }
    }

    /// Same vocabulary sizes, every hidden dimension set to `dim`.
    pub fn with_dims(mut self, dim: usize) -> Self {
        self.word_emb_dim = dim;
        self.sememe_emb_dim = dim;
        self.hidden = dim;
        self.attention_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_vocab_size", self.word_vocab_size),
            ("sememe_vocab_size", self.sememe_vocab_size),
            ("word_emb_dim", self.word_emb_dim),
            ("sememe_emb_dim", self.sememe_emb_dim),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("max_sentence_length", self.max_sentence_length),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One LSTM direction: `[i; f; o; g] = W [x; h] + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4·hidden × (input + hidden)`
    pub weight: Tensor,
    /// `4·hidden`
    pub bias: Tensor,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            weight: Tensor::zeros(&[4 * hidden, input + hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::zeros(input, hidden),
            backward: LstmParams::zeros(input, hidden),
        }
    }
}

/// `u_i = tanh(W o_i + b)`, `α = softmax(u_iᵀ context)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub context: Tensor,
}

impl AttentionParams {
    pub fn zeros(input: usize, attention: usize) -> Self {
        AttentionParams {
            weight: Tensor::zeros(&[attention, input]),
            bias: Tensor::zeros(&[attention]),
            context: Tensor::zeros(&[attention]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwmParams {
    pub word_embedding: Tensor,
    pub sememe_embedding: Tensor,
    pub word_lstm: BiLstmParams,
    pub sememe_lstm: BiLstmParams,
    pub word_attention: AttentionParams,
    pub sememe_attention: AttentionParams,
    /// Projects word-level outputs before sense matching (`attention × 2·hidden`).
    pub match_word: Tensor,
    /// Projects sense embeddings before matching (`attention × sememe_emb_dim`).
    pub match_sense: Tensor,
    pub classifier_word: Tensor,
    pub classifier_sememe: Tensor,
    pub classifier_bias: Tensor,
}

macro_rules! param_fields {
    ($self:ident, $wrap:ident) => {
        vec![
            ("word_embedding", $wrap!($self.word_embedding)),
            ("sememe_embedding", $wrap!($self.sememe_embedding)),
            ("word_lstm.forward.weight", $wrap!($self.word_lstm.forward.weight)),
            ("word_lstm.forward.bias", $wrap!($self.word_lstm.forward.bias)),
            ("word_lstm.backward.weight", $wrap!($self.word_lstm.backward.weight)),
            ("word_lstm.backward.bias", $wrap!($self.word_lstm.backward.bias)),
            ("sememe_lstm.forward.weight", $wrap!($self.sememe_lstm.forward.weight)),
            ("sememe_lstm.forward.bias", $wrap!($self.sememe_lstm.forward.bias)),
            ("sememe_lstm.backward.weight", $wrap!($self.sememe_lstm.backward.weight)),
            ("sememe_lstm.backward.bias", $wrap!($self.sememe_lstm.backward.bias)),
            ("word_attention.weight", $wrap!($self.word_attention.weight)),
            ("word_attention.bias", $wrap!($self.word_attention.bias)),
            ("word_attention.context", $wrap!($self.word_attention.context)),
            ("sememe_attention.weight", $wrap!($self.sememe_attention.weight)),
            ("sememe_attention.bias", $wrap!($self.sememe_attention.bias)),
            ("sememe_attention.context", $wrap!($self.sememe_attention.context)),
            ("match_word", $wrap!($self.match_word)),
            ("match_sense", $wrap!($self.match_sense)),
            ("classifier_word", $wrap!($self.classifier_word)),
            ("classifier_sememe", $wrap!($self.classifier_sememe)),
            ("classifier_bias", $wrap!($self.classifier_bias)),
        ]
    };
}

macro_rules! by_ref {
    ($e:expr) => {
        &$e
    };
}

macro_rules! by_mut {
    ($e:expr) => {
        &mut $e
    };
}

impl SwmParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &SwmConfig) -> Self {
        let h2 = 2 * config.hidden;
        SwmParams {
            word_embedding: Tensor::zeros(&[config.word_vocab_size, config.word_emb_dim]),
            sememe_embedding: Tensor::zeros(&[config.sememe_vocab_size, config.sememe_emb_dim]),
            word_lstm: BiLstmParams::zeros(config.word_emb_dim, config.hidden),
            sememe_lstm: BiLstmParams::zeros(config.sememe_emb_dim, config.hidden),
            word_attention: AttentionParams::zeros(h2, config.attention_dim),
            sememe_attention: AttentionParams::zeros(h2, config.attention_dim),
            match_word: Tensor::zeros(&[config.attention_dim, h2]),
            match_sense: Tensor::zeros(&[config.attention_dim, config.sememe_emb_dim]),
            classifier_word: Tensor::zeros(&[NUM_CLASSES, h2]),
            classifier_sememe: Tensor::zeros(&[NUM_CLASSES, h2]),
            classifier_bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    /// Uniform `[-INIT_RANGE, INIT_RANGE]` weights, zero biases, zero PAD embeddings.
    pub fn init<R: Rng + ?Sized>(config: &SwmConfig, rng: &mut R) -> Self {
        let mut params = Self::zeros(config);
        for (name, t) in params.named_mut() {
            if is_bias(name) {
                continue;
            }
            for x in t.data_mut() {
                *x = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        params.word_embedding.row_mut(PAD_ID).fill(0.0);
        params.sememe_embedding.row_mut(PAD_ID).fill(0.0);
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.named_mut() {
            t.fill(0.0);
        }
        out
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        param_fields!(self, by_ref)
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        param_fields!(self, by_mut)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.named_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor against the shapes `config` implies.
    pub fn check_shapes(&self, config: &SwmConfig) -> Result<()> {
        let expected = SwmParams::zeros(config);
        for ((name, want), (_, got)) in expected.named().into_iter().zip(self.named()) {
            if want.shape() != got.shape() {
                return Err(Error::ParamShape {
                    name: name.to_string(),
                    expected: want.shape().to_vec(),
                    found: got.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn is_bias(name: &str) -> bool {
    name.ends_with(".bias") || name == "classifier_bias"
}

impl ParamSet for SwmParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.named_mut()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count_by_formula(c: &SwmConfig) -> usize {
        let (h, a) = (c.hidden, c.attention_dim);
        let lstm = |input: usize| 2 * (4 * h * (input + h) + 4 * h);
        c.word_vocab_size * c.word_emb_dim
            + c.sememe_vocab_size * c.sememe_emb_dim
            + lstm(c.word_emb_dim)
            + lstm(c.sememe_emb_dim)
            + 2 * (a * 2 * h + 2 * a)
            + a * 2 * h
            + a * c.sememe_emb_dim
            + 2 * NUM_CLASSES * 2 * h
            + NUM_CLASSES
    }

    #[test]
    fn parameter_count_is_function_of_config() {
        let mut c = SwmConfig::new(30, 20).with_dims(4);
        c.attention_dim = 3;
        c.sememe_emb_dim = 5;
        let p = SwmParams::zeros(&c);
        assert_eq!(p.num_parameters(), count_by_formula(&c));
        assert_eq!(p.named().len(), 21);
        p.check_shapes(&c).unwrap();
        c.hidden = 7;
        let err = p.check_shapes(&c).unwrap_err();
        assert!(err.to_string().contains("word_lstm.forward.weight"), "{err}");
    }

    #[test]
    fn init_ranges() {
        let c = SwmConfig::new(10, 10).with_dims(4);
        let p = SwmParams::init(&c, &mut ChaCha8Rng::seed_from_u64(1));
        for (name, t) in p.named() {
            if is_bias(name) {
                assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|x| x.abs() <= INIT_RANGE), "{name}");
            }
        }
        assert!(p.word_embedding.row(PAD_ID).iter().all(|&x| x == 0.0));
        assert!(p.word_embedding.row(2).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn config_validation() {
        let mut c = SwmConfig::new(10, 10);
        c.validate().unwrap();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c.dropout = 0.0;
        c.hidden = 0;
        assert!(c.validate().is_err());
    }
}
