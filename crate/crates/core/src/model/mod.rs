//! The sememe-word matching network and its ablations.
//!
//! A sentence is encoded twice. The word level runs a Bi-LSTM over word
//! embeddings and pools it with local attention into `c^w`. The sememe level
//! represents every sense as the mean of its sememe embeddings, lets each
//! word softly pick among its senses using its word-level output (the
//! matching step), and runs a second attention Bi-LSTM over the picked sense
//! vectors to get `c^s`. A linear softmax layer over `c^w` and `c^s` predicts
//! whether the sentence is rational.

mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod params;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{
    AttentionParams, BiLstmParams, LstmParams, SwmConfig, SwmParams, INIT_RANGE, NUM_CLASSES,
};

use crate::autodiff::{softmax, Tape, Var};
use crate::lexicon::EncodedSentence;
use crate::{Error, Result};
use layers::{AttentionVars, LstmVars};

/// Which components of the network are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// The complete network.
    Full,
    /// Senses are averaged instead of matched.
    WoMatch,
    /// No local attention and no matching; mean-pooled Bi-LSTMs on both levels.
    #[serde(rename = "wo-dual")]
    WoDualAttention,
    /// Word-level attention LSTM only.
    WoHownet,
    /// Averaged senses through the sememe-level attention LSTM only.
    #[serde(rename = "wo-wordpart")]
    WoWordPart,
    /// Full structure, but only `c^s` reaches the classifier.
    #[serde(rename = "wo-cw")]
    WoWordCw,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::WoMatch,
        Variant::WoDualAttention,
        Variant::WoHownet,
        Variant::WoWordPart,
        Variant::WoWordCw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoMatch => "wo-match",
            Variant::WoDualAttention => "wo-dual",
            Variant::WoHownet => "wo-hownet",
            Variant::WoWordPart => "wo-wordpart",
            Variant::WoWordCw => "wo-cw",
        }
    }

    fn uses_word_encoder(self) -> bool {
        !matches!(self, Variant::WoWordPart)
    }

    fn uses_sememes(self) -> bool {
        !matches!(self, Variant::WoHownet)
    }

    fn uses_matching(self) -> bool {
        matches!(self, Variant::Full | Variant::WoWordCw)
    }

    fn uses_attention(self) -> bool {
        !matches!(self, Variant::WoDualAttention)
    }

    fn word_context_to_classifier(self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::WoMatch | Variant::WoDualAttention | Variant::WoHownet
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::invalid(format!(
                    "unknown variant {s:?}; valid variants: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Dropout behaviour for one forward pass.
pub enum Dropout<'r> {
    Off,
    /// Inverted dropout with the given drop probability.
    On { rate: f64, rng: &'r mut dyn RngCore },
}

impl Dropout<'_> {
    fn mask(&mut self, len: usize) -> Option<Vec<f64>> {
        match self {
            Dropout::On { rate, rng } if *rate > 0.0 => {
                let keep = 1.0 - *rate;
                Some(
                    (0..len)
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        match self.mask(tape.value(v).len()) {
            Some(mask) => tape.mul_const(v, mask),
            None => Ok(v),
        }
    }
}

/// Values produced by one forward pass. Fields for components a variant
/// does not use are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardTrace {
    pub variant: Variant,
    /// `L × 2·hidden`
    pub word_outputs: Option<Vec<Vec<f64>>>,
    pub word_attention: Option<Vec<f64>>,
    pub word_context: Option<Vec<f64>>,
    /// Per word, the distribution over its senses.
    pub matching: Option<Vec<Vec<f64>>>,
    /// Sememe-level inputs `t_i`.
    pub sememe_inputs: Option<Vec<Vec<f64>>>,
    pub sememe_outputs: Option<Vec<Vec<f64>>>,
    pub sememe_attention: Option<Vec<f64>>,
    pub sememe_context: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardTrace {
    /// Predicted label; exact ties go to class 0.
    pub fn predicted(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// Every probability distribution contained in the trace.
    pub fn distributions(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.probabilities];
        out.extend(self.word_attention.as_deref());
        out.extend(self.sememe_attention.as_deref());
        if let Some(m) = &self.matching {
            out.extend(m.iter().map(Vec::as_slice));
        }
        out
    }
}

/// First index of the maximum.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Tape plus lazily bound parameters for one sentence.
///
/// Dense parameters become leaves on first use; embedding matrices are bound
/// row by row so that untouched rows cost nothing.
pub struct Graph<'p> {
    pub tape: Tape,
    params: &'p SwmParams,
    dense: HashMap<&'static str, Var>,
    word_rows: HashMap<usize, Var>,
    sememe_rows: HashMap<usize, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p SwmParams) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            dense: HashMap::new(),
            word_rows: HashMap::new(),
            sememe_rows: HashMap::new(),
        }
    }

    fn param(&mut self, name: &'static str) -> Var {
        if let Some(&v) = self.dense.get(name) {
            return v;
        }
        let t = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        let v = self.tape.leaf_slice(t.shape(), t.data());
        self.dense.insert(name, v);
        v
    }

    fn embedding_row(&mut self, sememe: bool, id: usize) -> Result<Var> {
        let (table, cache) = if sememe {
            (&self.params.sememe_embedding, &mut self.sememe_rows)
        } else {
            (&self.params.word_embedding, &mut self.word_rows)
        };
        if let Some(&v) = cache.get(&id) {
            return Ok(v);
        }
        let rows = table.shape()[0];
        if id >= rows {
            return Err(Error::invalid(format!(
                "{} index {id} out of range for {rows} rows",
                if sememe { "sememe" } else { "word" }
            )));
        }
        let row = table.row(id);
        let v = self.tape.leaf_slice(&[row.len()], row);
        cache.insert(id, v);
        Ok(v)
    }

    fn lstm(&mut self, prefix: &'static str) -> (LstmVars, LstmVars) {
        let names: [&'static str; 4] = match prefix {
            "word" => [
                "word_lstm.forward.weight",
                "word_lstm.forward.bias",
                "word_lstm.backward.weight",
                "word_lstm.backward.bias",
            ],
            _ => [
                "sememe_lstm.forward.weight",
                "sememe_lstm.forward.bias",
                "sememe_lstm.backward.weight",
                "sememe_lstm.backward.bias",
            ],
        };
        (
            LstmVars {
                weight: self.param(names[0]),
                bias: self.param(names[1]),
            },
            LstmVars {
                weight: self.param(names[2]),
                bias: self.param(names[3]),
            },
        )
    }

    fn attention(&mut self, prefix: &'static str) -> AttentionVars {
        let names: [&'static str; 3] = match prefix {
            "word" => [
                "word_attention.weight",
                "word_attention.bias",
                "word_attention.context",
            ],
            _ => [
                "sememe_attention.weight",
                "sememe_attention.bias",
                "sememe_attention.context",
            ],
        };
        AttentionVars {
            weight: self.param(names[0]),
            bias: self.param(names[1]),
            context: self.param(names[2]),
        }
    }

    /// Adds this graph's parameter gradients into `grads` (same layout as the params).
    pub fn accumulate_grads(&self, grads: &mut SwmParams, scale: f64) {
        for (&name, &v) in &self.dense {
            let dst = grads.get_mut(name).expect("bound parameter exists");
            for (d, g) in dst.data_mut().iter_mut().zip(self.tape.grad(v)) {
                *d += scale * g;
            }
        }
        for (sememe, rows) in [(false, &self.word_rows), (true, &self.sememe_rows)] {
            let table = if sememe {
                &mut grads.sememe_embedding
            } else {
                &mut grads.word_embedding
            };
            for (&id, &v) in rows {
                for (d, g) in table.row_mut(id).iter_mut().zip(self.tape.grad(v)) {
                    *d += scale * g;
                }
            }
        }
    }
}

/// Tape handles of the intermediate values of a forward pass.
pub struct ForwardVars {
    pub word_outputs: Option<Vec<Var>>,
    pub word_attention: Option<Var>,
    pub word_context: Option<Var>,
    pub matching: Option<Vec<Var>>,
    pub sememe_inputs: Option<Vec<Var>>,
    pub sememe_outputs: Option<Vec<Var>>,
    pub sememe_attention: Option<Var>,
    pub sememe_context: Option<Var>,
    pub logits: Var,
}

/// Records the forward pass of `variant` on `graph.tape`.
pub fn build_forward(
    graph: &mut Graph<'_>,
    sentence: &EncodedSentence,
    variant: Variant,
    max_len: usize,
    dropout: &mut Dropout<'_>,
) -> Result<ForwardVars> {
    let len = sentence.words.len();
    if len == 0 || len > max_len {
        return Err(Error::SentenceLength { len, max: max_len });
    }
    if sentence.senses.len() != len {
        return Err(Error::invalid("sense lists do not align with words"));
    }

    let mut fv = Partial::default();

    if variant.uses_word_encoder() {
        let mut inputs = Vec::with_capacity(len);
        for &w in &sentence.words {
            let e = graph.embedding_row(false, w)?;
            inputs.push(dropout.apply(&mut graph.tape, e)?);
        }
        let (fwd, bwd) = graph.lstm("word");
        let enc = layers::bilstm_encode(&mut graph.tape, &inputs, fwd, bwd)?;
        if variant.word_context_to_classifier() {
            if variant.uses_attention() {
                let attn = graph.attention("word");
                let (alpha, c) = layers::local_attention(&mut graph.tape, &enc.outputs, attn)?;
                fv.word_attention = Some(alpha);
                fv.word_context = Some(c);
            } else {
                fv.word_context = Some(layers::mean_pool(&mut graph.tape, &enc.outputs)?);
            }
        }
        fv.word_outputs = Some(enc.outputs);
    }

    if variant.uses_sememes() {
        let mut t = Vec::with_capacity(len);
        let mut betas = Vec::new();
        for (i, senses) in sentence.senses.iter().enumerate() {
            if senses.is_empty() {
                return Err(Error::invalid(format!("word {i} has no senses")));
            }
            let mut sense_vecs = Vec::with_capacity(senses.len());
            for sememes in senses {
                if sememes.is_empty() {
                    return Err(Error::invalid(format!("word {i} has an empty sense")));
                }
                let rows = sememes
                    .iter()
                    .map(|&s| graph.embedding_row(true, s))
                    .collect::<Result<Vec<_>>>()?;
                sense_vecs.push(layers::sense_embed(&mut graph.tape, &rows)?);
            }
            if variant.uses_matching() {
                let o = fv.word_outputs.as_ref().expect("matching needs word outputs")[i];
                let wx = graph.param("match_word");
                let wy = graph.param("match_sense");
                let (beta, ti) = layers::match_senses(&mut graph.tape, o, &sense_vecs, wx, wy)?;
                betas.push(beta);
                t.push(ti);
            } else {
                t.push(layers::average_senses(&mut graph.tape, &sense_vecs)?);
            }
        }
        let (fwd, bwd) = graph.lstm("sememe");
        let enc = layers::bilstm_encode(&mut graph.tape, &t, fwd, bwd)?;
        if variant.uses_attention() {
            let attn = graph.attention("sememe");
            let (alpha, c) = layers::local_attention(&mut graph.tape, &enc.outputs, attn)?;
            fv.sememe_attention = Some(alpha);
            fv.sememe_context = Some(c);
        } else {
            fv.sememe_context = Some(layers::mean_pool(&mut graph.tape, &enc.outputs)?);
        }
        if variant.uses_matching() {
            fv.matching = Some(betas);
        }
        fv.sememe_inputs = Some(t);
        fv.sememe_outputs = Some(enc.outputs);
    }

    let word_part = match fv.word_context {
        Some(c) => {
            let c = dropout.apply(&mut graph.tape, c)?;
            Some((graph.param("classifier_word"), c))
        }
        None => None,
    };
    let sememe_part = match fv.sememe_context {
        Some(c) => {
            let c = dropout.apply(&mut graph.tape, c)?;
            Some((graph.param("classifier_sememe"), c))
        }
        None => None,
    };
    let bias = graph.param("classifier_bias");
    let logits = layers::classifier_logits(&mut graph.tape, word_part, sememe_part, bias)?;
    Ok(ForwardVars {
        word_outputs: fv.word_outputs,
        word_attention: fv.word_attention,
        word_context: fv.word_context,
        matching: fv.matching,
        sememe_inputs: fv.sememe_inputs,
        sememe_outputs: fv.sememe_outputs,
        sememe_attention: fv.sememe_attention,
        sememe_context: fv.sememe_context,
        logits,
    })
}

#[derive(Default)]
struct Partial {
    word_outputs: Option<Vec<Var>>,
    word_attention: Option<Var>,
    word_context: Option<Var>,
    matching: Option<Vec<Var>>,
    sememe_inputs: Option<Vec<Var>>,
    sememe_outputs: Option<Vec<Var>>,
    sememe_attention: Option<Var>,
    sememe_context: Option<Var>,
}

fn values(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).to_vec()
}

fn values_seq(tape: &Tape, vs: &[Var]) -> Vec<Vec<f64>> {
    vs.iter().map(|&v| values(tape, v)).collect()
}

fn trace_from(tape: &Tape, fv: &ForwardVars, variant: Variant) -> Result<ForwardTrace> {
    let logits = values(tape, fv.logits);
    let probabilities = softmax(&logits)?;
    Ok(ForwardTrace {
        variant,
        word_outputs: fv.word_outputs.as_deref().map(|v| values_seq(tape, v)),
        word_attention: fv.word_attention.map(|v| values(tape, v)),
        word_context: fv.word_context.map(|v| values(tape, v)),
        matching: fv.matching.as_deref().map(|v| values_seq(tape, v)),
        sememe_inputs: fv.sememe_inputs.as_deref().map(|v| values_seq(tape, v)),
        sememe_outputs: fv.sememe_outputs.as_deref().map(|v| values_seq(tape, v)),
        sememe_attention: fv.sememe_attention.map(|v| values(tape, v)),
        sememe_context: fv.sememe_context.map(|v| values(tape, v)),
        logits,
        probabilities,
    })
}

/// A parameter set bound to its configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SwmModel {
    pub config: SwmConfig,
    pub params: SwmParams,
}

impl SwmModel {
    pub fn new(config: SwmConfig, params: SwmParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(SwmModel { config, params })
    }

    pub fn init<R: Rng + ?Sized>(config: SwmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = SwmParams::init(&config, rng);
        Ok(SwmModel { config, params })
    }

    /// Runs the network and returns every intermediate value.
    pub fn forward(
        &self,
        sentence: &EncodedSentence,
        variant: Variant,
        dropout: &mut Dropout<'_>,
    ) -> Result<ForwardTrace> {
        let mut graph = Graph::new(&self.params);
        let fv = build_forward(
            &mut graph,
            sentence,
            variant,
            self.config.max_sentence_length,
            dropout,
        )?;
        trace_from(&graph.tape, &fv, variant)
    }

    /// Deterministic class probabilities (dropout off).
    pub fn predict(&self, sentence: &EncodedSentence, variant: Variant) -> Result<Vec<f64>> {
        Ok(self.forward(sentence, variant, &mut Dropout::Off)?.probabilities)
    }

    /// Cross-entropy loss of `label`; adds `scale · dLoss/dθ` into `grads`.
    pub fn loss_and_grad(
        &self,
        sentence: &EncodedSentence,
        label: usize,
        variant: Variant,
        dropout: &mut Dropout<'_>,
        grads: &mut SwmParams,
        scale: f64,
    ) -> Result<f64> {
        let mut graph = Graph::new(&self.params);
        let fv = build_forward(
            &mut graph,
            sentence,
            variant,
            self.config.max_sentence_length,
            dropout,
        )?;
        let loss = graph.tape.softmax_cross_entropy(fv.logits, label)?;
        let value = graph.tape.value(loss)[0];
        graph.tape.backward(loss)?;
        graph.accumulate_grads(grads, scale);
        Ok(value)
    }

    /// Cross-entropy loss without gradients.
    pub fn loss(&self, sentence: &EncodedSentence, label: usize, variant: Variant) -> Result<f64> {
        let mut graph = Graph::new(&self.params);
        let fv = build_forward(
            &mut graph,
            sentence,
            variant,
            self.config.max_sentence_length,
            &mut Dropout::Off,
        )?;
        let loss = graph.tape.softmax_cross_entropy(fv.logits, label)?;
        Ok(graph.tape.value(loss)[0])
    }
}
