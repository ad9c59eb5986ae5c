//! Network building blocks expressed as tape operations.

use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub weight: Var,
    pub bias: Var,
    pub context: Var,
}

#[derive(Clone, Debug)]
pub struct BiLstmOutput {
    /// Per step `[forward_i; backward_i]`, each `2·hidden`.
    pub outputs: Vec<Var>,
    /// Final `(h, c)` of the forward direction (after the last word).
    pub final_forward: (Var, Var),
    /// Final `(h, c)` of the backward direction (after the first word).
    pub final_backward: (Var, Var),
}

fn lstm_hidden(tape: &Tape, p: LstmVars) -> Result<usize> {
    let bias = tape.shape(p.bias);
    if bias.len() != 1 || bias[0] % 4 != 0 || bias[0] == 0 {
        return Err(Error::invalid(format!("LSTM bias must be 4·hidden, got {bias:?}")));
    }
    Ok(bias[0] / 4)
}

/// Runs one LSTM direction over `inputs` from zero initial states. Returns
/// per-step hidden outputs aligned with `inputs` and the final `(h, c)`.
pub fn lstm_direction(
    tape: &mut Tape,
    inputs: &[Var],
    p: LstmVars,
    reverse: bool,
) -> Result<(Vec<Var>, (Var, Var))> {
    let hidden = lstm_hidden(tape, p)?;
    let mut h = tape.leaf(Tensor::zeros(&[hidden]));
    let mut c = tape.leaf(Tensor::zeros(&[hidden]));
    let mut outputs = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let xh = tape.concat(inputs[t], h, 0)?;
        let z = tape.matmul(p.weight, xh)?;
        let z = tape.add(z, p.bias)?;
        let zi = tape.slice(z, 0, hidden)?;
        let zf = tape.slice(z, hidden, hidden)?;
        let zo = tape.slice(z, 2 * hidden, hidden)?;
        let zg = tape.slice(z, 3 * hidden, hidden)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let o = tape.sigmoid(zo);
        let g = tape.tanh(zg);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        h = tape.mul(o, squashed)?;
        outputs[t] = h;
    }
    Ok((outputs, (h, c)))
}

/// Bidirectional LSTM with per-step output `[→o_i; ←o_i]`.
pub fn bilstm_encode(
    tape: &mut Tape,
    inputs: &[Var],
    forward: LstmVars,
    backward: LstmVars,
) -> Result<BiLstmOutput> {
    if inputs.is_empty() {
        return Err(Error::invalid("Bi-LSTM over an empty sequence"));
    }
    let (fwd, final_forward) = lstm_direction(tape, inputs, forward, false)?;
    let (bwd, final_backward) = lstm_direction(tape, inputs, backward, true)?;
    let outputs = fwd
        .into_iter()
        .zip(bwd)
        .map(|(f, b)| tape.concat(f, b, 0))
        .collect::<Result<_>>()?;
    Ok(BiLstmOutput {
        outputs,
        final_forward,
        final_backward,
    })
}

/// Additive attention pooling: returns `(α, c = Σ α_i o_i)`.
pub fn local_attention(tape: &mut Tape, outputs: &[Var], p: AttentionVars) -> Result<(Var, Var)> {
    if outputs.is_empty() {
        return Err(Error::invalid("attention over an empty sequence"));
    }
    let mut scores = Vec::with_capacity(outputs.len());
    for &o in outputs {
        let u = tape.matmul(p.weight, o)?;
        let u = tape.add(u, p.bias)?;
        let u = tape.tanh(u);
        scores.push(tape.dot(u, p.context)?);
    }
    let scores = tape.stack(&scores)?;
    let alpha = tape.softmax(scores)?;
    let rows = tape.stack(outputs)?;
    let context = tape.matmul(alpha, rows)?;
    Ok((alpha, context))
}

/// A sense embedding is the mean of its sememe embeddings.
pub fn sense_embed(tape: &mut Tape, sememe_rows: &[Var]) -> Result<Var> {
    tape.mean(sememe_rows)
}

/// Soft selection over a word's senses conditioned on its context vector.
///
/// `score_j = tanh(W_x o)ᵀ tanh(W_y s_j)`, `β = softmax(score)`, `t = Σ β_j s_j`.
pub fn match_senses(
    tape: &mut Tape,
    context: Var,
    senses: &[Var],
    match_word: Var,
    match_sense: Var,
) -> Result<(Var, Var)> {
    if senses.is_empty() {
        return Err(Error::invalid("matching over zero senses"));
    }
    let q = tape.matmul(match_word, context)?;
    let q = tape.tanh(q);
    let mut scores = Vec::with_capacity(senses.len());
    for &s in senses {
        let k = tape.matmul(match_sense, s)?;
        let k = tape.tanh(k);
        scores.push(tape.dot(q, k)?);
    }
    let scores = tape.stack(&scores)?;
    let beta = tape.softmax(scores)?;
    let rows = tape.stack(senses)?;
    let t = tape.matmul(beta, rows)?;
    Ok((beta, t))
}

/// Uniform sense pooling: `t = (1/n) Σ_j s_j`.
pub fn average_senses(tape: &mut Tape, senses: &[Var]) -> Result<Var> {
    tape.mean(senses)
}

/// Mean of a sequence of vectors.
pub fn mean_pool(tape: &mut Tape, outputs: &[Var]) -> Result<Var> {
    tape.mean(outputs)
}

/// `Wᵂ c^w + Wˢ c^s + b`; either part may be absent.
pub fn classifier_logits(
    tape: &mut Tape,
    word_part: Option<(Var, Var)>,
    sememe_part: Option<(Var, Var)>,
    bias: Var,
) -> Result<Var> {
    let mut logits = bias;
    for (weight, context) in [word_part, sememe_part].into_iter().flatten() {
        let z = tape.matmul(weight, context)?;
        logits = tape.add(z, logits)?;
    }
    Ok(logits)
}
