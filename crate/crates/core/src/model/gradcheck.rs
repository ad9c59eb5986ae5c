use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dropout, SwmConfig, SwmModel, SwmParams, Variant};
use crate::autodiff::{finite_diff_check, GradReport};
use crate::lexicon::EncodedSentence;
use crate::Result;

/// A small random model and sentence for gradient checking: all dimensions
/// `dim`, `len` words, each word with `senses` senses of one or two sememes.
pub fn tiny_instance(seed: u64, dim: usize, len: usize, senses: usize) -> (SwmModel, EncodedSentence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = SwmConfig::new(8, 10).with_dims(dim);
    config.dropout = 0.0;
    let mut params = SwmParams::zeros(&config);
    // wider than the training initializer so that every gradient is well above round-off
    for (_, t) in params.named_mut() {
        for x in t.data_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    let sentence = EncodedSentence {
        words: (0..len).map(|_| rng.gen_range(2..config.word_vocab_size)).collect(),
        senses: (0..len)
            .map(|_| {
                (0..senses)
                    .map(|_| {
                        let m = rng.gen_range(1..=2);
                        let mut s: Vec<usize> = Vec::new();
                        while s.len() < m {
                            let id = rng.gen_range(2..config.sememe_vocab_size);
                            if !s.contains(&id) {
                                s.push(id);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect(),
    };
    (SwmModel { config, params }, sentence)
}

/// Analytic parameter gradients of the cross-entropy loss (dropout off).
pub fn loss_gradients(
    model: &SwmModel,
    sentence: &EncodedSentence,
    label: usize,
    variant: Variant,
) -> Result<(f64, SwmParams)> {
    let mut grads = model.params.zeros_like();
    let loss = model.loss_and_grad(sentence, label, variant, &mut Dropout::Off, &mut grads, 1.0)?;
    Ok((loss, grads))
}

/// Compares backpropagated gradients of every parameter with central differences.
pub fn gradient_check(
    model: &SwmModel,
    sentence: &EncodedSentence,
    label: usize,
    variant: Variant,
    h: f64,
    tol: f64,
) -> Result<GradReport> {
    let (_, analytic) = loss_gradients(model, sentence, label, variant)?;
    let config = model.config.clone();
    let mut params = model.params.clone();
    finite_diff_check(
        &mut params,
        &analytic,
        |p| {
            let m = SwmModel {
                config: config.clone(),
                params: p.clone(),
            };
            m.loss(sentence, label, variant)
        },
        h,
        tol,
    )
}
