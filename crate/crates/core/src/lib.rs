//! Sememe-word matching network (SWM-NN) for detecting whether a sentence is
//! semantically rational, with the data-perturbation pipeline, an
//! interpolated Kneser-Ney baseline and ablation variants.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: a small tape-based reverse-mode engine over `f64` arrays.
//! * [`lexicon`]: HowNet-shaped word → sense → sememe knowledge base and vocabularies.
//! * [`model`]: the network graph and its five ablations, plus checkpoints.
//! * [`trainer`]: Adam, clipping, validation-driven model selection.
//! * [`datagen`]: POS-constrained perturbations that create negative examples.
//! * [`ngram`]: interpolated Kneser-Ney language model and threshold classifier.
//! * [`pipeline`]: vocabularies, encoding and saved model directories.
//! * [`synthetic`]: a toy language with sememe-governed selectional restrictions.
//! * [`cli`]: the `swmnn` command line.

pub mod autodiff;
pub mod cli;
pub mod datagen;
mod error;
pub mod lexicon;
pub mod model;
pub mod ngram;
pub mod pipeline;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
