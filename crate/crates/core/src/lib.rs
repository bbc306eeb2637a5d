//! A trainable sentence-level machine translation evaluation metric with a
//! self-training pipeline that adapts the metric from narrow human-judged
//! translations to diverse n-best-list translations, removing learned biases
//! such as length bias.
//!
//! The crate is organized around the workflow:
//!
//! 1. [`features`] maps a (hypothesis, reference) pair to a fixed 26-dim
//!    vector of char/word n-gram precision/recall/F scores plus two length
//!    features.
//! 2. [`ranker`] trains a linear scorer on better/worse pairs with a
//!    pairwise logistic loss and scores hypotheses with a trained model.
//! 3. [`selftrain`] samples hypothesis pairs from unlabeled n-best lists,
//!    labels them with the current model and retrains on the pseudo-labels.
//! 4. [`evalkit`] measures metric quality and bias: Kendall's tau against
//!    human pairs, argmax reranking and corpus length ratio, plus a smoothed
//!    sentence-BLEU baseline.
//! 5. [`synth`] generates synthetic corpora that exhibit the length bias
//!    by construction, so the debiasing effect can be demonstrated end to end.
//! 6. [`corpus_io`] parses and serializes all external file formats.

pub mod corpus_io;
pub mod evalkit;
pub mod features;
pub mod ranker;
pub mod selftrain;
pub mod synth;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input at a specific line of a text stream.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Input violated a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// Caller passed an argument outside the operation's precondition.
    #[error("argument error: {0}")]
    Argument(String),
    /// Referenced data is missing or inconsistent across corpora.
    #[error("data error: {0}")]
    Data(String),
    /// A model is incompatible with the data or code at hand.
    #[error("incompatibility error: {0}")]
    Incompatible(String),
    /// Training produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The self-training pipeline could not produce a usable corpus.
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
