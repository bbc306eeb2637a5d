//! Sentence-pair feature extraction.
//!
//! A (hypothesis, reference) pair is mapped to a fixed 26-dim vector:
//! character n-gram precision/recall/F for n = 1..6 (18 values, computed on
//! the space-joined character sequence so n-grams cross token boundaries),
//! word unigram and bigram P/R/F (6 values), the token length ratio
//! `|h| / |r|` and the symmetric length `min(|h|,|r|) / max(|h|,|r|)`.
//!
//! All operations are pure and deterministic.

use std::collections::HashMap;
use std::hash::Hash;

use crate::{Error, Result};

/// Number of features produced by [`featurize`].
pub const FEATURE_COUNT: usize = 26;

/// Maximum character n-gram order.
pub const CHAR_ORDERS: usize = 6;

/// Index of the token length-ratio feature within the vector.
pub const LEN_RATIO_INDEX: usize = 24;

/// Index of the symmetric length feature within the vector.
pub const LEN_SYM_INDEX: usize = 25;

/// Canonical feature names, in vector order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for n in 1..=CHAR_ORDERS {
        for part in ["prec", "rec", "f"] {
            names.push(format!("char{n}_{part}"));
        }
    }
    for n in 1..=2 {
        for part in ["prec", "rec", "f"] {
            names.push(format!("word{n}_{part}"));
        }
    }
    names.push("len_ratio".to_string());
    names.push("len_sym".to_string());
    names
}

/// A sentence split into whitespace-free tokens plus the character sequence
/// obtained by joining the tokens with single spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    pub char_seq: String,
}

impl TokenizedSentence {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits on Unicode whitespace. Empty input yields an empty token list.
pub fn tokenize(text: &str) -> TokenizedSentence {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let char_seq = tokens.join(" ");
    TokenizedSentence { tokens, char_seq }
}

/// A fixed-length feature vector, see the module docs for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Multiset of n-grams with multiplicities. All contiguous subsequences of
/// length `n`; empty when the sequence is shorter than `n`.
///
/// # Panics
/// Panics on `n == 0` (argument error; there is no 0-gram).
pub fn ngram_counts<T: Eq + Hash + Clone>(seq: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    assert!(n >= 1, "n-gram order must be >= 1");
    let mut counts = HashMap::new();
    if seq.len() < n {
        return counts;
    }
    for window in seq.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

/// Clipped (multiset-intersection) precision and recall.
///
/// `match = Σ_g min(hyp(g), ref(g))`; precision is `match / |hyp|` and
/// recall is `match / |ref|`, with an empty side yielding 0.
pub fn clipped_pr<T: Eq + Hash>(
    hyp_counts: &HashMap<Vec<T>, usize>,
    ref_counts: &HashMap<Vec<T>, usize>,
) -> (f64, f64) {
    let hyp_total: usize = hyp_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    let matched: usize = hyp_counts
        .iter()
        .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let precision = if hyp_total == 0 {
        0.0
    } else {
        matched as f64 / hyp_total as f64
    };
    let recall = if ref_total == 0 {
        0.0
    } else {
        matched as f64 / ref_total as f64
    };
    (precision, recall)
}

/// `2PR / (P + R)`, or 0 when `P + R = 0`.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Computes the 26 features for a hypothesis against a non-empty reference.
///
/// An empty hypothesis is legal and yields all-zero P/R/F and length
/// features; an empty reference is an argument error (references are
/// curated data).
pub fn featurize(
    hypothesis: &TokenizedSentence,
    reference: &TokenizedSentence,
) -> Result<FeatureVector> {
    if reference.char_seq.is_empty() {
        return Err(Error::Argument("reference must be non-empty".to_string()));
    }

    let mut values = [0.0; FEATURE_COUNT];
    let hyp_chars: Vec<char> = hypothesis.char_seq.chars().collect();
    let ref_chars: Vec<char> = reference.char_seq.chars().collect();

    let mut slot = 0;
    for n in 1..=CHAR_ORDERS {
        let hyp_counts = ngram_counts(&hyp_chars, n);
        let ref_counts = ngram_counts(&ref_chars, n);
        let (p, r) = clipped_pr(&hyp_counts, &ref_counts);
        values[slot] = p;
        values[slot + 1] = r;
        values[slot + 2] = f_score(p, r);
        slot += 3;
    }
    for n in 1..=2 {
        let hyp_counts = ngram_counts(&hypothesis.tokens, n);
        let ref_counts = ngram_counts(&reference.tokens, n);
        let (p, r) = clipped_pr(&hyp_counts, &ref_counts);
        values[slot] = p;
        values[slot + 1] = r;
        values[slot + 2] = f_score(p, r);
        slot += 3;
    }

    let hyp_len = hypothesis.tokens.len() as f64;
    let ref_len = reference.tokens.len() as f64;
    values[LEN_RATIO_INDEX] = if hyp_len == 0.0 { 0.0 } else { hyp_len / ref_len };
    values[LEN_SYM_INDEX] = if hyp_len == 0.0 {
        0.0
    } else {
        hyp_len.min(ref_len) / hyp_len.max(ref_len)
    };

    Ok(FeatureVector { values })
}
