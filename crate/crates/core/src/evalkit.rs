//! Metric quality and bias measurements: segment-level Kendall's tau
//! against human pairs, argmax n-best reranking, corpus length ratio and
//! a smoothed sentence-BLEU baseline.

use serde::Serialize;

use crate::corpus_io::{JudgedPair, MetricModel, NBestEntry};
use crate::features::{ngram_counts, tokenize};
use crate::ranker;
use crate::{Error, Result};

/// Corpus-level bias diagnostics for one model.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    /// `100 · total hypothesis tokens / total reference tokens` over the
    /// reranked selections.
    pub length_ratio_pct: f64,
    /// Pairwise agreement with human judgments; absent when no human
    /// pairs were provided.
    pub kendall_tau: Option<f64>,
    pub n_pairs: usize,
    /// Per-feature weights in standardized feature space.
    pub weight_summary: Vec<FeatureWeight>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureWeight {
    pub name: String,
    pub weight: f64,
}

/// One reranking selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub segment_id: usize,
    pub hypothesis: String,
    pub decoder_rank: usize,
}

/// Segment-level Kendall's tau: `(concordant − discordant) / (concordant +
/// discordant)`, where a pair is concordant iff the model scores the
/// human-preferred hypothesis strictly higher. Metric ties count as
/// discordant, so a constant metric scores −1.
pub fn kendall_tau(model: &MetricModel, human_pairs: &[JudgedPair]) -> Result<f64> {
    if human_pairs.is_empty() {
        return Err(Error::Argument(
            "kendall_tau requires at least one pair".to_string(),
        ));
    }
    let mut concordant = 0usize;
    for pair in human_pairs {
        let sb = ranker::score(model, &pair.better, &pair.reference)?;
        let sw = ranker::score(model, &pair.worse, &pair.reference)?;
        if sb > sw {
            concordant += 1;
        }
    }
    let discordant = human_pairs.len() - concordant;
    Ok((concordant as f64 - discordant as f64) / human_pairs.len() as f64)
}

/// Selects the highest-scoring hypothesis per segment; score ties are
/// broken by the lowest decoder rank.
pub fn rerank(
    model: &MetricModel,
    nbest: &[NBestEntry],
    refs: &[String],
) -> Result<Vec<Selected>> {
    let mut selections: Vec<Selected> = Vec::new();
    let mut idx = 0;
    while idx < nbest.len() {
        let segment_id = nbest[idx].segment_id;
        let reference = match refs.get(segment_id) {
            Some(r) if !r.is_empty() => r.as_str(),
            _ => {
                return Err(Error::Data(format!(
                    "no reference for segment {segment_id}"
                )))
            }
        };
        let mut best: Option<(f64, &NBestEntry)> = None;
        while idx < nbest.len() && nbest[idx].segment_id == segment_id {
            let entry = &nbest[idx];
            let s = ranker::score(model, &entry.hypothesis, reference)?;
            // strictly-greater keeps the lowest decoder rank on ties
            match best {
                Some((best_score, _)) if s <= best_score => {}
                _ => best = Some((s, entry)),
            }
            idx += 1;
        }
        let (_, entry) = best.expect("segment has at least one entry");
        selections.push(Selected {
            segment_id: entry.segment_id,
            hypothesis: entry.hypothesis.clone(),
            decoder_rank: entry.decoder_rank,
        });
    }
    Ok(selections)
}

/// `100 · Σ|h| / Σ|r|` in tokens over aligned corpora. 100 means
/// length-matched output.
pub fn length_ratio(selected: &[String], refs: &[String]) -> Result<f64> {
    let hyp_tokens: usize = selected.iter().map(|h| tokenize(h).tokens.len()).sum();
    let ref_tokens: usize = refs.iter().map(|r| tokenize(r).tokens.len()).sum();
    if ref_tokens == 0 {
        return Err(Error::Argument(
            "reference corpus has zero tokens".to_string(),
        ));
    }
    Ok(100.0 * hyp_tokens as f64 / ref_tokens as f64)
}

/// Smoothed sentence-level BLEU: geometric mean of word n-gram precisions
/// for n = 1..4 with add-one smoothing on orders ≥ 2, times the brevity
/// penalty `exp(min(0, 1 − |r|/|h|))`. An empty hypothesis scores 0.
pub fn sentence_bleu(hypothesis: &str, reference: &str) -> f64 {
    let hyp = tokenize(hypothesis);
    let rf = tokenize(reference);
    debug_assert!(!rf.tokens.is_empty(), "reference must be non-empty");
    if hyp.tokens.is_empty() {
        return 0.0;
    }
    let mut log_precision_sum = 0.0;
    for n in 1..=4usize {
        let hyp_counts = ngram_counts(&hyp.tokens, n);
        let ref_counts = ngram_counts(&rf.tokens, n);
        let total: usize = hyp_counts.values().sum();
        let matched: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            if total == 0 {
                0.0
            } else {
                matched as f64 / total as f64
            }
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_precision_sum += p.ln();
    }
    let brevity = (1.0 - rf.tokens.len() as f64 / hyp.tokens.len() as f64).min(0.0);
    (log_precision_sum / 4.0 + brevity).exp()
}

/// Assembles the bias diagnostics for a model over an n-best corpus, with
/// tau against human pairs when provided.
pub fn bias_report(
    model: &MetricModel,
    nbest: &[NBestEntry],
    refs: &[String],
    human_pairs: Option<&[JudgedPair]>,
) -> Result<BiasReport> {
    let selections = rerank(model, nbest, refs)?;
    let selected: Vec<String> = selections.iter().map(|s| s.hypothesis.clone()).collect();
    let covered: Vec<String> = selections
        .iter()
        .map(|s| refs[s.segment_id].clone())
        .collect();
    let length_ratio_pct = length_ratio(&selected, &covered)?;
    let (tau, n_pairs) = match human_pairs {
        Some(pairs) if !pairs.is_empty() => (Some(kendall_tau(model, pairs)?), pairs.len()),
        _ => (None, 0),
    };
    let weight_summary = model
        .feature_names
        .iter()
        .zip(model.weights.iter())
        .map(|(name, &weight)| FeatureWeight {
            name: name.clone(),
            weight,
        })
        .collect();
    Ok(BiasReport {
        length_ratio_pct,
        kendall_tau: tau,
        n_pairs,
        weight_summary,
    })
}
