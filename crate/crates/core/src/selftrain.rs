//! Self-training on unlabeled n-best lists.
//!
//! An initial metric, trained on human judgments, labels sampled pairs of
//! n-best hypotheses; the metric is then retrained on these pseudo-labels
//! with standardization refitted on the pseudo corpus. This adapts the
//! metric to the feature distribution of diverse decoder output, which is
//! where learned biases such as length preference get corrected.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus_io::{JudgedPair, MetricModel, NBestEntry, SourceTag};
use crate::ranker::{self, TrainConfig};
use crate::{Error, Result};

/// Pseudo-labeling and retraining configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainConfig {
    /// Pairs to sample per segment, capped at C(k, 2) distinct hypotheses.
    pub pairs_per_segment: usize,
    /// Tuples whose score difference is within this margin are discarded.
    pub score_margin: f64,
    /// Number of label-retrain rounds.
    pub rounds: usize,
    /// Mix the human-labeled pairs into each retraining corpus.
    pub mix_human: bool,
    pub seed: u64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            pairs_per_segment: 10,
            score_margin: 0.0,
            rounds: 1,
            mix_human: false,
            seed: 0,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_segment == 0 {
            return Err(Error::Argument("pairs_per_segment must be >= 1".to_string()));
        }
        if self.rounds == 0 {
            return Err(Error::Argument("rounds must be >= 1".to_string()));
        }
        if self.score_margin < 0.0 {
            return Err(Error::Argument("score_margin must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// An unordered candidate pair drawn from one segment's n-best list.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTuple {
    pub segment_id: usize,
    pub reference: String,
    pub hyp_a: String,
    pub hyp_b: String,
}

/// Where a pseudo corpus came from.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub model_fingerprint: String,
    pub seed: u64,
    pub pairs_per_segment: usize,
    pub score_margin: f64,
}

/// Pseudo-labeled training pairs. Every pair satisfies
/// `score(model, better, ref) − score(model, worse, ref) > score_margin`
/// for the labeling model recorded in the provenance.
#[derive(Debug, Clone)]
pub struct PseudoCorpus {
    pub pairs: Vec<JudgedPair>,
    /// Tuples discarded because the score difference was within the margin.
    pub n_discarded: usize,
    pub provenance: Provenance,
}

/// Summary of one self-training round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub tuples_sampled: usize,
    pub ties_discarded: usize,
    pub pseudo_pairs: usize,
    pub training_pairs: usize,
    /// Fraction of pseudo-labels the retrained model agrees with.
    pub label_agreement: f64,
    /// L2 distance between this round's weights and the previous round's.
    pub weight_l2_delta: f64,
    pub final_loss: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Deterministic per-segment random stream, independent of segment
/// iteration order.
pub fn segment_rng(seed: u64, segment_id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(segment_id as u64)))
}

fn reference_for<'a>(refs: &'a [String], segment_id: usize) -> Result<&'a str> {
    match refs.get(segment_id) {
        Some(r) if !r.is_empty() => Ok(r),
        _ => Err(Error::Data(format!(
            "no reference for segment {segment_id}"
        ))),
    }
}

/// Samples up to `pairs_per_segment` unordered hypothesis pairs per segment,
/// uniformly without replacement from the distinct hypotheses. Segments with
/// fewer than two distinct hypotheses yield nothing.
pub fn sample_pairs(
    nbest: &[NBestEntry],
    refs: &[String],
    cfg: &SelfTrainConfig,
) -> Result<Vec<SampledTuple>> {
    cfg.validate()?;
    let mut tuples = Vec::new();
    let mut idx = 0;
    while idx < nbest.len() {
        let segment_id = nbest[idx].segment_id;
        let mut distinct: Vec<&str> = Vec::new();
        while idx < nbest.len() && nbest[idx].segment_id == segment_id {
            let hyp = nbest[idx].hypothesis.as_str();
            if !distinct.contains(&hyp) {
                distinct.push(hyp);
            }
            idx += 1;
        }
        let reference = reference_for(refs, segment_id)?;
        let k = distinct.len();
        if k < 2 {
            continue;
        }
        let mut all_pairs: Vec<(usize, usize)> = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in (a + 1)..k {
                all_pairs.push((a, b));
            }
        }
        let mut rng = segment_rng(cfg.seed, segment_id);
        all_pairs.shuffle(&mut rng);
        for &(a, b) in all_pairs.iter().take(cfg.pairs_per_segment) {
            tuples.push(SampledTuple {
                segment_id,
                reference: reference.to_string(),
                hyp_a: distinct[a].to_string(),
                hyp_b: distinct[b].to_string(),
            });
        }
    }
    Ok(tuples)
}

/// Labels candidate tuples with the model: the higher-scoring hypothesis
/// becomes `better`; tuples within the score margin are discarded.
pub fn pseudo_label(
    model: &MetricModel,
    candidates: &[SampledTuple],
    cfg: &SelfTrainConfig,
) -> Result<PseudoCorpus> {
    cfg.validate()?;
    model.validate()?;
    let mut pairs = Vec::new();
    let mut n_discarded = 0;
    for tuple in candidates {
        let score_a = ranker::score(model, &tuple.hyp_a, &tuple.reference)?;
        let score_b = ranker::score(model, &tuple.hyp_b, &tuple.reference)?;
        if (score_a - score_b).abs() <= cfg.score_margin {
            n_discarded += 1;
            continue;
        }
        let (better, worse) = if score_a > score_b {
            (&tuple.hyp_a, &tuple.hyp_b)
        } else {
            (&tuple.hyp_b, &tuple.hyp_a)
        };
        pairs.push(JudgedPair::new(
            tuple.segment_id,
            &tuple.reference,
            better,
            worse,
            SourceTag::Pseudo,
        )?);
    }
    Ok(PseudoCorpus {
        pairs,
        n_discarded,
        provenance: Provenance {
            model_fingerprint: model.fingerprint(),
            seed: cfg.seed,
            pairs_per_segment: cfg.pairs_per_segment,
            score_margin: cfg.score_margin,
        },
    })
}

fn agreement(model: &MetricModel, pairs: &[JudgedPair]) -> Result<f64> {
    let mut agree = 0usize;
    for pair in pairs {
        let sb = ranker::score(model, &pair.better, &pair.reference)?;
        let sw = ranker::score(model, &pair.worse, &pair.reference)?;
        if sb > sw {
            agree += 1;
        }
    }
    Ok(agree as f64 / pairs.len() as f64)
}

/// Runs `rounds` label-retrain iterations starting from `initial` and
/// returns the adapted model plus a per-round report. Each round samples
/// pairs with a round-specific stream, labels them with the previous
/// round's model and retrains from scratch with standardization refitted
/// on the new corpus.
pub fn self_train(
    initial: &MetricModel,
    nbest: &[NBestEntry],
    refs: &[String],
    human_pairs: Option<&[JudgedPair]>,
    cfg: &SelfTrainConfig,
    train_cfg: &TrainConfig,
) -> Result<(MetricModel, Vec<RoundReport>)> {
    cfg.validate()?;
    train_cfg.validate()?;
    if cfg.mix_human && human_pairs.is_none() {
        return Err(Error::Argument(
            "mix_human requires a human pair corpus".to_string(),
        ));
    }
    let mut model = initial.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let round_cfg = SelfTrainConfig {
            seed: splitmix64(cfg.seed ^ (round as u64)),
            ..cfg.clone()
        };
        let tuples = sample_pairs(nbest, refs, &round_cfg)?;
        let pseudo = pseudo_label(&model, &tuples, &round_cfg)?;
        if pseudo.pairs.is_empty() {
            return Err(Error::Pipeline(format!(
                "round {round}: pseudo corpus is empty after filtering \
                 ({} tuples sampled, {} discarded); lower the margin or \
                 provide more n-best data",
                tuples.len(),
                pseudo.n_discarded
            )));
        }
        let mut corpus = pseudo.pairs.clone();
        if cfg.mix_human {
            corpus.extend(human_pairs.unwrap().iter().cloned());
        }
        let (new_model, summary) = ranker::train(&corpus, train_cfg)?;
        let label_agreement = agreement(&new_model, &pseudo.pairs)?;
        let weight_l2_delta = model
            .weights
            .iter()
            .zip(new_model.weights.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        reports.push(RoundReport {
            round,
            tuples_sampled: tuples.len(),
            ties_discarded: pseudo.n_discarded,
            pseudo_pairs: pseudo.pairs.len(),
            training_pairs: corpus.len(),
            label_agreement,
            weight_l2_delta,
            final_loss: summary.final_loss,
        });
        model = new_model;
    }
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::collections::HashSet;

    use crate::corpus_io::{Standardization, MODEL_VERSION};
    use crate::features::{self, FEATURE_COUNT, LEN_RATIO_INDEX};

    fn entry(segment_id: usize, rank: usize, hyp: &str) -> NBestEntry {
        NBestEntry {
            segment_id,
            hypothesis: hyp.to_string(),
            decoder_rank: rank,
        }
    }

    fn length_model() -> MetricModel {
        let mut weights = vec![0.0; FEATURE_COUNT];
        weights[LEN_RATIO_INDEX] = 1.0;
        MetricModel {
            version: MODEL_VERSION,
            feature_names: features::feature_names(),
            weights,
            standardization: Standardization {
                mean: vec![0.0; FEATURE_COUNT],
                std: vec![1.0; FEATURE_COUNT],
            },
            config: BTreeMap::new(),
        }
    }

    #[test]
    fn two_hypotheses_give_one_pair() {
        let nbest = vec![entry(0, 0, "a"), entry(0, 1, "b")];
        let refs = vec!["r".to_string()];
        let cfg = SelfTrainConfig::default();
        let tuples = sample_pairs(&nbest, &refs, &cfg).unwrap();
        assert_eq!(tuples.len(), 1);
    }

    #[test]
    fn single_distinct_hypothesis_gives_nothing() {
        let nbest = vec![entry(0, 0, "a"), entry(0, 1, "a")];
        let refs = vec!["r".to_string()];
        let tuples = sample_pairs(&nbest, &refs, &SelfTrainConfig::default()).unwrap();
        assert!(tuples.is_empty());
    }

    #[test]
    fn five_hypotheses_yield_all_ten_distinct_pairs() {
        let nbest: Vec<NBestEntry> = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(i, h)| entry(0, i, h))
            .collect();
        let refs = vec!["r".to_string()];
        let tuples = sample_pairs(&nbest, &refs, &SelfTrainConfig::default()).unwrap();
        assert_eq!(tuples.len(), 10);
        let mut seen = HashSet::new();
        for t in &tuples {
            let mut key = [t.hyp_a.clone(), t.hyp_b.clone()];
            key.sort();
            assert!(seen.insert(key), "duplicate pair sampled");
        }
        // full pair set over 5 hypotheses
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn missing_reference_names_segment() {
        let nbest = vec![entry(7, 0, "a"), entry(7, 1, "b")];
        let err = sample_pairs(&nbest, &[], &SelfTrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("segment 7"), "{err}");
    }

    #[test]
    fn sampling_is_reproducible_and_seed_sensitive() {
        let nbest: Vec<NBestEntry> = (0..8).map(|i| entry(0, i, &format!("h{i}"))).collect();
        let refs = vec!["r".to_string()];
        let cfg = SelfTrainConfig {
            pairs_per_segment: 3,
            ..Default::default()
        };
        let t1 = sample_pairs(&nbest, &refs, &cfg).unwrap();
        let t2 = sample_pairs(&nbest, &refs, &cfg).unwrap();
        assert_eq!(t1, t2);
        let other = SelfTrainConfig { seed: 99, ..cfg };
        let t3 = sample_pairs(&nbest, &refs, &other).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn sampling_is_uniform_over_pairs() {
        // 4 hypotheses, 1 pair per segment: each of the 6 pairs should
        // appear with frequency 1/6 ± 0.02 over 10_000 seeds
        let nbest: Vec<NBestEntry> = ["a", "b", "c", "d"]
            .iter()
            .enumerate()
            .map(|(i, h)| entry(0, i, h))
            .collect();
        let refs = vec!["r".to_string()];
        let mut counts: std::collections::HashMap<[String; 2], usize> = Default::default();
        for seed in 0..10_000u64 {
            let cfg = SelfTrainConfig {
                pairs_per_segment: 1,
                seed,
                ..Default::default()
            };
            let tuples = sample_pairs(&nbest, &refs, &cfg).unwrap();
            assert_eq!(tuples.len(), 1);
            let mut key = [tuples[0].hyp_a.clone(), tuples[0].hyp_b.clone()];
            key.sort();
            *counts.entry(key).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (pair, count) in counts {
            let freq = count as f64 / 10_000.0;
            assert!(
                (freq - 1.0 / 6.0).abs() < 0.02,
                "pair {pair:?} frequency {freq}"
            );
        }
    }

    #[test]
    fn pseudo_label_picks_higher_score_and_discards_ties() {
        let model = length_model();
        let tuples = vec![
            SampledTuple {
                segment_id: 0,
                reference: "r r".to_string(),
                hyp_a: "a b c".to_string(),
                hyp_b: "a".to_string(),
            },
            SampledTuple {
                segment_id: 0,
                reference: "r r".to_string(),
                hyp_a: "x y".to_string(),
                hyp_b: "p q".to_string(),
            },
        ];
        let cfg = SelfTrainConfig::default();
        let corpus = pseudo_label(&model, &tuples, &cfg).unwrap();
        assert_eq!(corpus.pairs.len(), 1);
        assert_eq!(corpus.pairs[0].better, "a b c");
        assert_eq!(corpus.pairs[0].source_tag, SourceTag::Pseudo);
        assert_eq!(corpus.n_discarded, 1);
    }

    #[test]
    fn pseudo_label_margin_thresholds() {
        let model = length_model();
        let tuple = SampledTuple {
            segment_id: 0,
            reference: "r r r r".to_string(),
            // length ratios 3/4 vs 2/4: score difference 0.25
            hyp_a: "a b c".to_string(),
            hyp_b: "a b".to_string(),
        };
        let wide = SelfTrainConfig {
            score_margin: 0.5,
            ..Default::default()
        };
        assert!(pseudo_label(&model, &[tuple.clone()], &wide)
            .unwrap()
            .pairs
            .is_empty());
        let narrow = SelfTrainConfig {
            score_margin: 0.2,
            ..Default::default()
        };
        assert_eq!(pseudo_label(&model, &[tuple], &narrow).unwrap().pairs.len(), 1);
    }

    #[test]
    fn pseudo_pairs_satisfy_provenance_invariant() {
        let model = length_model();
        let nbest: Vec<NBestEntry> = (1..6)
            .map(|len| {
                let hyp = vec!["w"; len].join(" ");
                entry(0, len - 1, &hyp)
            })
            .collect();
        let refs = vec!["r r r".to_string()];
        let cfg = SelfTrainConfig::default();
        let tuples = sample_pairs(&nbest, &refs, &cfg).unwrap();
        let corpus = pseudo_label(&model, &tuples, &cfg).unwrap();
        assert!(!corpus.pairs.is_empty());
        for pair in &corpus.pairs {
            let sb = ranker::score(&model, &pair.better, &pair.reference).unwrap();
            let sw = ranker::score(&model, &pair.worse, &pair.reference).unwrap();
            assert!(sb - sw > cfg.score_margin);
        }
    }

    #[test]
    fn self_train_fails_on_singleton_segments() {
        let model = length_model();
        let nbest = vec![entry(0, 0, "only"), entry(1, 0, "one")];
        let refs = vec!["r".to_string(), "r".to_string()];
        let err = self_train(
            &model,
            &nbest,
            &refs,
            None,
            &SelfTrainConfig::default(),
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Pipeline(_)), "{err}");
    }

    #[test]
    fn mix_human_requires_human_pairs() {
        let model = length_model();
        let cfg = SelfTrainConfig {
            mix_human: true,
            ..Default::default()
        };
        let err = self_train(&model, &[], &[], None, &cfg, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn mix_human_still_requires_pseudo_pairs() {
        let model = length_model();
        let human = vec![JudgedPair::new(0, "r", "a b", "a", SourceTag::Human).unwrap()];
        let cfg = SelfTrainConfig {
            mix_human: true,
            ..Default::default()
        };
        // single-hypothesis n-best: no pseudo pairs can be sampled
        let nbest = vec![entry(0, 0, "only")];
        let refs = vec!["r".to_string()];
        let err = self_train(
            &model,
            &nbest,
            &refs,
            Some(&human),
            &cfg,
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Pipeline(_)), "{err}");
    }
}
