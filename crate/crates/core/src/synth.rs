//! Synthetic scenario generation.
//!
//! Produces a corpus that exhibits the length bias by construction: a
//! narrow band of human-judged pairs where the better hypothesis tends to
//! be the longer one, and diverse n-best lists where hypothesis length is
//! decorrelated from the ground-truth quality. The scenario is written in
//! the same file formats the main pipeline reads, so it flows through
//! training, self-training and evaluation unchanged.

use rand::Rng;

use crate::corpus_io::{JudgedPair, NBestEntry, SourceTag};
use crate::features::{clipped_pr, f_score, ngram_counts, tokenize};
use crate::selftrain::segment_rng;
use crate::{Error, Result};

const STREAM_REF: u64 = 0x5245_4653; // "REFS"
const STREAM_HUMAN: u64 = 0x4855_4d41; // "HUMA"
const STREAM_NBEST: u64 = 0x4e42_5354; // "NBST"

/// Retries per segment before generation gives up on an invariant.
const SEGMENT_RETRY_BUDGET: usize = 100;

/// Retries for the corpus-level length/quality decorrelation bound.
const CORPUS_RETRY_BUDGET: usize = 20;

/// Knobs for the generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub vocab_size: usize,
    pub n_segments: usize,
    pub ref_len_min: usize,
    pub ref_len_max: usize,
    pub nbest_size: usize,
    /// Edit rate of the narrow human-judged band.
    pub sota_noise: f64,
    /// Maximum edit rate of the diverse n-best hypotheses.
    pub diverse_noise: f64,
    /// Probability that the better hypothesis of a human pair is forced to
    /// be the longer one.
    pub length_quality_corr: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            vocab_size: 50,
            n_segments: 300,
            ref_len_min: 8,
            ref_len_max: 15,
            nbest_size: 20,
            sota_noise: 0.1,
            diverse_noise: 0.6,
            length_quality_corr: 0.9,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.n_segments == 0 || self.nbest_size == 0 {
            return Err(Error::Argument(
                "vocab_size, n_segments and nbest_size must be >= 1".to_string(),
            ));
        }
        if self.ref_len_min == 0 || self.ref_len_min > self.ref_len_max {
            return Err(Error::Argument("bad reference length range".to_string()));
        }
        if !(self.sota_noise > 0.0 && self.sota_noise <= 0.3) {
            return Err(Error::Argument("sota_noise must be in (0, 0.3]".to_string()));
        }
        if !(self.diverse_noise > 0.0 && self.diverse_noise <= 1.0) {
            return Err(Error::Argument("diverse_noise must be in (0, 1]".to_string()));
        }
        if self.sota_noise >= self.diverse_noise {
            return Err(Error::Argument(
                "sota_noise must be below diverse_noise".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.length_quality_corr) {
            return Err(Error::Argument(
                "length_quality_corr must be in [0, 1]".to_string(),
            ));
        }
        Ok(())
    }
}

/// A generated corpus: references, narrow-band human pairs and diverse
/// n-best lists, all over the same segments.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub references: Vec<String>,
    pub human_pairs: Vec<JudgedPair>,
    pub nbest: Vec<NBestEntry>,
}

/// Ground-truth quality: word unigram F1 against the reference. The metric
/// under test never sees this directly, so debiasing is measured against a
/// yardstick the learner does not optimize.
pub fn oracle_quality(hypothesis: &str, reference: &str) -> f64 {
    let hyp = tokenize(hypothesis);
    let rf = tokenize(reference);
    let (p, r) = clipped_pr(&ngram_counts(&hyp.tokens, 1), &ngram_counts(&rf.tokens, 1));
    f_score(p, r)
}

fn random_token<R: Rng>(rng: &mut R, vocab_size: usize) -> String {
    format!("w{}", rng.gen_range(0..vocab_size))
}

fn generate_reference(cfg: &ScenarioConfig, segment_id: usize) -> Vec<String> {
    let mut rng = segment_rng(cfg.seed ^ STREAM_REF, segment_id);
    let len = rng.gen_range(cfg.ref_len_min..=cfg.ref_len_max);
    (0..len).map(|_| random_token(&mut rng, cfg.vocab_size)).collect()
}

fn generate_human_pair(
    cfg: &ScenarioConfig,
    segment_id: usize,
    reference: &[String],
) -> Result<JudgedPair> {
    let mut rng = segment_rng(cfg.seed ^ STREAM_HUMAN, segment_id);
    let reference_text = reference.join(" ");
    let force_longer = rng.gen::<f64>() < cfg.length_quality_corr;
    // Substitution-only corruption keeps the band length-preserving; length
    // differences inside a pair are then explicit single-token indels.
    let substituted = |rate: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
        reference
            .iter()
            .map(|t| {
                if rng.gen::<f64>() < rate {
                    random_token(rng, cfg.vocab_size)
                } else {
                    t.clone()
                }
            })
            .collect()
    };
    for _ in 0..SEGMENT_RETRY_BUDGET {
        // Both sides of a pair drop the same number of tokens, so the pair
        // ordering never depends on it; it only spreads the corpus-level
        // length distribution the way judged outputs vary in verbosity.
        let shared_cuts = rng.gen_range(0..=2usize);
        let cut = |tokens: &mut Vec<String>, n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            for _ in 0..n {
                if tokens.len() > 1 {
                    let pos = rng.gen_range(0..tokens.len());
                    tokens.remove(pos);
                }
            }
        };
        if force_longer {
            // Both sides share one base corruption, placed symmetrically
            // around the reference length: the preferred side gains one
            // filler token, the other loses one content token. The quality
            // gap stays marginal while the length ordering is pronounced —
            // the bias the adaptation step is meant to unlearn.
            let rate = rng.gen::<f64>() * cfg.sota_noise;
            let base = substituted(rate, &mut rng);
            if base.len() < 4 {
                continue;
            }
            let mut longer = base.clone();
            let pos = rng.gen_range(0..=longer.len());
            longer.insert(pos, random_token(&mut rng, cfg.vocab_size));
            let mut shorter = base;
            shorter.remove(rng.gen_range(0..shorter.len()));
            cut(&mut longer, shared_cuts, &mut rng);
            cut(&mut shorter, shared_cuts, &mut rng);
            let better = longer.join(" ");
            let worse = shorter.join(" ");
            let q_better = oracle_quality(&better, &reference_text);
            let q_worse = oracle_quality(&worse, &reference_text);
            if q_better <= q_worse {
                continue;
            }
            return JudgedPair::new(
                segment_id,
                &reference_text,
                &better,
                &worse,
                SourceTag::Human,
            );
        }
        // Unforced pair: quality is decided by substitutions alone, and the
        // same one-token indel split as above is dealt by a fair coin, so
        // whether the better side ends up longer is pure chance.
        let rate_a = rng.gen::<f64>() * cfg.sota_noise;
        let rate_b = rng.gen::<f64>() * cfg.sota_noise;
        let mut hyp_a = substituted(rate_a, &mut rng);
        let mut hyp_b = substituted(rate_b, &mut rng);
        let subs_a = hyp_a.iter().zip(reference).filter(|(h, r)| h != r).count();
        let subs_b = hyp_b.iter().zip(reference).filter(|(h, r)| h != r).count();
        if subs_a == subs_b {
            continue;
        }
        // Build both ways of dealing the indels; keep the draw only when the
        // substitution-decided ordering survives either deal, so the coin
        // below stays independent of which side wins.
        let mut deals = Vec::with_capacity(2);
        for grow_a in [true, false] {
            let (mut a, mut b) = (hyp_a.clone(), hyp_b.clone());
            let (grown, shrunk) = if grow_a { (&mut a, &mut b) } else { (&mut b, &mut a) };
            let pos = rng.gen_range(0..=grown.len());
            grown.insert(pos, random_token(&mut rng, cfg.vocab_size));
            shrunk.remove(rng.gen_range(0..shrunk.len()));
            cut(&mut a, shared_cuts, &mut rng);
            cut(&mut b, shared_cuts, &mut rng);
            let a = a.join(" ");
            let b = b.join(" ");
            let q_a = oracle_quality(&a, &reference_text);
            let q_b = oracle_quality(&b, &reference_text);
            if q_a == q_b || (subs_a < subs_b) != (q_a > q_b) {
                break;
            }
            deals.push(if q_a > q_b { (a, b) } else { (b, a) });
        }
        if deals.len() < 2 {
            continue;
        }
        let (better, worse) = deals.swap_remove(usize::from(rng.gen::<bool>()));
        return JudgedPair::new(segment_id, &reference_text, &better, &worse, SourceTag::Human);
    }
    Err(Error::Data(format!(
        "segment {segment_id}: could not satisfy the human-pair length/quality \
         invariant within {SEGMENT_RETRY_BUDGET} retries"
    )))
}

fn generate_nbest_segment(
    cfg: &ScenarioConfig,
    segment_id: usize,
    reference: &[String],
    attempt: u64,
) -> Vec<NBestEntry> {
    let stream = cfg.seed ^ STREAM_NBEST ^ (attempt << 32);
    let mut rng = segment_rng(stream, segment_id);
    (0..cfg.nbest_size)
        .map(|rank| {
            // Quality and verbosity vary on independent axes: substitutions
            // set the adequacy of an entry, while one or two junk insertions
            // set its length. Every candidate runs a little long — the
            // over-generation habit of the decoder being reranked — but how
            // long says nothing about how good. Sparing a substitution on
            // some of the longest variants cancels the small residual
            // correlation the insertions themselves induce on word-F.
            let rate = cfg.sota_noise + rng.gen::<f64>() * (cfg.diverse_noise - cfg.sota_noise);
            let extra = rng.gen_range(0..=1usize);
            let spare = extra == 1 && rng.gen::<f64>() < 0.3;
            let mut hyp = Vec::new();
            for _ in 0..SEGMENT_RETRY_BUDGET {
                let mut tokens = reference.to_vec();
                let mut sub_pos: Vec<usize> =
                    (0..tokens.len()).filter(|_| rng.gen::<f64>() < rate).collect();
                if spare && !sub_pos.is_empty() {
                    let k = rng.gen_range(0..sub_pos.len());
                    sub_pos.remove(k);
                }
                let edits = sub_pos.len() + 1 + extra;
                for &i in &sub_pos {
                    tokens[i] = random_token(&mut rng, cfg.vocab_size);
                }
                for _ in 0..=extra {
                    let pos = rng.gen_range(0..=tokens.len());
                    tokens.insert(pos, random_token(&mut rng, cfg.vocab_size));
                }
                hyp = tokens;
                // resample the rare draws that leave the reference almost
                // verbatim, so every candidate is a genuine alternative
                if edits >= 2 {
                    break;
                }
            }
            NBestEntry {
                segment_id,
                hypothesis: hyp.join(" "),
                decoder_rank: rank,
            }
        })
        .collect()
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Absolute Pearson correlation between hypothesis/reference length ratio
/// and oracle quality over an n-best corpus.
pub fn nbest_length_quality_corr(nbest: &[NBestEntry], refs: &[String]) -> f64 {
    let mut ratios = Vec::with_capacity(nbest.len());
    let mut qualities = Vec::with_capacity(nbest.len());
    for e in nbest {
        let reference = &refs[e.segment_id];
        let hyp_len = tokenize(&e.hypothesis).tokens.len() as f64;
        let ref_len = tokenize(reference).tokens.len() as f64;
        ratios.push(hyp_len / ref_len);
        qualities.push(oracle_quality(&e.hypothesis, reference));
    }
    pearson(&ratios, &qualities).abs()
}

/// Generates a scenario. Deterministic under the seed: per-segment streams
/// make the output independent of iteration order. Scenario invariants are
/// enforced by rejection sampling with bounded retries.
pub fn generate(cfg: &ScenarioConfig) -> Result<SyntheticScenario> {
    cfg.validate()?;
    let ref_tokens: Vec<Vec<String>> = (0..cfg.n_segments)
        .map(|seg| generate_reference(cfg, seg))
        .collect();
    let references: Vec<String> = ref_tokens.iter().map(|t| t.join(" ")).collect();

    let human_pairs: Vec<JudgedPair> = (0..cfg.n_segments)
        .map(|seg| generate_human_pair(cfg, seg, &ref_tokens[seg]))
        .collect::<Result<_>>()?;

    let mut nbest = Vec::new();
    let mut satisfied = false;
    for attempt in 0..CORPUS_RETRY_BUDGET as u64 {
        nbest = (0..cfg.n_segments)
            .flat_map(|seg| generate_nbest_segment(cfg, seg, &ref_tokens[seg], attempt))
            .collect();
        if nbest_length_quality_corr(&nbest, &references) < 0.1 {
            satisfied = true;
            break;
        }
    }
    if !satisfied {
        return Err(Error::Data(format!(
            "could not decorrelate n-best length from quality (|corr| < 0.1) \
             within {CORPUS_RETRY_BUDGET} attempts"
        )));
    }

    Ok(SyntheticScenario {
        references,
        human_pairs,
        nbest,
    })
}
