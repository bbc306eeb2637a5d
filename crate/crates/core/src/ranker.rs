//! Pairwise learning-to-rank training and scoring.
//!
//! The scorer is linear in standardized feature space: `score(h, r) =
//! w · z(φ(h, r))`. Training minimizes the rank-logit objective
//!
//! ```text
//! L(w) = mean_pairs log(1 + exp(-w·d)) + (λ/2)‖w‖²,   d = z(φ(better)) − z(φ(worse))
//! ```
//!
//! by full-batch gradient descent with a fixed iteration count, so training
//! is bit-reproducible given the configuration and input order. There is no
//! intercept; it would cancel in the pairwise differences.

use std::collections::BTreeMap;

use crate::corpus_io::{JudgedPair, MetricModel, Standardization, MODEL_VERSION};
use crate::features::{self, featurize, tokenize, FeatureVector, FEATURE_COUNT};
use crate::{Error, Result};

/// Standard deviations are floored here so constant features do not divide
/// by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-3,
            learning_rate: 0.1,
            iterations: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l2_lambda < 0.0 {
            return Err(Error::Argument("l2_lambda must be >= 0".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument("learning_rate must be > 0".to_string()));
        }
        if self.iterations == 0 {
            return Err(Error::Argument("iterations must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One pairwise training constraint: the standardized feature difference
/// between the better and the worse hypothesis, with an optional weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDiff {
    pub diff: Vec<f64>,
    pub weight: f64,
}

impl PairDiff {
    pub fn new(diff: Vec<f64>) -> Self {
        PairDiff { diff, weight: 1.0 }
    }
}

/// Summary statistics from one training run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub n_pairs: usize,
    /// Pairs whose better and worse feature vectors are identical. They
    /// contribute constant loss log 2 and zero gradient; they are kept in
    /// the corpus but reported here.
    pub n_ties: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean objective after each iteration, for monotonicity checks.
    pub loss_history: Vec<f64>,
}

/// Fits per-feature mean and population standard deviation, flooring the
/// standard deviation at [`STD_FLOOR`].
pub fn standardize_fit(vectors: &[FeatureVector]) -> Result<Standardization> {
    if vectors.is_empty() {
        return Err(Error::Argument(
            "standardization requires at least one vector".to_string(),
        ));
    }
    let n = vectors.len() as f64;
    let dim = FEATURE_COUNT;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.values.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(v.values.iter()).zip(mean.iter()) {
            let d = x - m;
            *s += d * d;
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(Standardization { mean, std })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Summed pairwise logistic loss with L2 and its exact analytic gradient:
///
/// `L(w) = Σ ω·log(1 + exp(−w·d)) + (λ/2)‖w‖²`,
/// `∇L(w) = Σ −ω·σ(−w·d)·d + λw`.
pub fn loss_and_gradient(w: &[f64], diffs: &[PairDiff], l2_lambda: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut gradient = vec![0.0; w.len()];
    for pair in diffs {
        debug_assert_eq!(pair.diff.len(), w.len());
        let margin: f64 = w.iter().zip(pair.diff.iter()).map(|(a, b)| a * b).sum();
        loss += pair.weight * softplus(-margin);
        let coeff = -pair.weight * sigmoid(-margin);
        for (g, d) in gradient.iter_mut().zip(pair.diff.iter()) {
            *g += coeff * d;
        }
    }
    loss += 0.5 * l2_lambda * w.iter().map(|x| x * x).sum::<f64>();
    for (g, x) in gradient.iter_mut().zip(w.iter()) {
        *g += l2_lambda * x;
    }
    (loss, gradient)
}

/// Runs full-batch gradient descent on the mean pair loss from `w = 0` and
/// returns the final weights plus the objective value after each iteration.
pub fn fit_weights(diffs: &[PairDiff], cfg: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if diffs.is_empty() {
        return Err(Error::Argument("no training pairs".to_string()));
    }
    let dim = diffs[0].diff.len();
    let total_weight: f64 = diffs.iter().map(|p| p.weight).sum();
    let mean_objective = |w: &[f64], raw_loss: f64| {
        raw_loss / total_weight + 0.5 * cfg.l2_lambda * w.iter().map(|x| x * x).sum::<f64>()
    };
    let mut w = vec![0.0; dim];
    let (raw_loss, mut raw_grad) = loss_and_gradient(&w, diffs, 0.0);
    if !mean_objective(&w, raw_loss).is_finite() {
        return Err(Error::Numeric("non-finite loss at iteration 0".to_string()));
    }
    let mut history = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        for (wi, g) in w.iter_mut().zip(raw_grad.iter()) {
            let step = g / total_weight + cfg.l2_lambda * *wi;
            *wi -= cfg.learning_rate * step;
        }
        let (raw_loss, grad) = loss_and_gradient(&w, diffs, 0.0);
        let loss = mean_objective(&w, raw_loss);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {iter}"
            )));
        }
        history.push(loss);
        raw_grad = grad;
    }
    Ok((w, history))
}

/// Builds standardized better−worse differences for a pair corpus, fitting
/// the standardization over all better- and worse-side vectors.
pub fn build_diffs(pairs: &[JudgedPair]) -> Result<(Standardization, Vec<PairDiff>, usize)> {
    if pairs.is_empty() {
        return Err(Error::Argument("no training pairs".to_string()));
    }
    let mut vectors = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        let reference = tokenize(&pair.reference);
        vectors.push(featurize(&tokenize(&pair.better), &reference)?);
        vectors.push(featurize(&tokenize(&pair.worse), &reference)?);
    }
    let stats = standardize_fit(&vectors)?;
    let mut diffs = Vec::with_capacity(pairs.len());
    let mut n_ties = 0;
    for chunk in vectors.chunks_exact(2) {
        let better = stats.apply(&chunk[0].values);
        let worse = stats.apply(&chunk[1].values);
        let diff: Vec<f64> = better.iter().zip(worse.iter()).map(|(b, w)| b - w).collect();
        if chunk[0].values == chunk[1].values {
            n_ties += 1;
        }
        diffs.push(PairDiff::new(diff));
    }
    Ok((stats, diffs, n_ties))
}

/// Trains a model on judged pairs. Deterministic given the configuration
/// and input order; standardization statistics are fitted on the training
/// pairs and frozen into the model.
pub fn train(pairs: &[JudgedPair], cfg: &TrainConfig) -> Result<(MetricModel, TrainSummary)> {
    cfg.validate()?;
    let (stats, diffs, n_ties) = build_diffs(pairs)?;
    let total_weight: f64 = diffs.iter().map(|p| p.weight).sum();
    let (initial_raw, _) = loss_and_gradient(&vec![0.0; FEATURE_COUNT], &diffs, 0.0);
    let initial_loss = initial_raw / total_weight;
    let (weights, history) = fit_weights(&diffs, cfg)?;
    let final_loss = *history.last().expect("iterations >= 1");

    let config = BTreeMap::from([
        ("l2_lambda".to_string(), cfg.l2_lambda.to_string()),
        ("learning_rate".to_string(), cfg.learning_rate.to_string()),
        ("iterations".to_string(), cfg.iterations.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("n_pairs".to_string(), pairs.len().to_string()),
    ]);
    let model = MetricModel {
        version: MODEL_VERSION,
        feature_names: features::feature_names(),
        weights,
        standardization: stats,
        config,
    };
    let summary = TrainSummary {
        n_pairs: pairs.len(),
        n_ties,
        initial_loss,
        final_loss,
        loss_history: history,
    };
    Ok((model, summary))
}

/// Scores a hypothesis against a reference: `w · z(φ(h, r))`. Higher is
/// better; for a fixed reference this induces a total order.
pub fn score(model: &MetricModel, hypothesis: &str, reference: &str) -> Result<f64> {
    model.validate()?;
    if model.weights.len() != FEATURE_COUNT {
        return Err(Error::Incompatible(format!(
            "model has {} features, this build computes {FEATURE_COUNT}",
            model.weights.len()
        )));
    }
    let fv = featurize(&tokenize(hypothesis), &tokenize(reference))?;
    let z = model.standardization.apply(&fv.values);
    Ok(model.weights.iter().zip(z.iter()).map(|(w, x)| w * x).sum())
}
