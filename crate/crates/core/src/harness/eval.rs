use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{mrr, success_rate_at_k, Rank};
use super::HarnessError;
use crate::encoder::CodeSearchModel;
use crate::index::SearchIndex;
use crate::trainer::{kfold_split, train_fold, Fold, TrainConfig, TrainingPair};

/// Turns pairs into code and query vectors.
pub trait Embedder {
    fn embed_code(&self, pair: &TrainingPair) -> Result<Vec<f64>, HarnessError>;
    /// Vector of the pair's docstring used as a query.
    fn embed_query(&self, pair: &TrainingPair) -> Result<Vec<f64>, HarnessError>;
}

impl Embedder for CodeSearchModel {
    fn embed_code(&self, pair: &TrainingPair) -> Result<Vec<f64>, HarnessError> {
        Ok(self.encode_code(&self.prepare_code(&pair.bundle, pair.graph.clone()))?)
    }

    fn embed_query(&self, pair: &TrainingPair) -> Result<Vec<f64>, HarnessError> {
        Ok(self.encode_query_words(&pair.doc)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub mrr_cutoff: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { ks: vec![1, 5, 10], mrr_cutoff: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub sr: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n: usize,
    /// First-hit rank of each query, in pair order.
    pub ranks: Vec<Rank>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub sr: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n: usize,
}

/// Mean wall-clock milliseconds per query.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Latency {
    pub embed: f64,
    pub retrieve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub folds: Vec<FoldResult>,
    pub mean: MeanResult,
    pub latency_ms: Latency,
}

impl EvalResult {
    /// The result without timing, for comparisons across runs.
    pub fn without_latency(&self) -> EvalResult {
        EvalResult { latency_ms: Latency::default(), ..self.clone() }
    }
}

/// Metrics from first-hit ranks.
pub fn fold_metrics(ranks: Vec<Rank>, opts: &EvalOptions) -> Result<FoldResult, HarnessError> {
    let mut sr = BTreeMap::new();
    for &k in &opts.ks {
        sr.insert(k, success_rate_at_k(&ranks, k)?);
    }
    Ok(FoldResult { sr, mrr: mrr(&ranks, opts.mrr_cutoff)?, n: ranks.len(), ranks })
}

#[derive(Default)]
struct Timing {
    embed: f64,
    retrieve: f64,
    queries: usize,
}

/// Indexes the code of `pairs`, issues each docstring as a query and records
/// where its own code lands.
fn rank_pairs(embedder: &dyn Embedder, pairs: &[&TrainingPair], timing: &mut Timing) -> Result<Vec<Rank>, HarnessError> {
    let mut codes = Vec::with_capacity(pairs.len());
    for p in pairs {
        codes.push(embedder.embed_code(p)?);
    }
    let dim = codes.first().map_or(0, Vec::len);
    let mut index = SearchIndex::new(dim);
    for (p, v) in pairs.iter().zip(codes) {
        index.add(&p.id, v, None)?;
    }
    let mut ranks = Vec::with_capacity(pairs.len());
    for p in pairs {
        let start = Instant::now();
        let q = embedder.embed_query(p)?;
        let embedded = Instant::now();
        let hits = index.search(&q, index.len())?;
        timing.embed += (embedded - start).as_secs_f64() * 1e3;
        timing.retrieve += embedded.elapsed().as_secs_f64() * 1e3;
        timing.queries += 1;
        ranks.push(hits.iter().position(|h| h.id == p.id).map(|i| i + 1));
    }
    Ok(ranks)
}

fn summarize(folds: Vec<FoldResult>, timing: &Timing, opts: &EvalOptions) -> Result<EvalResult, HarnessError> {
    if folds.is_empty() {
        return Err(HarnessError::NoQueries);
    }
    let count = folds.len() as f64;
    let sr = opts.ks.iter().map(|k| (*k, folds.iter().map(|f| f.sr[k]).sum::<f64>() / count)).collect();
    let mean = MeanResult { sr, mrr: folds.iter().map(|f| f.mrr).sum::<f64>() / count, n: folds.iter().map(|f| f.n).sum() };
    let per = timing.queries.max(1) as f64;
    Ok(EvalResult { folds, mean, latency_ms: Latency { embed: timing.embed / per, retrieve: timing.retrieve / per } })
}

fn check_options(opts: &EvalOptions) -> Result<(), HarnessError> {
    if opts.ks.is_empty() || opts.ks.contains(&0) || opts.mrr_cutoff == 0 {
        return Err(HarnessError::InvalidCutoff);
    }
    Ok(())
}

/// Evaluates one embedder on the test side of each fold. Folds with fewer
/// than two test pairs are skipped with a warning.
pub fn evaluate(
    embedder: &dyn Embedder,
    pairs: &[TrainingPair],
    folds: &[Fold],
    opts: &EvalOptions,
) -> Result<EvalResult, HarnessError> {
    check_options(opts)?;
    let mut timing = Timing::default();
    let mut results = Vec::new();
    for (k, fold) in folds.iter().enumerate() {
        if fold.test.len() < 2 {
            log::warn!("skipping fold {k}: {} test pairs", fold.test.len());
            continue;
        }
        let subset: Vec<&TrainingPair> = fold.test.iter().map(|&i| &pairs[i]).collect();
        results.push(fold_metrics(rank_pairs(embedder, &subset, &mut timing)?, opts)?);
    }
    summarize(results, &timing, opts)
}

/// Evaluates on all pairs as a single fold.
pub fn evaluate_all(embedder: &dyn Embedder, pairs: &[TrainingPair], opts: &EvalOptions) -> Result<EvalResult, HarnessError> {
    let fold = Fold { train: Vec::new(), test: (0..pairs.len()).collect() };
    evaluate(embedder, pairs, std::slice::from_ref(&fold), opts)
}

/// Trains a fresh model on the training side of each fold and evaluates it
/// on the test side.
pub fn cross_validate(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    folds: usize,
    opts: &EvalOptions,
) -> Result<EvalResult, HarnessError> {
    check_options(opts)?;
    let split = kfold_split(pairs.len(), folds, cfg.seed)?;
    let mut timing = Timing::default();
    let mut results = Vec::new();
    for (k, fold) in split.iter().enumerate() {
        if fold.test.len() < 2 {
            log::warn!("skipping fold {k}: {} test pairs", fold.test.len());
            continue;
        }
        log::info!("fold {}/{}: training on {} pairs", k + 1, folds, fold.train.len());
        let model = train_fold(pairs, fold, cfg)?.model;
        let subset: Vec<&TrainingPair> = fold.test.iter().map(|&i| &pairs[i]).collect();
        let result = fold_metrics(rank_pairs(&model, &subset, &mut timing)?, opts)?;
        log::info!("fold {}: MRR@{} {:.4}", k + 1, opts.mrr_cutoff, result.mrr);
        results.push(result);
    }
    summarize(results, &timing, opts)
}
