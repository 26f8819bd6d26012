//! Margin-ranking training over (code, docstring) pairs with random negatives,
//! plus k-fold splitting.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cedg::{build_cedg, Cedg};
use crate::encoder::{code_forward, query_forward, unit_words, CodeInput, CodeSearchModel, EncoderError};
use crate::frontend::words::normalize_text;
use crate::frontend::{tokenize_code, FunctionUnit, TokenBundle, Vocabulary};
use crate::nnkernel::{ranking_loss_var, Adam, KernelError, ModelConfig, Tape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("need at least 2 training pairs, got {0}")]
    TooFewPairs(usize),
    #[error("cannot split {pairs} pairs into {folds} folds")]
    Folds { folds: usize, pairs: usize },
    #[error("non-finite loss on pair {id}")]
    NanLoss { id: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One training example: a code unit and the words of its docstring.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub bundle: TokenBundle,
    pub graph: Cedg,
    pub doc: Vec<String>,
}

/// Builds pairs from `units`, skipping units without docstring words. Graphs
/// are built against all of `units` as context.
pub fn pairs_from_units(units: &[FunctionUnit], cfg: &ModelConfig) -> Vec<TrainingPair> {
    units
        .iter()
        .filter_map(|u| {
            let mut doc = normalize_text(u.docstring.as_deref()?);
            doc.truncate(cfg.caps.tokens);
            if doc.is_empty() {
                return None;
            }
            Some(TrainingPair {
                id: u.id.clone(),
                bundle: tokenize_code(u, cfg.caps),
                graph: build_cedg(u, units),
                doc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Cross-validation folds; `None` trains on every pair.
    pub folds: Option<usize>,
    /// Words seen fewer times than this map to the unknown word.
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig { out_dim: 64, ..ModelConfig::default() },
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 42,
            folds: None,
            min_count: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if matches!(self.folds, Some(k) if k < 2) {
            return Err(TrainError::Config("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CodeSearchModel,
    pub log: Vec<EpochLog>,
}

/// Writes the loss log as CSV with header `epoch,mean_loss,elapsed_seconds`.
pub fn write_loss_csv(log: &[EpochLog], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,mean_loss,elapsed_seconds")?;
    for e in log {
        writeln!(w, "{},{},{:.3}", e.epoch, e.mean_loss, e.elapsed_seconds)?;
    }
    Ok(())
}

/// Draws an index uniformly from `0..count` excluding `positive`.
pub fn sample_negative(count: usize, positive: usize, rng: &mut impl Rng) -> Result<usize, TrainError> {
    if count < 2 {
        return Err(TrainError::TooFewPairs(count));
    }
    let k = rng.gen_range(0..count - 1);
    Ok(if k >= positive { k + 1 } else { k })
}

/// Vocabulary over code words and docstring words of `pairs`.
pub fn build_vocabulary(pairs: &[TrainingPair], min_count: usize) -> Vocabulary {
    let seqs: Vec<Vec<String>> =
        pairs.iter().flat_map(|p| [unit_words(&p.bundle, &p.graph), p.doc.clone()]).collect();
    Vocabulary::build(seqs.iter(), min_count)
}

/// Chooses the negative for a positive index; receives the pair count.
pub type NegativeSampler<'a> = dyn FnMut(usize, usize, &mut ChaCha8Rng) -> Result<usize, TrainError> + 'a;

pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with_sampler(pairs, cfg, &mut |n, i, rng| sample_negative(n, i, rng))
}

/// Training with a caller-chosen negative sampler.
pub fn train_with_sampler(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    sampler: &mut NegativeSampler,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(TrainError::TooFewPairs(pairs.len()));
    }
    let vocab = build_vocabulary(pairs, cfg.min_count);
    let mut model = CodeSearchModel::new(cfg.model.clone(), vocab, cfg.seed)?;
    let inputs: Vec<CodeInput> = pairs.iter().map(|p| model.prepare_code(&p.bundle, p.graph.clone())).collect();
    let docs: Vec<Vec<usize>> = pairs.iter().map(|p| model.vocab.ids(&p.doc)).collect();
    log::info!(
        "training {} pairs, vocabulary {}, {} parameters ({} scalars)",
        pairs.len(),
        model.vocab.len(),
        model.params.len(),
        model.params.scalar_count()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_6e6b));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: BTreeMap<String, Tensor> = BTreeMap::new();
            for &i in batch {
                let j = sampler(pairs.len(), i, &mut rng)?;
                let mut tape = Tape::new(&model.params);
                let c = code_forward(&mut tape, &model.config, &model.vocab, &inputs[i])?;
                let pos = query_forward(&mut tape, &model.config, &docs[i])?;
                let neg = query_forward(&mut tape, &model.config, &docs[j])?;
                let loss = ranking_loss_var(&mut tape, c, pos, neg, model.config.margin)?;
                let value = tape.value(loss).data[0];
                if !value.is_finite() {
                    return Err(TrainError::NanLoss { id: pairs[i].id.clone() });
                }
                total += value;
                for (name, g) in tape.backward(loss).into_params() {
                    match sum.get_mut(&name) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            sum.insert(name, g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in sum.values_mut() {
                for x in &mut g.data {
                    *x *= scale;
                }
            }
            adam.step(&mut model.params, &sum)?;
        }
        let mean_loss = total / pairs.len() as f64;
        let elapsed_seconds = start.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: mean loss {mean_loss:.6} ({elapsed_seconds:.1}s)");
        log.push(EpochLog { epoch, mean_loss, elapsed_seconds });
    }
    Ok(TrainOutcome { model, log })
}

/// One cross-validation round: indices into the pair list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `count` items into `folds` disjoint, exhaustive test sets whose
/// sizes differ by at most one, after a seeded shuffle.
pub fn kfold_split(count: usize, folds: usize, seed: u64) -> Result<Vec<Fold>, TrainError> {
    if folds == 0 || folds > count {
        return Err(TrainError::Folds { folds, pairs: count });
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..folds)
        .map(|k| {
            let mut test: Vec<usize> = order.iter().skip(k).step_by(folds).copied().collect();
            test.sort_unstable();
            let mut train: Vec<usize> =
                order.iter().enumerate().filter(|(pos, _)| pos % folds != k).map(|(_, &i)| i).collect();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect())
}

/// Trains on the training side of `fold` only, so test-fold docstrings are
/// never drawn as negatives. The sampler sees indices into `fold.train`.
pub fn train_fold_with_sampler(
    pairs: &[TrainingPair],
    fold: &Fold,
    cfg: &TrainConfig,
    sampler: &mut NegativeSampler,
) -> Result<TrainOutcome, TrainError> {
    let subset: Vec<TrainingPair> = fold.train.iter().map(|&i| pairs[i].clone()).collect();
    train_with_sampler(&subset, cfg, sampler)
}

pub fn train_fold(pairs: &[TrainingPair], fold: &Fold, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_fold_with_sampler(pairs, fold, cfg, &mut |n, i, rng| sample_negative(n, i, rng))
}
