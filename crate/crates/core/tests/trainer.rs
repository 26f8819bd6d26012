use std::collections::BTreeSet;

use cedgsearch::harness::generate_synthetic_units;
use cedgsearch::nnkernel::{ModelConfig, ParameterStore};
use cedgsearch::trainer::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_model() -> ModelConfig {
    ModelConfig { max_nodes: 8, ..ModelConfig::with_dims(8, 8, 2, 2).unwrap() }
}

fn pairs(n: usize) -> Vec<TrainingPair> {
    let units = generate_synthetic_units(n, 3).unwrap();
    pairs_from_units(&units, &small_model())
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { model: small_model(), epochs, batch_size: 4, learning_rate: 1e-2, seed: 11, folds: None, min_count: 1 }
}

fn bytes(store: &ParameterStore) -> Vec<u8> {
    let mut buf = Vec::new();
    cedgsearch::nnkernel::write_checkpoint(&mut buf, "", store).unwrap();
    buf
}

#[test]
fn forced_negative_with_two_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(sample_negative(2, 0, &mut rng).unwrap(), 1);
        assert_eq!(sample_negative(2, 1, &mut rng).unwrap(), 0);
    }
    assert!(matches!(sample_negative(1, 0, &mut rng), Err(TrainError::TooFewPairs(1))));
}

#[test]
fn negative_is_never_the_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for draw in 0..10_000 {
        let pos = draw % 7;
        assert_ne!(sample_negative(7, pos, &mut rng).unwrap(), pos);
    }
}

#[test]
fn negatives_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[sample_negative(4, 2, &mut rng).unwrap()] += 1;
    }
    assert_eq!(counts[2], 0);
    let expected = draws as f64 / 3.0;
    let chi2: f64 = [0, 1, 3].iter().map(|&i| (counts[i] as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 2 degrees of freedom.
    assert!(chi2 < 13.816, "chi2 {chi2}, counts {counts:?}");
    for i in [0, 1, 3] {
        assert!((counts[i] as f64 - expected).abs() <= 0.05 * expected, "{counts:?}");
    }
}

#[test]
fn pairs_without_docstrings_are_skipped() {
    let mut units = generate_synthetic_units(4, 5).unwrap();
    units[1].docstring = None;
    units[2].docstring = Some("  42 !! ".into());
    let ps = pairs_from_units(&units, &small_model());
    assert_eq!(ps.iter().map(|p| p.id.clone()).collect::<Vec<_>>(), vec![units[0].id.clone(), units[3].id.clone()]);
    assert!(ps.iter().all(|p| !p.doc.is_empty()));
}

#[test]
fn training_needs_two_pairs() {
    let ps = pairs(2);
    assert!(matches!(train(&ps[..1], &config(1)), Err(TrainError::TooFewPairs(1))));
}

#[test]
fn first_epoch_loss_is_bounded() {
    let ps = pairs(8);
    let cfg = config(1);
    let out = train(&ps, &cfg).unwrap();
    let first = out.log[0].mean_loss;
    assert!(first.is_finite() && (0.0..=cfg.model.margin + 2.0).contains(&first), "{first}");
}

#[test]
fn loss_decreases_on_an_overfittable_set() {
    let ps = pairs(16);
    let out = train(&ps, &config(50)).unwrap();
    assert_eq!(out.log.len(), 50);
    assert_eq!(out.log[0].epoch, 1);
    let (first, last) = (out.log[0].mean_loss, out.log[49].mean_loss);
    assert!(last < first, "first {first}, last {last}");
    assert!(out.log.iter().all(|e| e.mean_loss >= 0.0));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let ps = pairs(6);
    let a = train(&ps, &config(3)).unwrap();
    let b = train(&ps, &config(3)).unwrap();
    assert_eq!(bytes(&a.model.params), bytes(&b.model.params));
    let c = train(&ps, &TrainConfig { seed: 12, ..config(3) }).unwrap();
    assert_ne!(bytes(&a.model.params), bytes(&c.model.params));
}

#[test]
fn zero_margin_with_negative_equal_to_positive_does_not_move() {
    let ps = pairs(4);
    let cfg = TrainConfig { model: ModelConfig { margin: 0.0, ..small_model() }, ..config(2) };
    let out = train_with_sampler(&ps, &cfg, &mut |_, positive, _| Ok(positive)).unwrap();
    assert!(out.log.iter().all(|e| e.mean_loss == 0.0));
    let fresh = cedgsearch::encoder::CodeSearchModel::new(cfg.model.clone(), build_vocabulary(&ps, cfg.min_count), cfg.seed)
        .unwrap();
    assert_eq!(bytes(&out.model.params), bytes(&fresh.params));
}

#[test]
fn test_fold_docstrings_are_never_negatives() {
    let ps = pairs(10);
    let folds = kfold_split(ps.len(), 5, 4).unwrap();
    for fold in &folds {
        let mut drawn = Vec::new();
        train_fold_with_sampler(&ps, fold, &config(2), &mut |n, i, rng| {
            let j = sample_negative(n, i, rng)?;
            drawn.push(fold.train[j]);
            Ok(j)
        })
        .unwrap();
        assert_eq!(drawn.len(), 2 * fold.train.len());
        assert!(drawn.iter().all(|j| !fold.test.contains(j)));
    }
}

#[test]
fn loss_log_csv() {
    let log = vec![
        EpochLog { epoch: 1, mean_loss: 0.5, elapsed_seconds: 1.25 },
        EpochLog { epoch: 2, mean_loss: 0.25, elapsed_seconds: 2.5 },
    ];
    let mut buf = Vec::new();
    write_loss_csv(&log, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "epoch,mean_loss,elapsed_seconds\n1,0.5,1.250\n2,0.25,2.500\n");
}

#[test]
fn fold_examples() {
    let singles = kfold_split(10, 10, 0).unwrap();
    assert!(singles.iter().all(|f| f.test.len() == 1 && f.train.len() == 9));
    let eleven = kfold_split(11, 10, 0).unwrap();
    let mut sizes: Vec<usize> = eleven.iter().map(|f| f.test.len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, [vec![1; 9], vec![2]].concat());
    assert!(matches!(kfold_split(3, 4, 0), Err(TrainError::Folds { folds: 4, pairs: 3 })));
    assert!(TrainConfig { folds: Some(1), ..config(1) }.validate().is_err());
}

proptest! {
    #[test]
    fn folds_partition_the_pairs(count in 1usize..60, folds in 1usize..12, seed in any::<u64>()) {
        prop_assume!(folds <= count);
        let split = kfold_split(count, folds, seed).unwrap();
        prop_assert_eq!(split.len(), folds);
        let mut seen = BTreeSet::new();
        for f in &split {
            for &i in &f.test {
                prop_assert!(seen.insert(i));
            }
            let train: BTreeSet<usize> = f.train.iter().copied().collect();
            let test: BTreeSet<usize> = f.test.iter().copied().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), count);
        }
        prop_assert_eq!(seen, (0..count).collect::<BTreeSet<_>>());
        let sizes: Vec<usize> = split.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(kfold_split(count, folds, seed).unwrap(), split);
    }
}
