//! End-to-end synthetic runs: the seeded train / validate / sweep pipeline,
//! and the snowball experiment comparing a threshold tuned on a small
//! training set with one re-tuned on the estimated lower bound of a larger
//! test set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::ClassBalance;
use crate::dataset::{generate_synthetic, split_dataset, DataError, Dataset, GoldTruth, LabeledPair, SplitSpec, SyntheticConfig};
use crate::matching::{train_match_model, MatchError, MatchModel, TrainConfig};
use crate::metrics::PairMetrics;
use crate::record::{BaseId, Record};
use crate::sweep::{select_by_truth, select_threshold, Evaluator, SelectionMetric, SweepError, SweepRow, ThresholdGrid};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("invalid experiment config: {0}")]
    Config(String),
}

/// Borrowed `(a, b, label)` triples for labeled pairs of `dataset`.
pub fn labeled_triples<'a>(dataset: &'a Dataset, pairs: &[LabeledPair]) -> Vec<(&'a Record, &'a Record, bool)> {
    pairs
        .iter()
        .map(|p| (&dataset.records()[p.a.index()], &dataset.records()[p.b.index()], p.label))
        .collect()
}

/// `dataset.subset(ids)` together with the gold labels carried over to the
/// renumbered ids.
pub fn subset_with_gold(dataset: &Dataset, gold: &GoldTruth, ids: &[BaseId]) -> (Dataset, GoldTruth) {
    let labels = ids
        .iter()
        .enumerate()
        .filter_map(|(i, &id)| gold.label(id).map(|l| (BaseId(i as u32), l.to_owned())))
        .collect();
    (dataset.subset(ids), GoldTruth::new(labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub synthetic: SyntheticConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub grid: ThresholdGrid,
    pub confidence: f64,
    pub class_balance: ClassBalance,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            grid: ThresholdGrid::new(0.05, 0.95, 20).expect("valid grid"),
            confidence: 0.95,
            class_balance: ClassBalance::Estimate,
        }
    }
}

impl TrialConfig {
    /// Same configuration with every random source derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synthetic.seed = seed;
        self.split.seed = seed.wrapping_add(1);
        self.train.seed = seed.wrapping_add(2);
        self
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub model: MatchModel,
    pub test_records: usize,
    pub rows: Vec<SweepRow>,
}

/// Generate, split, train, then sweep the held-out records against their
/// gold truth.
pub fn run_synthetic_trial(config: &TrialConfig) -> Result<TrialOutcome, ExperimentError> {
    let (dataset, gold) = generate_synthetic(&config.synthetic);
    let split = split_dataset(&dataset, &gold, &config.split)?;
    let model = train_match_model(&labeled_triples(&dataset, &split.train_pairs), dataset.schema(), &config.train)?;
    let (test, test_gold) = subset_with_gold(&dataset, &gold, &split.test_ids);
    let validation = labeled_triples(&dataset, &split.validation_pairs);
    let rows = Evaluator::new(&model, &validation, test.records())?.sweep(
        &config.grid,
        Some(&test_gold.truth_pairs()),
        config.class_balance,
        config.confidence,
    )?;
    Ok(TrialOutcome {
        test_records: test.len(),
        model,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnowballConfig {
    pub noise_sigma: f64,
    pub dims: usize,
    pub records_per_entity: usize,
    /// Entities whose records form the training set; every pair among them
    /// is a training pair.
    pub train_entities: usize,
    /// Entities set aside for sampling validation pairs.
    pub validation_entities: usize,
    pub n_validation_pairs: usize,
    pub positive_fraction_validation: f64,
    /// Test sets, each the first `k` entities of the test pool.
    pub test_entities: Vec<usize>,
    pub grid: ThresholdGrid,
    pub selection: SelectionMetric,
    pub confidence: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SnowballConfig {
    fn default() -> Self {
        Self {
            noise_sigma: SyntheticConfig::default().noise_sigma,
            dims: 10,
            records_per_entity: 10,
            train_entities: 10,
            validation_entities: 20,
            n_validation_pairs: 100,
            positive_fraction_validation: 0.5,
            test_entities: vec![10, 25, 50, 100],
            grid: ThresholdGrid::new(0.02, 0.98, 49).expect("valid grid"),
            selection: SelectionMetric::F1Lb,
            confidence: 0.95,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

/// Results at one test size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnowballPoint {
    pub test_records: usize,
    /// True metrics at the threshold tuned on the training set.
    pub original: PairMetrics,
    pub optimized_threshold: Option<f64>,
    /// True metrics at the threshold maximizing the selected bound.
    pub optimized: Option<PairMetrics>,
    pub optimized_bound: Option<f64>,
    /// Best true F1 over the grid, for reference.
    pub best_threshold: Option<f64>,
    pub best: Option<PairMetrics>,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnowballReport {
    pub original_threshold: f64,
    pub train_f1: f64,
    pub points: Vec<SnowballPoint>,
}

pub fn run_snowball(config: &SnowballConfig) -> Result<SnowballReport, ExperimentError> {
    let max_test = config.test_entities.iter().copied().max().unwrap_or(0);
    if config.test_entities.is_empty() || config.test_entities.contains(&0) {
        return Err(ExperimentError::Config("test_entities must be nonempty and positive".into()));
    }
    if config.train_entities == 0 || config.validation_entities == 0 {
        return Err(ExperimentError::Config("train and validation entities must be positive".into()));
    }
    let per = config.records_per_entity;
    let synthetic = SyntheticConfig {
        n_entities: config.train_entities + config.validation_entities + max_test,
        records_per_entity: per,
        dims: config.dims,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
    };
    let (dataset, gold) = generate_synthetic(&synthetic);
    let id_range = |from: usize, to: usize| -> Vec<BaseId> { (from * per..to * per).map(|i| BaseId(i as u32)).collect() };

    let train_ids = id_range(0, config.train_entities);
    let (train, train_gold) = subset_with_gold(&dataset, &gold, &train_ids);
    let mut train_pairs = Vec::new();
    for (k, a) in train.records().iter().enumerate() {
        for (l, b) in train.records().iter().enumerate().skip(k + 1) {
            train_pairs.push((a, b, train_gold.same_entity(BaseId(k as u32), BaseId(l as u32))));
        }
    }
    let model = train_match_model(&train_pairs, dataset.schema(), &config.train)?;

    // the threshold a practitioner would pick from the training records alone
    let train_rows = Evaluator::new(&model, &[], train.records())?.sweep(
        &config.grid,
        Some(&train_gold.truth_pairs()),
        ClassBalance::Estimate,
        config.confidence,
    )?;
    let tuned = select_by_truth(&train_rows).expect("grid is nonempty and truth is known");

    let first_val = config.train_entities;
    let val_ids = id_range(first_val, first_val + config.validation_entities);
    let (val, val_gold) = subset_with_gold(&dataset, &gold, &val_ids);
    let val_split = split_dataset(
        &val,
        &val_gold,
        &SplitSpec {
            n_train_pairs: 0,
            n_validation_pairs: config.n_validation_pairs,
            positive_fraction_train: 0.5,
            positive_fraction_validation: config.positive_fraction_validation,
            seed: config.seed.wrapping_add(1),
        },
    )?;
    let validation = labeled_triples(&val, &val_split.validation_pairs);

    let first_test = first_val + config.validation_entities;
    let mut points = Vec::new();
    for &k in &config.test_entities {
        let (test, test_gold) = subset_with_gold(&dataset, &gold, &id_range(first_test, first_test + k));
        let truth = test_gold.truth_pairs();
        let evaluator = Evaluator::new(&model, &validation, test.records())?;
        let rows = evaluator.sweep(&config.grid, Some(&truth), ClassBalance::Estimate, config.confidence)?;
        let (_, original) = evaluator.evaluate(tuned.threshold, Some(&truth), ClassBalance::Estimate, config.confidence)?;
        let optimized = select_threshold(&rows, config.selection);
        let truth_at = |t: f64| rows.iter().find(|r| r.threshold == t).and_then(|r| r.truth);
        let best = select_by_truth(&rows);
        points.push(SnowballPoint {
            test_records: test.len(),
            original: original.truth.expect("truth supplied"),
            optimized_threshold: optimized.map(|s| s.threshold),
            optimized: optimized.and_then(|s| truth_at(s.threshold)),
            optimized_bound: optimized.map(|s| s.value),
            best_threshold: best.map(|s| s.threshold),
            best: best.and_then(|s| truth_at(s.threshold)),
            rows,
        });
    }
    Ok(SnowballReport {
        original_threshold: tuned.threshold,
        train_f1: tuned.value,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_carries_gold() {
        let (data, gold) = generate_synthetic(&SyntheticConfig {
            n_entities: 3,
            records_per_entity: 2,
            ..SyntheticConfig::default()
        });
        let ids = [BaseId(5), BaseId(0), BaseId(4)];
        let (sub, sub_gold) = subset_with_gold(&data, &gold, &ids);
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.name(BaseId(0)), data.name(BaseId(5)));
        assert!(sub_gold.same_entity(BaseId(0), BaseId(2)));
        assert!(!sub_gold.same_entity(BaseId(0), BaseId(1)));
    }

    #[test]
    fn trial_seeds_are_derived() {
        let c = TrialConfig::default().with_seed(7);
        assert_eq!((c.synthetic.seed, c.split.seed, c.train.seed), (7, 8, 9));
    }

    #[test]
    fn snowball_rejects_empty_sizes() {
        let config = SnowballConfig {
            test_entities: vec![],
            ..SnowballConfig::default()
        };
        assert!(matches!(run_snowball(&config), Err(ExperimentError::Config(_))));
    }
}
