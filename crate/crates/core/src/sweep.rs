//! Threshold sweeps: resolve the test records at each cut-off, count |R| and
//! |T_M|, compute the bound report and, when test truth is known, the true
//! pairwise metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundReport, BoundsError, ClassBalance, ValidationStats};
use crate::matching::{BaseIndex, MatchError, MatchModel, ScoreTable};
use crate::metrics::{count_direct_match_pairs, evaluate_clustering, PairMetrics, PairSet};
use crate::record::Record;
use crate::resolver::{resolve_connected_components, Clustering, ResolveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("invalid threshold grid: {0}")]
    Grid(String),
    #[error("unknown selection metric `{0}` (expected precision_lb, recall_lb, f1_lb or precision_lb@recall_lb>=FLOOR)")]
    Metric(String),
}

/// Evenly spaced thresholds from `start` to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl ThresholdGrid {
    pub fn new(start: f64, stop: f64, steps: usize) -> Result<Self, SweepError> {
        let inside = |t: f64| t > 0.0 && t < 1.0;
        if !inside(start) || !inside(stop) {
            return Err(SweepError::Grid(format!("[{start}, {stop}] must lie inside (0, 1)")));
        }
        if start > stop {
            return Err(SweepError::Grid(format!("start {start} exceeds stop {stop}")));
        }
        if steps == 0 {
            return Err(SweepError::Grid("steps must be at least 1".into()));
        }
        Ok(Self { start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.stop } else { self.start + step * i as f64 })
            .collect()
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            start: 0.05,
            stop: 0.95,
            steps: 19,
        }
    }
}

/// One threshold's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub r_pairs: u64,
    pub tm_pairs: u64,
    pub validation: Option<ValidationStats>,
    /// `None` when the bounds are undefined at this threshold; see
    /// `bound_error`.
    pub report: Option<BoundReport>,
    pub bound_error: Option<String>,
    pub truth: Option<PairMetrics>,
}

/// Scores validation pairs and test pairs once so that every threshold only
/// thresholds and re-resolves.
pub struct Evaluator<'a> {
    model: &'a MatchModel,
    validation: Vec<(f64, bool)>,
    test_records: &'a [Record],
    table: ScoreTable,
    lookup: BaseIndex<'a>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        model: &'a MatchModel,
        validation_pairs: &[(&Record, &Record, bool)],
        test_records: &'a [Record],
    ) -> Result<Self, SweepError> {
        let validation = validation_pairs
            .par_iter()
            .map(|(a, b, label)| Ok((model.score(a, b)?, *label)))
            .collect::<Result<Vec<_>, MatchError>>()?;
        Ok(Self {
            model,
            validation,
            test_records,
            table: ScoreTable::new(model, test_records)?,
            lookup: BaseIndex::new(test_records),
        })
    }

    pub fn model(&self) -> &MatchModel {
        self.model
    }

    pub fn test_pairs(&self) -> u64 {
        let n = self.test_records.len() as u64;
        n * n.saturating_sub(1) / 2
    }

    /// Validation confusion counts at `threshold`.
    pub fn validation_stats(&self, threshold: f64) -> Result<ValidationStats, BoundsError> {
        ValidationStats::from_predictions(self.validation.iter().map(|&(s, label)| (label, s >= threshold)))
    }

    /// Connected-components resolution of the test records at `threshold`.
    pub fn resolve(&self, threshold: f64) -> Result<Clustering, SweepError> {
        Ok(resolve_connected_components(self.test_records, &self.table.matcher(threshold))?)
    }

    pub fn evaluate(
        &self,
        threshold: f64,
        truth: Option<&PairSet>,
        class_balance: ClassBalance,
        confidence: f64,
    ) -> Result<(Clustering, SweepRow), SweepError> {
        let clustering = self.resolve(threshold)?;
        let matcher = self.table.matcher(threshold);
        let r_pairs = clustering.num_intra_pairs();
        let tm_pairs = count_direct_match_pairs(&clustering, &matcher, &self.lookup)?;
        let validation = self.validation_stats(threshold);
        let report = validation.as_ref().map_err(Clone::clone).and_then(|stats| {
            BoundReport::compute(stats, tm_pairs, r_pairs, self.test_pairs(), class_balance, confidence)
        });
        let (report, bound_error) = match report {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let row = SweepRow {
            threshold,
            r_pairs,
            tm_pairs,
            validation: validation.ok(),
            report,
            bound_error,
            truth: truth.map(|t| evaluate_clustering(&clustering, t)),
        };
        Ok((clustering, row))
    }

    /// Evaluates every grid threshold; rows come back in grid order.
    pub fn sweep(
        &self,
        grid: &ThresholdGrid,
        truth: Option<&PairSet>,
        class_balance: ClassBalance,
        confidence: f64,
    ) -> Result<Vec<SweepRow>, SweepError> {
        grid.values()
            .into_par_iter()
            .map(|t| self.evaluate(t, truth, class_balance, confidence).map(|(_, row)| row))
            .collect()
    }
}

/// Objective for choosing a threshold from the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "metric", content = "recall_floor")]
pub enum SelectionMetric {
    PrecisionLb,
    RecallLb,
    F1Lb,
    /// Precision bound among thresholds whose recall bound reaches the floor.
    PrecisionLbWithRecallFloor(f64),
}

impl Default for SelectionMetric {
    fn default() -> Self {
        SelectionMetric::F1Lb
    }
}

impl SelectionMetric {
    pub fn name(&self) -> String {
        match self {
            SelectionMetric::PrecisionLb => "precision_lb".into(),
            SelectionMetric::RecallLb => "recall_lb".into(),
            SelectionMetric::F1Lb => "f1_lb".into(),
            SelectionMetric::PrecisionLbWithRecallFloor(f) => format!("precision_lb@recall_lb>={f}"),
        }
    }

    fn value(&self, report: &BoundReport) -> Option<f64> {
        match *self {
            SelectionMetric::PrecisionLb => Some(report.precision_lb),
            SelectionMetric::RecallLb => Some(report.recall_lb),
            SelectionMetric::F1Lb => Some(report.f1_lb),
            SelectionMetric::PrecisionLbWithRecallFloor(floor) => {
                (report.recall_lb >= floor).then_some(report.precision_lb)
            }
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = SweepError;

    /// Parses the names produced by [`SelectionMetric::name`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SweepError::Metric(s.to_string());
        match s.trim() {
            "precision_lb" => Ok(SelectionMetric::PrecisionLb),
            "recall_lb" => Ok(SelectionMetric::RecallLb),
            "f1_lb" => Ok(SelectionMetric::F1Lb),
            other => {
                let floor = other.strip_prefix("precision_lb@recall_lb>=").ok_or_else(bad)?;
                let floor: f64 = floor.trim().parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&floor) {
                    return Err(bad());
                }
                Ok(SelectionMetric::PrecisionLbWithRecallFloor(floor))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub threshold: f64,
    pub value: f64,
}

/// Threshold maximizing `metric` over rows with a bound report; ties go to
/// the lower threshold.
pub fn select_threshold(rows: &[SweepRow], metric: SelectionMetric) -> Option<Selection> {
    let mut best: Option<Selection> = None;
    for row in rows {
        let Some(value) = row.report.as_ref().and_then(|r| metric.value(r)) else {
            continue;
        };
        let better = match best {
            None => true,
            Some(b) => value > b.value || (value == b.value && row.threshold < b.threshold),
        };
        if better {
            best = Some(Selection {
                threshold: row.threshold,
                value,
            });
        }
    }
    best
}

/// Threshold maximizing true F1 (ties to the lower threshold).
pub fn select_by_truth(rows: &[SweepRow]) -> Option<Selection> {
    let mut best: Option<Selection> = None;
    for row in rows {
        let Some(value) = row.truth.map(|m| m.f1) else { continue };
        if best.is_none_or(|b| value > b.value || (value == b.value && row.threshold < b.threshold)) {
            best = Some(Selection {
                threshold: row.threshold,
                value,
            });
        }
    }
    best
}
