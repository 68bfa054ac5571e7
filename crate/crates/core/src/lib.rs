//! Pairwise entity resolution with estimated lower bounds on pairwise
//! precision, recall and F1.
//!
//! The crate resolves record sets with a thresholded logistic match function
//! and a set-union merge. Given a small labeled set of validation pairs it
//! estimates lower bounds on the pairwise metrics of a resolution of any size,
//! so the match threshold can be tuned without ground truth for the deployed
//! data.

pub mod bounds;
pub mod dataset;
pub mod experiment;
pub mod matching;
pub mod metrics;
pub mod record;
pub mod resolver;
pub mod sweep;

pub use bounds::{BoundReport, ClassBalance, ValidationStats};
pub use dataset::{Dataset, GoldTruth, SplitSpec};
pub use matching::{BaseMatcher, MatchModel, TrainConfig};
pub use metrics::{PairMetrics, PairSet};
pub use record::{BaseId, FeatureKind, FeatureSchema, Record, Value};
pub use resolver::Clustering;
pub use sweep::{Evaluator, SelectionMetric, SweepRow, ThresholdGrid};
