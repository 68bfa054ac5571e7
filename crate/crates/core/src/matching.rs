//! Pairwise featurization, the logistic match function, and the wrapper match
//! over composite records.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{BaseId, FeatureKind, FeatureSchema, Record, RecordError, Value};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("training pairs must contain both matches and mismatches ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("non-finite feature value in slot {slot} of training pair {pair}")]
    NonFinite { pair: usize, slot: usize },
    #[error("base_match called on a composite record; use wrapper_match")]
    CompositeInput,
    #[error("base id {0} cannot be resolved")]
    UnknownBaseId(BaseId),
    #[error("invalid match model: {0}")]
    InvalidModel(String),
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = diagonal + usize::from(ca != cb);
            diagonal = row[j + 1];
            row[j + 1] = substitution.min(row[j] + 1).min(diagonal + 1);
        }
    }
    row[b.len()]
}

/// Levenshtein distance divided by the longer string's length; 0 for two
/// empty strings.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

/// Pairwise feature vector: one comparison slot per schema feature followed by
/// one missing-indicator per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFeatures(pub Vec<f64>);

impl PairFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Compares two records feature by feature. Multi-valued features use the
/// closest pair of values.
pub fn featurize_pair(a: &Record, b: &Record, schema: &FeatureSchema) -> Result<PairFeatures, MatchError> {
    let k = schema.len();
    for r in [a, b] {
        if r.values().len() != k {
            return Err(RecordError::SchemaMismatch(format!(
                "record has {} features, schema has {k}",
                r.values().len()
            ))
            .into());
        }
    }
    let mut out = vec![0.0; 2 * k];
    for (slot, feature) in schema.features().iter().enumerate() {
        let (xs, ys) = (a.feature(slot), b.feature(slot));
        if xs.is_empty() || ys.is_empty() {
            out[k + slot] = 1.0;
            continue;
        }
        let conforms = xs.iter().chain(ys).all(|v| v.conforms_to(feature.kind));
        if !conforms {
            return Err(RecordError::SchemaMismatch(format!(
                "feature `{}` holds a value that is not {}",
                feature.name, feature.kind
            ))
            .into());
        }
        out[slot] = match feature.kind {
            FeatureKind::Categorical => {
                if xs.intersection(ys).next().is_some() {
                    1.0
                } else {
                    0.0
                }
            }
            FeatureKind::Numeric => min_cross(xs, ys, |x, y| {
                (x.as_num().unwrap_or(0.0) - y.as_num().unwrap_or(0.0)).abs()
            }),
            FeatureKind::Text => min_cross(xs, ys, |x, y| {
                normalized_levenshtein(x.as_str().unwrap_or(""), y.as_str().unwrap_or(""))
            }),
        };
    }
    Ok(PairFeatures(out))
}

fn min_cross<'a>(
    xs: impl IntoIterator<Item = &'a Value> + Copy,
    ys: impl IntoIterator<Item = &'a Value> + Copy,
    distance: impl Fn(&Value, &Value) -> f64,
) -> f64 {
    let mut best = f64::INFINITY;
    for x in xs {
        for y in ys {
            best = best.min(distance(x, y));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Outcome of fitting a logistic regression to standardized features.
#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective value before every epoch, plus the final value.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus `l2 / 2 * |w|²` (bias unregularized), with its
/// gradient in `(weights, bias)`.
pub fn logistic_objective(weights: &[f64], bias: f64, x: &[Vec<f64>], y: &[bool], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_bias = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = dot(weights, row) + bias;
        // -log σ(z) = softplus(-z), -log(1-σ(z)) = softplus(z)
        loss += if label { softplus(-z) } else { softplus(z) };
        let residual = sigmoid(z) - f64::from(u8::from(label));
        for (g, xi) in grad.iter_mut().zip(row) {
            *g += residual * xi;
        }
        grad_bias += residual;
    }
    loss /= n;
    grad_bias /= n;
    let mut penalty = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
        penalty += w * w;
    }
    (loss + 0.5 * l2 * penalty, grad, grad_bias)
}

/// Full-batch gradient descent on [`logistic_objective`].
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], config: &TrainConfig) -> LogisticFit {
    let dims = x.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..dims).map(|_| rng.random_range(-0.01..0.01)).collect();
    let mut bias = 0.0;
    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad, grad_bias) = logistic_objective(&weights, bias, x, y, config.l2);
        loss_history.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_bias;
    }
    loss_history.push(logistic_objective(&weights, bias, x, y, config.l2).0);
    LogisticFit {
        weights,
        bias,
        loss_history,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic match function with a decision threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MatchModel {
    pub schema: FeatureSchema,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub standardization: Vec<Standardization>,
    pub config: TrainConfig,
    pub format_version: u32,
}

#[derive(Deserialize)]
struct RawModel {
    schema: FeatureSchema,
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
    standardization: Vec<Standardization>,
    config: TrainConfig,
    format_version: u32,
}

impl TryFrom<RawModel> for MatchModel {
    type Error = MatchError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        if raw.format_version != MODEL_FORMAT_VERSION {
            return Err(MatchError::InvalidModel(format!(
                "unsupported format_version {}",
                raw.format_version
            )));
        }
        MatchModel::new(raw.schema, raw.weights, raw.bias, raw.standardization, raw.threshold)
            .map(|m| MatchModel { config: raw.config, ..m })
    }
}

impl MatchModel {
    pub fn new(
        schema: FeatureSchema,
        weights: Vec<f64>,
        bias: f64,
        standardization: Vec<Standardization>,
        threshold: f64,
    ) -> Result<Self, MatchError> {
        let slots = 2 * schema.len();
        if weights.len() != slots || standardization.len() != slots {
            return Err(MatchError::InvalidModel(format!(
                "expected {slots} weights and standardization entries, got {} and {}",
                weights.len(),
                standardization.len()
            )));
        }
        if let Some(s) = standardization.iter().find(|s| !(s.scale > 0.0) || !s.mean.is_finite()) {
            return Err(MatchError::InvalidModel(format!("bad standardization entry {s:?}")));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(MatchError::InvalidModel("non-finite weights".into()));
        }
        check_threshold(threshold)?;
        Ok(Self {
            schema,
            weights,
            bias,
            threshold,
            standardization,
            config: TrainConfig::default(),
            format_version: MODEL_FORMAT_VERSION,
        })
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self, MatchError> {
        check_threshold(threshold)?;
        Ok(Self {
            threshold,
            ..self.clone()
        })
    }

    /// Match probability of a feature vector.
    pub fn score_features(&self, features: &PairFeatures) -> f64 {
        let z: f64 = features
            .0
            .iter()
            .zip(&self.standardization)
            .zip(&self.weights)
            .map(|((x, s), w)| w * (x - s.mean) / s.scale)
            .sum();
        sigmoid(z + self.bias)
    }

    pub fn score(&self, a: &Record, b: &Record) -> Result<f64, MatchError> {
        Ok(self.score_features(&featurize_pair(a, b, &self.schema)?))
    }
}

fn check_threshold(threshold: f64) -> Result<(), MatchError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(MatchError::InvalidModel(format!("threshold {threshold} outside (0, 1)")))
    }
}

/// Trains a logistic match model on labeled record pairs (`true` = match).
pub fn train_match_model(
    pairs: &[(&Record, &Record, bool)],
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<MatchModel, MatchError> {
    let positives = pairs.iter().filter(|p| p.2).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MatchError::DegenerateLabels { positives, negatives });
    }
    let mut raw = Vec::with_capacity(pairs.len());
    for (i, (a, b, _)) in pairs.iter().enumerate() {
        let features = featurize_pair(a, b, schema)?;
        if let Some(slot) = features.0.iter().position(|x| !x.is_finite()) {
            return Err(MatchError::NonFinite { pair: i, slot });
        }
        raw.push(features.0);
    }
    let standardization = fit_standardization(&raw);
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| {
            row.iter()
                .zip(&standardization)
                .map(|(v, s)| (v - s.mean) / s.scale)
                .collect()
        })
        .collect();
    let y: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    let fit = fit_logistic(&x, &y, config);
    let mut model = MatchModel::new(schema.clone(), fit.weights, fit.bias, standardization, 0.5)?;
    model.config = *config;
    Ok(model)
}

fn fit_standardization(rows: &[Vec<f64>]) -> Vec<Standardization> {
    let n = rows.len() as f64;
    let dims = rows.first().map_or(0, Vec::len);
    (0..dims)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            Standardization {
                mean,
                scale: if sd > 1e-12 { sd } else { 1.0 },
            }
        })
        .collect()
}

/// Probability that `a` and `b` refer to the same entity.
pub fn score_pair(model: &MatchModel, a: &Record, b: &Record) -> Result<f64, MatchError> {
    model.score(a, b)
}

/// A match predicate over base records. Implementations must be idempotent
/// (`r ≈ r`) and commutative.
pub trait BaseMatcher {
    fn base_match(&self, a: &Record, b: &Record) -> Result<bool, MatchError>;
}

fn require_base(a: &Record, b: &Record) -> Result<(), MatchError> {
    if a.is_base() && b.is_base() {
        Ok(())
    } else {
        Err(MatchError::CompositeInput)
    }
}

impl BaseMatcher for MatchModel {
    fn base_match(&self, a: &Record, b: &Record) -> Result<bool, MatchError> {
        require_base(a, b)?;
        if a == b {
            return Ok(true);
        }
        Ok(self.score(a, b)? >= self.threshold)
    }
}

pub fn base_match(model: &MatchModel, a: &Record, b: &Record) -> Result<bool, MatchError> {
    model.base_match(a, b)
}

/// Adapts a symmetric predicate on base records into a [`BaseMatcher`];
/// identical records always match.
pub struct FnMatcher<F>(pub F);

impl<F> BaseMatcher for FnMatcher<F>
where
    F: Fn(&Record, &Record) -> bool,
{
    fn base_match(&self, a: &Record, b: &Record) -> Result<bool, MatchError> {
        require_base(a, b)?;
        Ok(a == b || (self.0)(a, b) || (self.0)(b, a))
    }
}

/// Resolves base ids to base records.
pub trait BaseLookup {
    fn lookup(&self, id: BaseId) -> Option<&Record>;
}

impl BaseLookup for HashMap<BaseId, Record> {
    fn lookup(&self, id: BaseId) -> Option<&Record> {
        self.get(&id)
    }
}

/// Borrowed index over a slice of base records.
#[derive(Clone, Debug, Default)]
pub struct BaseIndex<'a> {
    by_id: HashMap<BaseId, &'a Record>,
}

impl<'a> BaseIndex<'a> {
    pub fn new(records: &'a [Record]) -> Self {
        let by_id = records
            .iter()
            .filter_map(|r| r.base_id().map(|id| (id, r)))
            .collect();
        Self { by_id }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl BaseLookup for BaseIndex<'_> {
    fn lookup(&self, id: BaseId) -> Option<&Record> {
        self.by_id.get(&id).copied()
    }
}

/// Composite match: `o1 ≈ o2` iff some constituent base pair matches.
pub fn wrapper_match<M, L>(matcher: &M, o1: &Record, o2: &Record, lookup: &L) -> Result<bool, MatchError>
where
    M: BaseMatcher + ?Sized,
    L: BaseLookup + ?Sized,
{
    let resolve = |id: BaseId| lookup.lookup(id).ok_or(MatchError::UnknownBaseId(id));
    let right: Vec<&Record> = o2.base_ids().iter().map(|&id| resolve(id)).collect::<Result<_, _>>()?;
    for &id in o1.base_ids() {
        let a = resolve(id)?;
        for b in &right {
            if matcher.base_match(a, b)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Precomputed match scores for every pair of a fixed set of base records,
/// so threshold sweeps can re-resolve without re-featurizing.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    position: HashMap<BaseId, usize>,
    n: usize,
    scores: Vec<f64>,
}

impl ScoreTable {
    pub fn new(model: &MatchModel, records: &[Record]) -> Result<Self, MatchError> {
        let mut position = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let id = r.base_id().ok_or(MatchError::CompositeInput)?;
            position.insert(id, i);
        }
        let n = records.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| model.score(&records[i], &records[j]))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            position,
            n,
            scores: rows.into_iter().flatten().collect(),
        })
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// Score of two distinct base records in the table.
    pub fn score(&self, a: BaseId, b: BaseId) -> Result<f64, MatchError> {
        let i = *self.position.get(&a).ok_or(MatchError::UnknownBaseId(a))?;
        let j = *self.position.get(&b).ok_or(MatchError::UnknownBaseId(b))?;
        if i == j {
            return Ok(1.0);
        }
        Ok(self.scores[self.slot(i, j)])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of table pairs scoring at or above `threshold`.
    pub fn count_at_or_above(&self, threshold: f64) -> usize {
        self.scores.iter().filter(|&&s| s >= threshold).count()
    }

    pub fn matcher(&self, threshold: f64) -> TableMatcher<'_> {
        TableMatcher { table: self, threshold }
    }
}

/// [`BaseMatcher`] backed by a [`ScoreTable`]; agrees with the model at the
/// same threshold.
#[derive(Clone, Copy, Debug)]
pub struct TableMatcher<'a> {
    table: &'a ScoreTable,
    threshold: f64,
}

impl BaseMatcher for TableMatcher<'_> {
    fn base_match(&self, a: &Record, b: &Record) -> Result<bool, MatchError> {
        require_base(a, b)?;
        if a == b {
            return Ok(true);
        }
        let (ia, ib) = (a.min_base_id().unwrap(), b.min_base_id().unwrap());
        Ok(self.table.score(ia, ib)? >= self.threshold)
    }
}
