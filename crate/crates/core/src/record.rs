//! Records, feature schemas and the set-union merge.
//!
//! A [`Record`] is a bundle of per-feature value *sets* together with the
//! provenance of the base records it was built from. Base records carry a
//! single base id; composite records are produced by [`merge_records`], which
//! takes the union of both provenance and value sets. Union is commutative,
//! associative and idempotent, so the order in which a resolver merges records
//! never changes the result.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a base (unmerged) record inside a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseId(pub u32);

impl BaseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Compared by exact (canonical) equality.
    Categorical,
    /// Compared by absolute difference.
    Numeric,
    /// Compared by normalized edit distance.
    Text,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureKind::Categorical => "categorical",
            FeatureKind::Numeric => "numeric",
            FeatureKind::Text => "text",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered list of features. Featurization and serialization both depend on
/// the order, so it is preserved verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct RawSchema {
    features: Vec<Feature>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = RecordError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        FeatureSchema::new(raw.features)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self, RecordError> {
        let mut seen = HashSet::new();
        for feature in &features {
            if feature.name.trim().is_empty() {
                return Err(RecordError::EmptyFeatureName);
            }
            if feature.name == "id" {
                return Err(RecordError::ReservedFeatureName);
            }
            if !seen.insert(feature.name.as_str()) {
                return Err(RecordError::DuplicateFeature(feature.name.clone()));
            }
        }
        Ok(Self { features })
    }

    /// Schema of `dims` numeric features named `x0..x{dims-1}`.
    pub fn numeric(dims: usize) -> Self {
        let features = (0..dims)
            .map(|i| Feature::new(format!("x{i}"), FeatureKind::Numeric))
            .collect();
        Self { features }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// An atomic feature value.
///
/// Text values are stored trimmed and case-folded, numbers as finite `f64`
/// with `-0.0` folded into `0.0`, so that derived equality is the canonical
/// equality used by the merge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Value {
    Str(String),
    Num(f64),
}

impl Value {
    pub fn text(raw: &str) -> Self {
        Value::Str(canonical_text(raw))
    }

    pub fn number(x: f64) -> Self {
        Value::Num(if x == 0.0 { 0.0 } else { x })
    }

    /// Parses a raw cell for a feature of `kind`.
    pub fn parse(kind: FeatureKind, raw: &str) -> Result<Self, String> {
        match kind {
            FeatureKind::Categorical | FeatureKind::Text => Ok(Value::text(raw)),
            FeatureKind::Numeric => {
                let trimmed = raw.trim();
                let x: f64 = trimmed
                    .parse()
                    .map_err(|_| format!("`{trimmed}` is not a number"))?;
                if !x.is_finite() {
                    return Err(format!("`{trimmed}` is not finite"));
                }
                Ok(Value::number(x))
            }
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Str(_) => None,
        }
    }

    /// Whether the value may be stored in a feature of `kind`.
    pub fn conforms_to(&self, kind: FeatureKind) -> bool {
        matches!(
            (self, kind),
            (Value::Str(_), FeatureKind::Categorical | FeatureKind::Text)
                | (Value::Num(_), FeatureKind::Numeric)
        )
    }

    fn variant_rank(&self) -> u8 {
        match self {
            Value::Str(_) => 0,
            Value::Num(_) => 1,
        }
    }
}

fn canonical_text(raw: &str) -> String {
    raw.trim().to_lowercase()
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            _ => self.variant_rank().cmp(&other.variant_rank()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Num(x) => write!(f, "{x}"),
        }
    }
}

pub type ValueSet = BTreeSet<Value>;

/// A base or composite record. An empty value set means the feature is
/// missing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    base_ids: BTreeSet<BaseId>,
    values: Vec<ValueSet>,
}

impl Record {
    /// Builds a record without checking it against a schema; see
    /// [`validate_record`].
    pub fn new(base_ids: BTreeSet<BaseId>, values: Vec<ValueSet>) -> Self {
        Self { base_ids, values }
    }

    pub fn base(id: BaseId, values: Vec<ValueSet>) -> Self {
        Self {
            base_ids: BTreeSet::from([id]),
            values,
        }
    }

    /// Base record with at most one value per feature; `None` is missing.
    pub fn from_single_values(id: BaseId, values: impl IntoIterator<Item = Option<Value>>) -> Self {
        let values = values
            .into_iter()
            .map(|v| v.into_iter().collect())
            .collect();
        Self::base(id, values)
    }

    pub fn base_ids(&self) -> &BTreeSet<BaseId> {
        &self.base_ids
    }

    pub fn values(&self) -> &[ValueSet] {
        &self.values
    }

    pub fn feature(&self, index: usize) -> &ValueSet {
        &self.values[index]
    }

    pub fn is_base(&self) -> bool {
        self.base_ids.len() == 1
    }

    /// The single base id of a base record.
    pub fn base_id(&self) -> Option<BaseId> {
        if self.is_base() {
            self.base_ids.first().copied()
        } else {
            None
        }
    }

    /// Smallest constituent base id.
    pub fn min_base_id(&self) -> Option<BaseId> {
        self.base_ids.first().copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("feature names must be nonempty")]
    EmptyFeatureName,
    #[error("`id` is reserved for the record identifier column")]
    ReservedFeatureName,
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("records disagree on schema: {0}")]
    SchemaMismatch(String),
}

/// Set-union merge: provenance and every feature's value set are unioned.
pub fn merge_records(o1: &Record, o2: &Record) -> Result<Record, RecordError> {
    if o1.values.len() != o2.values.len() {
        return Err(RecordError::SchemaMismatch(format!(
            "{} features vs {} features",
            o1.values.len(),
            o2.values.len()
        )));
    }
    let mut values = Vec::with_capacity(o1.values.len());
    for (slot, (a, b)) in o1.values.iter().zip(&o2.values).enumerate() {
        let kinds = |set: &ValueSet| set.first().map(Value::variant_rank);
        if let (Some(ka), Some(kb)) = (kinds(a), kinds(b)) {
            if ka != kb {
                return Err(RecordError::SchemaMismatch(format!(
                    "feature {slot} holds values of different kinds"
                )));
            }
        }
        values.push(a.union(b).cloned().collect());
    }
    Ok(Record {
        base_ids: o1.base_ids.union(&o2.base_ids).copied().collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyBaseIds,
    ArityMismatch { expected: usize, found: usize },
    KindMismatch { feature: String, kind: FeatureKind, value: String },
    NonFinite { feature: String },
    NotCanonical { feature: String, value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyBaseIds => write!(f, "record has no base ids"),
            Violation::ArityMismatch { expected, found } => {
                write!(f, "expected {expected} features, found {found}")
            }
            Violation::KindMismatch { feature, kind, value } => {
                write!(f, "feature `{feature}` is {kind} but holds `{value}`")
            }
            Violation::NonFinite { feature } => {
                write!(f, "feature `{feature}` holds a non-finite number")
            }
            Violation::NotCanonical { feature, value } => {
                write!(f, "feature `{feature}` holds non-canonical text `{value}`")
            }
        }
    }
}

/// Checks a record against `schema`, returning every violation found.
pub fn validate_record(r: &Record, schema: &FeatureSchema) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if r.base_ids.is_empty() {
        violations.push(Violation::EmptyBaseIds);
    }
    if r.values.len() != schema.len() {
        violations.push(Violation::ArityMismatch {
            expected: schema.len(),
            found: r.values.len(),
        });
    }
    for (feature, set) in schema.features().iter().zip(&r.values) {
        for value in set {
            if !value.conforms_to(feature.kind) {
                violations.push(Violation::KindMismatch {
                    feature: feature.name.clone(),
                    kind: feature.kind,
                    value: value.to_string(),
                });
                continue;
            }
            match value {
                Value::Num(x) if !x.is_finite() => violations.push(Violation::NonFinite {
                    feature: feature.name.clone(),
                }),
                Value::Str(s) if *s != canonical_text(s) => {
                    violations.push(Violation::NotCanonical {
                        feature: feature.name.clone(),
                        value: s.clone(),
                    })
                }
                _ => {}
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
