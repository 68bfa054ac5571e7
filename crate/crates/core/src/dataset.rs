//! Datasets, gold truth, synthetic generation, CSV I/O and the
//! train / validation / test splitting protocol.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::PairSet;
use crate::record::{BaseId, FeatureSchema, Record, Value, ValueSet};
use crate::resolver::UnionFind;

/// Separator for multi-valued CSV cells.
pub const MULTI_VALUE_SEPARATOR: char = '|';

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing `id` column")]
    MissingIdColumn,
    #[error("header does not match schema: {0}")]
    HeaderMismatch(String),
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: empty id")]
    EmptyId { row: usize },
    #[error("row {row}, feature `{feature}`: {message}")]
    Kind {
        row: usize,
        feature: String,
        message: String,
    },
    #[error("row {row}: unknown record id `{id}`")]
    UnknownId { row: usize, id: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("invalid split spec: {0}")]
    BadSpec(String),
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Base records with their external identifiers. `records[i]` has base id
/// `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<Record>,
    names: Vec<String>,
    by_name: HashMap<String, BaseId>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema) -> Self {
        Self {
            schema,
            records: Vec::new(),
            names: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Appends a base record; returns `None` if the name is taken.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<ValueSet>) -> Option<BaseId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return None;
        }
        let id = BaseId(self.records.len() as u32);
        self.records.push(Record::base(id, values));
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        Some(id)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: BaseId) -> Option<&Record> {
        self.records.get(id.index())
    }

    pub fn name(&self, id: BaseId) -> &str {
        &self.names[id.index()]
    }

    pub fn id_of(&self, name: &str) -> Option<BaseId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = BaseId> + '_ {
        (0..self.records.len()).map(|i| BaseId(i as u32))
    }

    /// Records for `ids`, in the given order.
    pub fn select(&self, ids: &[BaseId]) -> Vec<Record> {
        ids.iter().map(|&id| self.records[id.index()].clone()).collect()
    }

    /// New dataset holding only `ids`, renumbered densely in the given order.
    pub fn subset(&self, ids: &[BaseId]) -> Dataset {
        let mut out = Dataset::new(self.schema.clone());
        for &id in ids {
            out.push(self.name(id), self.records[id.index()].values().to_vec());
        }
        out
    }
}

/// Entity labels (or proxy keys) for some of a dataset's base ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldTruth {
    labels: BTreeMap<BaseId, String>,
}

impl GoldTruth {
    pub fn new(labels: BTreeMap<BaseId, String>) -> Self {
        Self { labels }
    }

    pub fn label(&self, id: BaseId) -> Option<&str> {
        self.labels.get(&id).map(String::as_str)
    }

    pub fn labels(&self) -> &BTreeMap<BaseId, String> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Whether both ids are labeled with the same entity.
    pub fn same_entity(&self, a: BaseId, b: BaseId) -> bool {
        matches!((self.labels.get(&a), self.labels.get(&b)), (Some(x), Some(y)) if x == y)
    }

    /// Ids grouped by label, in label order.
    pub fn groups(&self) -> BTreeMap<&str, Vec<BaseId>> {
        let mut groups: BTreeMap<&str, Vec<BaseId>> = BTreeMap::new();
        for (&id, label) in &self.labels {
            groups.entry(label.as_str()).or_default().push(id);
        }
        groups
    }

    /// All same-label pairs.
    pub fn truth_pairs(&self) -> PairSet {
        let mut pairs = Vec::new();
        for members in self.groups().values() {
            for (k, &a) in members.iter().enumerate() {
                for &b in &members[k + 1..] {
                    pairs.push((a, b));
                }
            }
        }
        PairSet::from_pairs(pairs).expect("groups hold distinct ids")
    }

    pub fn restrict(&self, ids: &[BaseId]) -> GoldTruth {
        let keep: HashSet<BaseId> = ids.iter().copied().collect();
        GoldTruth {
            labels: self
                .labels
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(&id, l)| (id, l.clone()))
                .collect(),
        }
    }

    /// Proxy truth from a feature: records sharing any value of it belong to
    /// the same entity (transitively). Records missing the feature stay
    /// unlabeled.
    pub fn from_proxy_feature(dataset: &Dataset, feature: &str) -> Result<GoldTruth, DataError> {
        let slot = dataset
            .schema()
            .position(feature)
            .ok_or_else(|| DataError::HeaderMismatch(format!("no feature named `{feature}`")))?;
        let keys = dataset
            .records()
            .iter()
            .map(|r| r.feature(slot).iter().map(Value::to_string).collect());
        Ok(proxy_labels(dataset.ids().zip(keys)))
    }
}

fn proxy_labels(keyed: impl IntoIterator<Item = (BaseId, Vec<String>)>) -> GoldTruth {
    let keyed: Vec<(BaseId, Vec<String>)> = keyed.into_iter().filter(|(_, k)| !k.is_empty()).collect();
    let mut key_index: HashMap<&str, usize> = HashMap::new();
    for (_, keys) in &keyed {
        for k in keys {
            let next = key_index.len();
            key_index.entry(k.as_str()).or_insert(next);
        }
    }
    let mut sets = UnionFind::new(key_index.len());
    for (_, keys) in &keyed {
        for w in keys.windows(2) {
            sets.union(key_index[w[0].as_str()], key_index[w[1].as_str()]);
        }
    }
    // label each component by its smallest key so labels are deterministic
    let mut root_label: HashMap<usize, &str> = HashMap::new();
    for (&k, &i) in &key_index {
        let root = sets.find(i);
        let entry = root_label.entry(root).or_insert(k);
        if k < *entry {
            *entry = k;
        }
    }
    let labels = keyed
        .iter()
        .map(|(id, keys)| (*id, root_label[&sets.find(key_index[keys[0].as_str()])].to_string()))
        .collect();
    GoldTruth { labels }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_entities: usize,
    pub records_per_entity: usize,
    pub dims: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_entities: 100,
            records_per_entity: 10,
            dims: 10,
            noise_sigma: 0.03,
            seed: 0,
        }
    }
}

/// Uniform latent vector per entity plus isotropic Gaussian noise per record.
pub fn generate_synthetic(config: &SyntheticConfig) -> (Dataset, GoldTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).expect("finite sigma");
    let n = config.n_entities * config.records_per_entity;
    let width = n.saturating_sub(1).to_string().len().max(4);
    let entity_width = config.n_entities.saturating_sub(1).to_string().len().max(3);
    let mut dataset = Dataset::new(FeatureSchema::numeric(config.dims));
    let mut labels = BTreeMap::new();
    for e in 0..config.n_entities {
        let latent: Vec<f64> = (0..config.dims).map(|_| rng.random::<f64>()).collect();
        for _ in 0..config.records_per_entity {
            let values = latent
                .iter()
                .map(|&x| {
                    let jitter = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    ValueSet::from([Value::number(x + jitter)])
                })
                .collect();
            let name = format!("r{:0width$}", dataset.len());
            let id = dataset.push(name, values).expect("generated names are unique");
            labels.insert(id, format!("e{e:0entity_width$}"));
        }
    }
    (dataset, GoldTruth { labels })
}

fn split_cell(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(MULTI_VALUE_SEPARATOR).filter(|part| !part.trim().is_empty())
}

pub fn read_records_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset, DataError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let columns: Vec<&str> = header.iter().collect();
    let id_col = columns.iter().position(|c| *c == "id").ok_or(DataError::MissingIdColumn)?;
    let mut slot_of_column = vec![None; columns.len()];
    let mut seen = vec![false; schema.len()];
    for (col, name) in columns.iter().enumerate() {
        if col == id_col {
            continue;
        }
        let slot = schema
            .position(name)
            .ok_or_else(|| DataError::HeaderMismatch(format!("unexpected column `{name}`")))?;
        if seen[slot] {
            return Err(DataError::HeaderMismatch(format!("column `{name}` repeated")));
        }
        seen[slot] = true;
        slot_of_column[col] = Some(slot);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(DataError::HeaderMismatch(format!(
            "missing column `{}`",
            schema.features()[missing].name
        )));
    }

    let mut dataset = Dataset::new(schema.clone());
    for (i, row) in csv.records().enumerate() {
        let row_number = i + 2;
        let row = row?;
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(DataError::EmptyId { row: row_number });
        }
        let mut values = vec![ValueSet::new(); schema.len()];
        for (col, cell) in row.iter().enumerate() {
            let Some(slot) = slot_of_column.get(col).copied().flatten() else {
                continue;
            };
            let feature = &schema.features()[slot];
            for part in split_cell(cell) {
                let value = Value::parse(feature.kind, part).map_err(|message| DataError::Kind {
                    row: row_number,
                    feature: feature.name.clone(),
                    message,
                })?;
                values[slot].insert(value);
            }
        }
        if dataset.push(id.clone(), values).is_none() {
            return Err(DataError::DuplicateId { row: row_number, id });
        }
    }
    Ok(dataset)
}

pub fn load_records_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_records_csv(file, schema)
}

fn join_values(set: &ValueSet) -> String {
    set.iter()
        .map(Value::to_string)
        .collect::<Vec<_>>()
        .join(&MULTI_VALUE_SEPARATOR.to_string())
}

pub fn write_records_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DataError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(dataset.schema().features().iter().map(|f| f.name.clone()));
    csv.write_record(&header)?;
    for id in dataset.ids() {
        let record = &dataset.records()[id.index()];
        let mut row = vec![dataset.name(id).to_string()];
        row.extend(record.values().iter().map(join_values));
        csv.write_record(&row)?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldMode {
    /// Every row names the record's entity.
    ClusterLabels,
    /// Rows carry proxy keys: empty means unlabeled, several `|`-separated
    /// keys link their entities.
    ProxyKey,
}

pub fn read_gold_csv<R: Read>(reader: R, dataset: &Dataset, mode: GoldMode) -> Result<GoldTruth, DataError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let id_col = header.iter().position(|c| c == "id").ok_or(DataError::MissingIdColumn)?;
    let label_col = header
        .iter()
        .position(|c| c == "label")
        .ok_or_else(|| DataError::HeaderMismatch("missing `label` column".into()))?;
    let mut keyed = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in csv.records().enumerate() {
        let row_number = i + 2;
        let row = row?;
        let name = row.get(id_col).unwrap_or("").trim();
        let id = dataset.id_of(name).ok_or_else(|| DataError::UnknownId {
            row: row_number,
            id: name.to_string(),
        })?;
        if !seen.insert(id) {
            return Err(DataError::DuplicateId {
                row: row_number,
                id: name.to_string(),
            });
        }
        let cell = row.get(label_col).unwrap_or("").trim();
        match mode {
            GoldMode::ClusterLabels => {
                if cell.is_empty() {
                    return Err(DataError::BadRow {
                        row: row_number,
                        message: "empty cluster label".into(),
                    });
                }
                keyed.push((id, vec![cell.to_string()]));
            }
            GoldMode::ProxyKey => {
                let keys: Vec<String> = split_cell(cell).map(|k| k.trim().to_string()).collect();
                keyed.push((id, keys));
            }
        }
    }
    Ok(match mode {
        GoldMode::ClusterLabels => GoldTruth {
            labels: keyed.into_iter().map(|(id, mut k)| (id, k.remove(0))).collect(),
        },
        GoldMode::ProxyKey => proxy_labels(keyed),
    })
}

pub fn load_gold(path: &Path, dataset: &Dataset, mode: GoldMode) -> Result<GoldTruth, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_gold_csv(file, dataset, mode)
}

pub fn write_gold_csv<W: Write>(writer: W, dataset: &Dataset, gold: &GoldTruth) -> Result<(), DataError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["id", "label"])?;
    for (&id, label) in gold.labels() {
        csv.write_record([dataset.name(id), label.as_str()])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A labeled record pair, `label == true` for a match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub a: BaseId,
    pub b: BaseId,
    pub label: bool,
}

pub fn write_labeled_pairs_csv<W: Write>(writer: W, dataset: &Dataset, pairs: &[LabeledPair]) -> Result<(), DataError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["id_a", "id_b", "label"])?;
    for p in pairs {
        csv.write_record([dataset.name(p.a), dataset.name(p.b), if p.label { "1" } else { "0" }])?;
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_labeled_pairs_csv<R: Read>(reader: R, dataset: &Dataset) -> Result<Vec<LabeledPair>, DataError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::HeaderMismatch(format!("missing `{name}` column")))
    };
    let (ca, cb, cl) = (col("id_a")?, col("id_b")?, col("label")?);
    let mut out = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row_number = i + 2;
        let row = row?;
        let resolve = |c: usize| {
            let name = row.get(c).unwrap_or("").trim();
            dataset.id_of(name).ok_or_else(|| DataError::UnknownId {
                row: row_number,
                id: name.to_string(),
            })
        };
        let (a, b) = (resolve(ca)?, resolve(cb)?);
        let label = match row.get(cl).unwrap_or("").trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(DataError::BadRow {
                    row: row_number,
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        };
        if a == b {
            return Err(DataError::BadRow {
                row: row_number,
                message: "pair of a record with itself".into(),
            });
        }
        out.push(LabeledPair { a, b, label });
    }
    Ok(out)
}

pub fn load_labeled_pairs(path: &Path, dataset: &Dataset) -> Result<Vec<LabeledPair>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_labeled_pairs_csv(file, dataset)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train_pairs: usize,
    pub n_validation_pairs: usize,
    pub positive_fraction_train: f64,
    pub positive_fraction_validation: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_train_pairs: 100,
            n_validation_pairs: 100,
            positive_fraction_train: 0.5,
            positive_fraction_validation: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn positives(n: usize, fraction: f64) -> usize {
        (n as f64 * fraction).round() as usize
    }

    pub fn train_positives(&self) -> usize {
        Self::positives(self.n_train_pairs, self.positive_fraction_train)
    }

    pub fn validation_positives(&self) -> usize {
        Self::positives(self.n_validation_pairs, self.positive_fraction_validation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train_pairs: Vec<LabeledPair>,
    pub validation_pairs: Vec<LabeledPair>,
    /// Records not used by any labeled pair, in id order.
    pub test_ids: Vec<BaseId>,
    pub test_gold: GoldTruth,
}

/// Samples labeled training and validation pairs without replacement and
/// leaves every record they touch out of the test set.
///
/// Positives are drawn from the gold truth pairs; negatives from pairs of
/// labeled records with different labels.
pub fn split_dataset(dataset: &Dataset, gold: &GoldTruth, spec: &SplitSpec) -> Result<Split, DataError> {
    for (name, f) in [
        ("positive_fraction_train", spec.positive_fraction_train),
        ("positive_fraction_validation", spec.positive_fraction_validation),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(DataError::BadSpec(format!("{name} = {f} is outside (0, 1)")));
        }
    }
    let (train_pos, val_pos) = (spec.train_positives(), spec.validation_positives());
    let train_neg = spec.n_train_pairs - train_pos;
    let val_neg = spec.n_validation_pairs - val_pos;

    let truth: Vec<(BaseId, BaseId)> = gold.truth_pairs().iter().collect();
    let labeled: Vec<BaseId> = gold.labels().keys().copied().collect();
    let all_pairs = labeled.len() * labeled.len().saturating_sub(1) / 2;
    let available_neg = all_pairs - truth.len();
    let (need_pos, need_neg) = (train_pos + val_pos, train_neg + val_neg);
    if need_pos > truth.len() || need_neg > available_neg {
        return Err(DataError::InfeasibleSplit(format!(
            "requested {need_pos} positive and {need_neg} negative pairs; {} positive and {available_neg} negative available",
            truth.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut positives: Vec<(BaseId, BaseId)> = index::sample(&mut rng, truth.len(), need_pos)
        .into_iter()
        .map(|i| truth[i])
        .collect();
    positives.shuffle(&mut rng);
    let negatives = sample_negatives(&mut rng, gold, &labeled, need_neg, available_neg);

    let to_pairs = |pairs: &[(BaseId, BaseId)], label: bool| -> Vec<LabeledPair> {
        pairs.iter().map(|&(a, b)| LabeledPair { a, b, label }).collect()
    };
    let mut train_pairs = to_pairs(&positives[..train_pos], true);
    train_pairs.extend(to_pairs(&negatives[..train_neg], false));
    let mut validation_pairs = to_pairs(&positives[train_pos..], true);
    validation_pairs.extend(to_pairs(&negatives[train_neg..], false));
    train_pairs.shuffle(&mut rng);
    validation_pairs.shuffle(&mut rng);

    let used: HashSet<BaseId> = train_pairs
        .iter()
        .chain(&validation_pairs)
        .flat_map(|p| [p.a, p.b])
        .collect();
    let test_ids: Vec<BaseId> = dataset.ids().filter(|id| !used.contains(id)).collect();
    let test_gold = gold.restrict(&test_ids);
    Ok(Split {
        train_pairs,
        validation_pairs,
        test_ids,
        test_gold,
    })
}

fn sample_negatives(
    rng: &mut ChaCha8Rng,
    gold: &GoldTruth,
    labeled: &[BaseId],
    need: usize,
    available: usize,
) -> Vec<(BaseId, BaseId)> {
    if need == 0 {
        return Vec::new();
    }
    if available <= 4 * need {
        let mut all = Vec::with_capacity(available);
        for (k, &a) in labeled.iter().enumerate() {
            for &b in &labeled[k + 1..] {
                if !gold.same_entity(a, b) {
                    all.push((a, b));
                }
            }
        }
        return index::sample(rng, all.len(), need).into_iter().map(|i| all[i]).collect();
    }
    // rejection sampling: at least three quarters of draws are usable
    let mut chosen = Vec::with_capacity(need);
    let mut seen = HashSet::with_capacity(need);
    while chosen.len() < need {
        let i = rng.random_range(0..labeled.len());
        let j = rng.random_range(0..labeled.len());
        if i == j {
            continue;
        }
        let (a, b) = (labeled[i.min(j)], labeled[i.max(j)]);
        if !gold.same_entity(a, b) && seen.insert((a, b)) {
            chosen.push((a, b));
        }
    }
    chosen
}
