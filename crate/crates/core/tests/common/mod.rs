#![allow(dead_code)]

use std::collections::BTreeSet;

use er_bounds::matching::{FnMatcher, MatchModel, Standardization};
use er_bounds::record::{Feature, ValueSet};
use er_bounds::{BaseId, FeatureKind, FeatureSchema, Record, Value};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::new("name", FeatureKind::Text),
        Feature::new("city", FeatureKind::Categorical),
        Feature::new("age", FeatureKind::Numeric),
    ])
    .unwrap()
}

const NAMES: [&str; 7] = ["john", "jon", "joan", "jane", "j.", "doe", "jahn"];
const CITIES: [&str; 3] = ["austin", "boston", "denver"];

fn slot<R: Rng>(rng: &mut R, mut draw: impl FnMut(&mut R) -> Value) -> ValueSet {
    let roll: f64 = rng.random();
    if roll < 0.15 {
        ValueSet::new()
    } else if roll < 0.25 {
        ValueSet::from([draw(rng), draw(rng)])
    } else {
        ValueSet::from([draw(rng)])
    }
}

/// Base records over `mixed_schema` with ids `0..n`, some slots missing or
/// multi-valued.
pub fn random_records<R: Rng>(rng: &mut R, n: usize) -> Vec<Record> {
    (0..n)
        .map(|i| {
            let values = vec![
                slot(rng, |r| Value::text(NAMES[r.random_range(0..NAMES.len())])),
                slot(rng, |r| Value::text(CITIES[r.random_range(0..CITIES.len())])),
                slot(rng, |r| Value::number(r.random_range(20..30) as f64)),
            ];
            Record::base(BaseId(i as u32), values)
        })
        .collect()
}

/// Logistic model with random weights on unstandardized features.
pub fn random_model<R: Rng>(rng: &mut R, schema: &FeatureSchema) -> MatchModel {
    let dims = 2 * schema.len();
    let weights = (0..dims).map(|_| rng.random_range(-3.0..3.0)).collect();
    let standardization = vec![Standardization { mean: 0.0, scale: 1.0 }; dims];
    let threshold = rng.random_range(0.05..0.95);
    MatchModel::new(schema.clone(), weights, rng.random_range(-1.0..1.0), standardization, threshold).unwrap()
}

/// Value-less base records `0..n`.
pub fn plain(n: usize) -> Vec<Record> {
    (0..n).map(|i| Record::base(BaseId(i as u32), vec![])).collect()
}

pub fn random_adjacency<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    adj
}

pub fn graph_matcher(adj: &[Vec<bool>]) -> FnMatcher<impl Fn(&Record, &Record) -> bool + Sync + '_> {
    FnMatcher(move |a: &Record, b: &Record| {
        let (i, j) = (a.base_id().unwrap().index(), b.base_id().unwrap().index());
        adj[i][j]
    })
}

/// Partition of `0..n` from the reflexive-transitive closure of `adj`
/// (Warshall's algorithm), each group sorted, groups sorted.
pub fn closure_partition(adj: &[Vec<bool>]) -> Vec<Vec<BaseId>> {
    let n = adj.len();
    let mut reach: Vec<Vec<bool>> = adj.to_vec();
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let groups: BTreeSet<Vec<BaseId>> = (0..n)
        .map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| BaseId(j as u32)).collect())
        .collect();
    groups.into_iter().collect()
}

pub fn shuffled<R: Rng>(rng: &mut R, records: &[Record]) -> Vec<Record> {
    let mut out = records.to_vec();
    out.shuffle(rng);
    out
}
