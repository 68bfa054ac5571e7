//! Resolution engines: R-Swoosh match/merge and union-find connected
//! components.
//!
//! With the set-union merge and the max-over-constituents wrapper match both
//! engines produce the same partition; the connected-components engine is the
//! one used at scale.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::matching::{wrapper_match, BaseIndex, BaseMatcher, MatchError};
use crate::record::{merge_records, BaseId, Record, RecordError, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolveError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("base id {0} appears in more than one cluster")]
    Overlap(BaseId),
    #[error("cluster without base ids")]
    EmptyCluster,
    #[error("feature index {0} out of range for candidate filter")]
    BadFilter(usize),
}

/// Partition of base ids, one merged representative record per cluster.
/// Clusters are ordered by their smallest base id.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    clusters: Vec<Record>,
}

impl Clustering {
    pub fn from_representatives(mut clusters: Vec<Record>) -> Result<Self, ResolveError> {
        let mut seen = BTreeSet::new();
        for c in &clusters {
            if c.base_ids().is_empty() {
                return Err(ResolveError::EmptyCluster);
            }
            for &id in c.base_ids() {
                if !seen.insert(id) {
                    return Err(ResolveError::Overlap(id));
                }
            }
        }
        clusters.sort_by_key(|c| c.min_base_id());
        Ok(Self { clusters })
    }

    /// Clustering from explicit id groups, with placeholder representatives
    /// carrying no feature values.
    pub fn from_groups<I, G>(groups: I) -> Result<Self, ResolveError>
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = BaseId>,
    {
        let reps = groups
            .into_iter()
            .map(|g| Record::new(g.into_iter().collect(), Vec::new()))
            .collect();
        Self::from_representatives(reps)
    }

    pub fn representatives(&self) -> &[Record] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_records(&self) -> usize {
        self.clusters.iter().map(|c| c.base_ids().len()).sum()
    }

    /// The partition as sorted id lists, ordered by smallest member.
    pub fn partition(&self) -> Vec<Vec<BaseId>> {
        self.clusters
            .iter()
            .map(|c| c.base_ids().iter().copied().collect())
            .collect()
    }

    /// Maps every base id to the index of its cluster.
    pub fn assignment(&self) -> HashMap<BaseId, usize> {
        let mut out = HashMap::with_capacity(self.num_records());
        for (k, c) in self.clusters.iter().enumerate() {
            for &id in c.base_ids() {
                out.insert(id, k);
            }
        }
        out
    }

    /// Σ n_i (n_i − 1) / 2 over clusters.
    pub fn num_intra_pairs(&self) -> u64 {
        self.clusters
            .iter()
            .map(|c| {
                let n = c.base_ids().len() as u64;
                n * n.saturating_sub(1) / 2
            })
            .sum()
    }
}

/// R-Swoosh over arbitrary match and merge functions.
///
/// Records are taken from the front of a work queue and compared with every
/// resolved record; the first match is removed from the resolved set, merged
/// with the current record, and the result is queued again.
pub fn resolve_rswoosh<M, G>(records: &[Record], mut matches: M, mut merge: G) -> Result<Clustering, ResolveError>
where
    M: FnMut(&Record, &Record) -> Result<bool, MatchError>,
    G: FnMut(&Record, &Record) -> Result<Record, RecordError>,
{
    let mut pending: VecDeque<Record> = records.iter().cloned().collect();
    let mut resolved: Vec<Record> = Vec::new();
    while let Some(current) = pending.pop_front() {
        let mut buddy = None;
        for (k, candidate) in resolved.iter().enumerate() {
            if matches(&current, candidate)? {
                buddy = Some(k);
                break;
            }
        }
        match buddy {
            Some(k) => {
                let partner = resolved.swap_remove(k);
                pending.push_back(merge(&current, &partner)?);
            }
            None => resolved.push(current),
        }
    }
    Clustering::from_representatives(resolved)
}

/// R-Swoosh with the set-union merge and the wrapper match built on
/// `matcher`.
pub fn resolve_rswoosh_wrapped<M>(records: &[Record], matcher: &M) -> Result<Clustering, ResolveError>
where
    M: BaseMatcher + ?Sized,
{
    let lookup = BaseIndex::new(records);
    resolve_rswoosh(
        records,
        |a, b| wrapper_match(matcher, a, b, &lookup),
        merge_records,
    )
}

/// Disjoint sets with path compression and union by rank.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Returns true if the two nodes were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
        true
    }
}

/// Which record pairs the connected-components resolver scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Candidates {
    /// Every pair.
    #[default]
    Exhaustive,
    /// Only pairs sharing at least one value of the given feature.
    SharedValue(usize),
}

/// Connected components of the direct-match graph over base records.
pub fn resolve_connected_components<M>(records: &[Record], matcher: &M) -> Result<Clustering, ResolveError>
where
    M: BaseMatcher + Sync + ?Sized,
{
    resolve_connected_components_with(records, matcher, Candidates::Exhaustive)
}

pub fn resolve_connected_components_with<M>(
    records: &[Record],
    matcher: &M,
    candidates: Candidates,
) -> Result<Clustering, ResolveError>
where
    M: BaseMatcher + Sync + ?Sized,
{
    let n = records.len();
    let edges: Vec<(usize, usize)> = match candidates {
        Candidates::Exhaustive => {
            let rows: Vec<Vec<(usize, usize)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut row = Vec::new();
                    for j in (i + 1)..n {
                        if matcher.base_match(&records[i], &records[j])? {
                            row.push((i, j));
                        }
                    }
                    Ok(row)
                })
                .collect::<Result<_, MatchError>>()?;
            rows.into_iter().flatten().collect()
        }
        Candidates::SharedValue(feature) => {
            let pairs = blocked_pairs(records, feature)?;
            let keep = pairs
                .par_iter()
                .map(|&(i, j)| matcher.base_match(&records[i], &records[j]))
                .collect::<Result<Vec<bool>, _>>()?;
            pairs.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
        }
    };

    let mut sets = UnionFind::new(n);
    for (i, j) in edges {
        sets.union(i, j);
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        components.entry(sets.find(i)).or_default().push(i);
    }
    let mut reps = Vec::with_capacity(components.len());
    for members in components.into_values() {
        let mut rep = records[members[0]].clone();
        for &m in &members[1..] {
            rep = merge_records(&rep, &records[m])?;
        }
        reps.push(rep);
    }
    Clustering::from_representatives(reps)
}

fn blocked_pairs(records: &[Record], feature: usize) -> Result<Vec<(usize, usize)>, ResolveError> {
    let mut buckets: BTreeMap<&Value, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let values = r.values().get(feature).ok_or(ResolveError::BadFilter(feature))?;
        for v in values {
            buckets.entry(v).or_default().push(i);
        }
    }
    let mut pairs = Vec::new();
    for members in buckets.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}
