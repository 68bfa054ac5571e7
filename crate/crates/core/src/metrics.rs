//! Pair sets and pairwise precision / recall / F1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{BaseLookup, BaseMatcher, MatchError};
use crate::record::BaseId;
use crate::resolver::Clustering;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("self-pair ({0}, {0}) is not a record pair")]
    SelfPair(BaseId),
}

/// Set of unordered base-id pairs, stored canonically (`a < b`) and sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<(BaseId, BaseId)>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonicalizes and deduplicates; rejects self-pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (BaseId, BaseId)>,
    {
        let mut out = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(MetricsError::SelfPair(a));
            }
            out.push(if a < b { (a, b) } else { (b, a) });
        }
        Ok(Self::from_canonical(out))
    }

    fn from_canonical(mut pairs: Vec<(BaseId, BaseId)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: BaseId, b: BaseId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pairs.binary_search(&key).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BaseId, BaseId)> + '_ {
        self.pairs.iter().copied()
    }

    /// |self ∩ other| by a merge walk over both sorted lists.
    pub fn intersection_len(&self, other: &PairSet) -> usize {
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < self.pairs.len() && j < other.pairs.len() {
            match self.pairs[i].cmp(&other.pairs[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }
}

/// All within-cluster pairs of a clustering.
pub fn intra_cluster_pairs(c: &Clustering) -> PairSet {
    let mut pairs = Vec::with_capacity(c.num_intra_pairs() as usize);
    for rep in c.representatives() {
        let ids: Vec<BaseId> = rep.base_ids().iter().copied().collect();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                pairs.push((a, b));
            }
        }
    }
    PairSet::from_canonical(pairs)
}

/// |T_M|: number of within-cluster base pairs that directly match.
///
/// Only intra-cluster pairs are scanned. This is exact for resolutions where
/// every direct match ends up inside one cluster, which holds for both
/// resolvers in this crate.
pub fn count_direct_match_pairs<M, L>(c: &Clustering, matcher: &M, lookup: &L) -> Result<u64, MatchError>
where
    M: BaseMatcher + Sync + ?Sized,
    L: BaseLookup + Sync + ?Sized,
{
    c.representatives()
        .par_iter()
        .map(|rep| {
            let members = rep
                .base_ids()
                .iter()
                .map(|&id| lookup.lookup(id).ok_or(MatchError::UnknownBaseId(id)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut count = 0u64;
            for (k, a) in members.iter().enumerate() {
                for b in &members[k + 1..] {
                    if matcher.base_match(a, b)? {
                        count += 1;
                    }
                }
            }
            Ok(count)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: u64,
    pub truth: u64,
    pub intersection: u64,
}

impl PairMetrics {
    /// Empty predictions have precision 1 and empty truth has recall 1.
    pub fn from_counts(intersection: u64, predicted: u64, truth: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(intersection, predicted);
        let recall = ratio(intersection, truth);
        Self {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            predicted,
            truth,
            intersection,
        }
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn pair_metrics(predicted: &PairSet, truth: &PairSet) -> PairMetrics {
    PairMetrics::from_counts(
        predicted.intersection_len(truth) as u64,
        predicted.len() as u64,
        truth.len() as u64,
    )
}

/// Same result as `pair_metrics(&intra_cluster_pairs(c), truth)` without
/// materializing the predicted pairs. Truth pairs whose ids are outside the
/// clustering count as missed.
pub fn evaluate_clustering(c: &Clustering, truth: &PairSet) -> PairMetrics {
    let assignment = c.assignment();
    let hits = truth
        .iter()
        .filter(|(a, b)| match (assignment.get(a), assignment.get(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        })
        .count();
    PairMetrics::from_counts(hits as u64, c.num_intra_pairs(), truth.len() as u64)
}
