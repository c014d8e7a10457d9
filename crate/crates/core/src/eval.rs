//! Train/test splitting of ground-truth pairs and Hit-Precision@k.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::corpus::MatchedPairs;
use crate::error::{Error, Result};
use crate::matcher::MatchRanking;
use crate::sampling;

pub use crate::pipeline::{run_experiment, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Draws disjoint uniform-random train and test subsets.
pub fn split_pairs(all: &MatchedPairs, spec: &SplitSpec) -> Result<(MatchedPairs, MatchedPairs)> {
    let wanted = spec.n_train + spec.n_test;
    if wanted > all.len() {
        return Err(Error::InsufficientPairs {
            requested: wanted,
            available: all.len(),
        });
    }
    let mut shuffled = all.pairs().to_vec();
    shuffled.shuffle(&mut sampling::rng(spec.seed));
    let test = shuffled.split_off(spec.n_train);
    let test = test[..spec.n_test].to_vec();
    Ok((MatchedPairs::new(shuffled)?, MatchedPairs::new(test)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub hit_precision: f64,
    pub top_k: usize,
    pub per_query: Vec<f64>,
}

/// Score of one query whose counterpart sits at 1-based `position` (or was
/// not ranked): `(k − (pos − 1)) / k` inside the top k, else 0.
pub fn hit_score(position: Option<usize>, top_k: usize) -> f64 {
    match position {
        Some(pos) if pos >= 1 && pos <= top_k => (top_k - (pos - 1)) as f64 / top_k as f64,
        _ => 0.0,
    }
}

/// Mean Hit-Precision@k over the truth pairs, in truth order.
pub fn hit_precision(rankings: &[MatchRanking], truth: &MatchedPairs, top_k: usize) -> Result<MetricReport> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    let by_query: HashMap<usize, &MatchRanking> = rankings.iter().map(|r| (r.query, r)).collect();
    let per_query = truth
        .pairs()
        .iter()
        .map(|&(x, y)| {
            let r = by_query.get(&x).ok_or(Error::MissingRanking(x))?;
            Ok(hit_score(r.position_of(y), top_k))
        })
        .collect::<Result<Vec<f64>>>()?;
    let hit_precision = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().sum::<f64>() / per_query.len() as f64
    };
    Ok(MetricReport {
        hit_precision,
        top_k,
        per_query,
    })
}
