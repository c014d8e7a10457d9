//! Nearest-neighbour ranking in the common space by squared Euclidean
//! distance.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::corpus::{MatchedPairs, Network};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// `‖a − b‖²`.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "distance operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Candidates for one source user, nearest first; ties go to the lower
/// target index.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRanking {
    pub query: usize,
    pub candidates: Vec<(usize, f64)>,
}

impl MatchRanking {
    /// 1-based position of `target`, if it was ranked.
    pub fn position_of(&self, target: usize) -> Option<usize> {
        self.candidates.iter().position(|&(t, _)| t == target).map(|p| p + 1)
    }
}

fn column_distance(zx: &DMatrix<f64>, q: usize, zy: &DMatrix<f64>, t: usize) -> f64 {
    zx.column(q)
        .iter()
        .zip(zy.column(t).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn check_dims(zx: &FeatureMatrix, zy: &FeatureMatrix) -> Result<()> {
    if zx.dim() != zy.dim() {
        return Err(Error::DimensionMismatch {
            what: "common-space dimension",
            expected: zx.dim(),
            actual: zy.dim(),
        });
    }
    Ok(())
}

/// Ranks the targets in `pool` for source column `query`, keeping the
/// nearest `top_k` (all of them if fewer).
pub fn rank_in_pool(
    zx: &FeatureMatrix,
    zy: &FeatureMatrix,
    query: usize,
    pool: &[usize],
    top_k: usize,
) -> Result<MatchRanking> {
    check_dims(zx, zy)?;
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    let (x, y) = (zx.data(), zy.data());
    let mut scored: Vec<(usize, f64)> = pool
        .iter()
        .map(|&t| (t, column_distance(x, query, y, t)))
        .collect();
    let by_distance = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if top_k < scored.len() {
        scored.select_nth_unstable_by(top_k - 1, by_distance);
        scored.truncate(top_k);
    }
    scored.sort_by(by_distance);
    Ok(MatchRanking {
        query,
        candidates: scored,
    })
}

/// Ranks every column of `zy` against source column `query`.
pub fn rank_candidates(zx: &FeatureMatrix, zy: &FeatureMatrix, query: usize, top_k: usize) -> Result<MatchRanking> {
    let pool: Vec<usize> = (0..zy.n_users()).collect();
    rank_in_pool(zx, zy, query, &pool, top_k)
}

/// Maps every source column to its nearest target column.
pub fn predict_pairs(zx: &FeatureMatrix, zy: &FeatureMatrix) -> Result<MatchedPairs> {
    check_dims(zx, zy)?;
    if zy.n_users() == 0 {
        return Ok(MatchedPairs::predicted(Vec::new()));
    }
    let pairs = (0..zx.n_users())
        .map(|q| rank_candidates(zx, zy, q, 1).map(|r| (q, r.candidates[0].0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchedPairs::predicted(pairs))
}

/// Rankings TSV: `query_id<TAB>rank<TAB>candidate_id<TAB>distance`.
pub fn write_rankings(path: &Path, rankings: &[MatchRanking], net_x: &Network, net_y: &Network) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "query\trank\tcandidate\tdistance").map_err(io)?;
    for r in rankings {
        for (pos, &(t, d)) in r.candidates.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}", net_x.users()[r.query].id, pos + 1, net_y.users()[t].id, d).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a rankings TSV written by [`write_rankings`]. Rows of one query
/// must be contiguous and in rank order.
pub fn read_rankings(path: &Path, net_x: &Network, net_y: &Network) -> Result<Vec<MatchRanking>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<MatchRanking> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let query = net_x.index_of(f[0]).ok_or_else(|| Error::UnknownId(f[0].to_string()))?;
        let rank: usize = f[1].parse().map_err(|_| bad(format!("bad rank '{}'", f[1])))?;
        let target = net_y.index_of(f[2]).ok_or_else(|| Error::UnknownId(f[2].to_string()))?;
        let dist: f64 = f[3].parse().map_err(|_| bad(format!("bad distance '{}'", f[3])))?;
        match out.last_mut() {
            Some(r) if r.query == query && r.candidates.len() + 1 == rank => r.candidates.push((target, dist)),
            _ if rank == 1 => out.push(MatchRanking {
                query,
                candidates: vec![(target, dist)],
            }),
            _ => return Err(bad(format!("rank {rank} out of sequence for {}", f[0]))),
        }
    }
    Ok(out)
}
