//! Row-stacking of the per-level matrices and per-feature standardization.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Level};

/// Stacks the present levels in the order char, word, topic, structure.
pub fn fuse(levels: &BTreeMap<Level, FeatureMatrix>) -> Result<FeatureMatrix> {
    let mut present = levels.iter().filter(|(l, _)| **l != Level::Fused);
    let Some((_, first)) = present.next() else {
        return Err(Error::InvalidConfig("fusion needs at least one feature level".into()));
    };
    let n = first.n_users();
    let mut total = first.dim();
    for (level, fm) in present {
        if fm.n_users() != n {
            return Err(Error::ColumnMismatch {
                level: level.to_string(),
                expected: n,
                actual: fm.n_users(),
            });
        }
        total += fm.dim();
    }
    let mut data = DMatrix::zeros(total, n);
    let mut manifest = Vec::new();
    let mut row = 0;
    for (&level, fm) in levels.iter().filter(|(l, _)| **l != Level::Fused) {
        let d = fm.dim();
        data.rows_mut(row, d).copy_from(fm.data());
        manifest.push((level, row..row + d));
        row += d;
    }
    FeatureMatrix::with_manifest(Level::Fused, data, manifest)
}

/// Recovers one level's rows from a fused matrix.
pub fn slice_level(fused: &FeatureMatrix, level: Level) -> Option<FeatureMatrix> {
    let (_, range) = fused.manifest().iter().find(|(l, _)| *l == level)?;
    let data = fused.data().rows(range.start, range.len()).into_owned();
    Some(FeatureMatrix::new(level, data))
}

/// Per-row mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub means: DVector<f64>,
    /// Zero-variance rows are stored with std 1.
    pub stds: DVector<f64>,
}

impl StandardizeStats {
    pub fn compute(data: &DMatrix<f64>) -> Self {
        let n = data.ncols().max(1) as f64;
        let d = data.nrows();
        let mut means = DVector::zeros(d);
        let mut stds = DVector::from_element(d, 1.0);
        for (r, row) in data.row_iter().enumerate() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[r] = mean;
            // treat round-off level spread as constant
            if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
                stds[r] = var.sqrt();
            }
        }
        StandardizeStats { means, stds }
    }
}

/// Scales every feature row to mean 0 and standard deviation 1, or applies
/// precomputed statistics when given.
pub fn standardize(fused: &FeatureMatrix, stats: Option<&StandardizeStats>) -> Result<(FeatureMatrix, StandardizeStats)> {
    let stats = match stats {
        Some(s) => {
            if s.means.len() != fused.dim() || s.stds.len() != fused.dim() {
                return Err(Error::DimensionMismatch {
                    what: "standardization statistics",
                    expected: fused.dim(),
                    actual: s.means.len(),
                });
            }
            s.clone()
        }
        None => StandardizeStats::compute(fused.data()),
    };
    let mut data = fused.data().clone();
    for (r, mut row) in data.row_iter_mut().enumerate() {
        let (m, s) = (stats.means[r], stats.stds[r]);
        row.apply(|v| *v = (*v - m) / s);
    }
    Ok((fused.map_data(data), stats))
}
