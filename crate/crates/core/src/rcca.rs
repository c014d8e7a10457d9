//! Regularized canonical correlation analysis.
//!
//! Given aligned training columns of X (d_X×T) and Y (d_Y×T), find pairs
//! `(h_i, m_i)` maximizing `h_iᵀ C_XY m_i` subject to `h_iᵀ Ĉ_XX h_i = 1` and
//! `m_iᵀ Ĉ_YY m_i = 1`, where `Ĉ = C + r I`. The stationarity conditions form
//! the generalized eigenproblem
//!
//! ```text
//! [ 0    C_XY ] [h]     [ Ĉ_XX  0    ] [h]
//! [ C_YX 0    ] [m] = ρ [ 0     Ĉ_YY ] [m]
//! ```
//!
//! which is solved through the symmetric reduction
//! `K = Ĉ_XX^{-1/2} C_XY Ĉ_YY^{-1} C_YX Ĉ_XX^{-1/2}`: with `K u = ρ² u`,
//! `h = Ĉ_XX^{-1/2} u` and `m = Ĉ_YY^{-1} C_YX h / ρ`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Level};

const MAGIC: &[u8; 8] = b"IDLCCA01";

/// Eigenvalues below this fraction of the largest make a regularized
/// covariance count as singular.
const PD_RELATIVE_TOL: f64 = 1e-10;

/// Canonical correlations at or below this are treated as rank deficiency.
const RANK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub xx: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub xy: DMatrix<f64>,
}

impl CovarianceSet {
    pub fn yx(&self) -> DMatrix<f64> {
        self.xy.transpose()
    }
}

/// Subtracts each row's mean; returns the centered matrix and the means.
pub fn center_columns(data: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.ncols().max(1) as f64;
    let means = data.column_sum() / n;
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &means;
    }
    (centered, means)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Sample covariances with divisor T of already-centered, column-aligned
/// training matrices.
pub fn covariances(xtr: &DMatrix<f64>, ytr: &DMatrix<f64>) -> Result<CovarianceSet> {
    let t = xtr.ncols();
    if ytr.ncols() != t {
        return Err(Error::DimensionMismatch {
            what: "training pairs (Y columns)",
            expected: t,
            actual: ytr.ncols(),
        });
    }
    if t == 0 {
        return Err(Error::EmptyCorpus("no training pairs"));
    }
    let scale = 1.0 / t as f64;
    Ok(CovarianceSet {
        xx: symmetrize(xtr * xtr.transpose() * scale),
        yy: symmetrize(ytr * ytr.transpose() * scale),
        xy: xtr * ytr.transpose() * scale,
    })
}

/// Inverse square root and inverse of a symmetric matrix after checking it
/// is numerically positive definite.
fn inverse_roots(c: &DMatrix<f64>, side: &'static str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(c.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(min > PD_RELATIVE_TOL * max) || !min.is_finite() {
        return Err(Error::NotPositiveDefinite {
            side,
            min_eigenvalue: min,
        });
    }
    let v = &eig.eigenvectors;
    let inv_sqrt = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt())) * v.transpose();
    let inv = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e)) * v.transpose();
    Ok((symmetrize(inv_sqrt), symmetrize(inv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// d_X×k, column i is h_i.
    pub h: DMatrix<f64>,
    /// d_Y×k, column i is m_i.
    pub m: DMatrix<f64>,
    /// Descending canonical correlations.
    pub correlations: Vec<f64>,
    pub reg_x: f64,
    pub reg_y: f64,
    pub means_x: DVector<f64>,
    pub means_y: DVector<f64>,
}

impl CcaModel {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    pub fn dim(&self, side: Side) -> usize {
        match side {
            Side::X => self.h.nrows(),
            Side::Y => self.m.nrows(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (dx, dy, k) = (self.h.nrows(), self.m.nrows(), self.k());
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [dx, dy, k] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        put(self.reg_x);
        put(self.reg_y);
        self.means_x.iter().for_each(|&v| put(v));
        self.means_y.iter().for_each(|&v| put(v));
        for mat in [&self.h, &self.m] {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    put(mat[(r, c)]);
                }
            }
        }
        self.correlations.iter().for_each(|&v| put(v));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        if rd.take(8)? != MAGIC {
            return Err(Error::Format("not a CCA model file".into()));
        }
        let (dx, dy, k) = (rd.usize()?, rd.usize()?, rd.usize()?);
        let reg_x = rd.f64()?;
        let reg_y = rd.f64()?;
        let means_x = DVector::from_vec(rd.f64_vec(dx)?);
        let means_y = DVector::from_vec(rd.f64_vec(dy)?);
        let h = DMatrix::from_row_slice(dx, k, &rd.f64_vec(dx * k)?);
        let m = DMatrix::from_row_slice(dy, k, &rd.f64_vec(dy * k)?);
        let correlations = rd.f64_vec(k)?;
        rd.finish()?;
        Ok(CcaModel {
            h,
            m,
            correlations,
            reg_x,
            reg_y,
            means_x,
            means_y,
        })
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Solves for the top `k` canonical pairs. Centering means are left at
/// zero; [`fit_rcca`] records them.
pub fn solve_rcca(cov: &CovarianceSet, k: usize, reg_x: f64, reg_y: f64) -> Result<CcaModel> {
    let (dx, dy) = (cov.xx.nrows(), cov.yy.nrows());
    if cov.xy.shape() != (dx, dy) || cov.xx.ncols() != dx || cov.yy.ncols() != dy {
        return Err(Error::DimensionMismatch {
            what: "cross-covariance shape",
            expected: dx * dy,
            actual: cov.xy.nrows() * cov.xy.ncols(),
        });
    }
    if k == 0 || k > dx.min(dy) {
        return Err(Error::InvalidConfig(format!(
            "projection count k={k} must be in 1..={}",
            dx.min(dy)
        )));
    }
    if !(reg_x >= 0.0 && reg_y >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "regularization must be nonnegative (got {reg_x}, {reg_y})"
        )));
    }
    let cxx = &cov.xx + DMatrix::identity(dx, dx) * reg_x;
    let cyy = &cov.yy + DMatrix::identity(dy, dy) * reg_y;
    let (cxx_isqrt, _) = inverse_roots(&cxx, "X")?;
    let (_, cyy_inv) = inverse_roots(&cyy, "Y")?;

    let cyx = cov.yx();
    let bridge = &cyy_inv * &cyx; // Ĉ_YY^{-1} C_YX
    let reduced = symmetrize(&cxx_isqrt * &cov.xy * &bridge * &cxx_isqrt);
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..dx).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut keep = k;
    for (rank, &i) in order.iter().take(k).enumerate() {
        if eig.eigenvalues[i].max(0.0).sqrt() <= RANK_TOL {
            log::warn!("canonical correlations vanish after {rank} pairs; truncating k from {k} to {rank}");
            keep = rank;
            break;
        }
    }
    if keep == 0 {
        return Err(Error::InvalidConfig(
            "no canonical pair has a nonzero correlation".into(),
        ));
    }

    let mut h = DMatrix::zeros(dx, keep);
    let mut m = DMatrix::zeros(dy, keep);
    let mut correlations = Vec::with_capacity(keep);
    for (col, &i) in order.iter().take(keep).enumerate() {
        let rho = eig.eigenvalues[i].sqrt();
        let mut hi = &cxx_isqrt * eig.eigenvectors.column(i);
        // renormalize against the regularized metric to absorb round-off
        hi /= hi.dot(&(&cxx * &hi)).sqrt();
        let scale = hi.amax();
        if let Some(first) = hi.iter().copied().find(|v| v.abs() > 1e-12 * scale) {
            if first < 0.0 {
                hi.neg_mut();
            }
        }
        let mi = &bridge * &hi / rho;
        h.set_column(col, &hi);
        m.set_column(col, &mi);
        correlations.push(rho);
    }
    Ok(CcaModel {
        h,
        m,
        correlations,
        reg_x,
        reg_y,
        means_x: DVector::zeros(dx),
        means_y: DVector::zeros(dy),
    })
}

/// Centers the training columns, estimates covariances and solves.
pub fn fit_rcca(xtr: &FeatureMatrix, ytr: &FeatureMatrix, k: usize, reg_x: f64, reg_y: f64) -> Result<CcaModel> {
    let (xc, means_x) = center_columns(xtr.data());
    let (yc, means_y) = center_columns(ytr.data());
    let cov = covariances(&xc, &yc)?;
    let mut model = solve_rcca(&cov, k, reg_x, reg_y)?;
    model.means_x = means_x;
    model.means_y = means_y;
    Ok(model)
}

/// `Hᵀ (x − mean_x)` or `Mᵀ (y − mean_y)` for every column.
pub fn project(model: &CcaModel, features: &FeatureMatrix, side: Side) -> Result<FeatureMatrix> {
    let (proj, means) = match side {
        Side::X => (&model.h, &model.means_x),
        Side::Y => (&model.m, &model.means_y),
    };
    if features.dim() != proj.nrows() {
        return Err(Error::DimensionMismatch {
            what: "projection input features",
            expected: proj.nrows(),
            actual: features.dim(),
        });
    }
    let mut centered = features.data().clone();
    for mut col in centered.column_iter_mut() {
        col -= means;
    }
    Ok(FeatureMatrix::new(Level::Fused, proj.transpose() * centered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::sampling;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = sampling::rng(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn one_feature_covariance() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let cov = covariances(&x, &x).unwrap();
        assert_eq!(cov.xx[(0, 0)], 1.0);
        assert_eq!(cov.xy, cov.xx);
    }

    #[test]
    fn covariance_matches_double_loop() {
        let (x, _) = center_columns(&random(4, 10, 1));
        let (y, _) = center_columns(&random(3, 10, 2));
        let cov = covariances(&x, &y).unwrap();
        for a in 0..4 {
            for b in 0..3 {
                let mut s = 0.0;
                for t in 0..10 {
                    s += x[(a, t)] * y[(b, t)];
                }
                assert!((cov.xy[(a, b)] - s / 10.0).abs() < 1e-12);
            }
            for b in 0..4 {
                let mut s = 0.0;
                for t in 0..10 {
                    s += x[(a, t)] * x[(b, t)];
                }
                assert!((cov.xx[(a, b)] - s / 10.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(covariances(&DMatrix::zeros(2, 0), &DMatrix::zeros(2, 0)).is_err());
        assert!(covariances(&DMatrix::zeros(2, 3), &DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let x = FeatureMatrix::new(Level::Fused, random(3, 20, 3));
        let y = FeatureMatrix::new(Level::Fused, random(2, 20, 4));
        assert!(fit_rcca(&x, &y, 3, 0.1, 0.1).is_err());
        assert!(fit_rcca(&x, &y, 0, 0.1, 0.1).is_err());
        assert!(fit_rcca(&x, &y, 2, -1.0, 0.1).is_err());
    }

    #[test]
    fn identity_projection_passes_through() {
        let model = CcaModel {
            h: DMatrix::identity(3, 3),
            m: DMatrix::identity(3, 3),
            correlations: vec![1.0; 3],
            reg_x: 0.0,
            reg_y: 0.0,
            means_x: DVector::zeros(3),
            means_y: DVector::zeros(3),
        };
        let x = FeatureMatrix::new(Level::Fused, random(3, 5, 5));
        assert_eq!(project(&model, &x, Side::X).unwrap().data(), x.data());
        let one = FeatureMatrix::new(Level::Fused, random(3, 1, 6));
        assert_eq!(project(&model, &one, Side::Y).unwrap().data().shape(), (3, 1));
        let wrong = FeatureMatrix::new(Level::Fused, random(2, 1, 6));
        assert!(project(&model, &wrong, Side::X).is_err());
    }

    #[test]
    fn model_binary_roundtrip() {
        let x = FeatureMatrix::new(Level::Fused, random(4, 30, 7));
        let y = FeatureMatrix::new(Level::Fused, random(3, 30, 8));
        let model = fit_rcca(&x, &y, 2, 0.01, 0.02).unwrap();
        assert_eq!(CcaModel::from_bytes(&model.to_bytes()).unwrap(), model);
        assert!(CcaModel::from_bytes(&model.to_bytes()[1..]).is_err());
    }

    #[test]
    fn sign_convention_first_entry_positive() {
        let x = FeatureMatrix::new(Level::Fused, random(5, 60, 9));
        let y = FeatureMatrix::new(Level::Fused, random(5, 60, 10));
        let model = fit_rcca(&x, &y, 4, 0.05, 0.05).unwrap();
        for col in model.h.column_iter() {
            let first = col.iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }
}
