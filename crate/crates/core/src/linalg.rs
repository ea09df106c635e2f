//! Dense covariance and spectral kernels shared by every estimator.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative cutoff under which a singular value or eigenvalue counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative tolerance on negative eigenvalues before a matrix is rejected as not PSD.
pub const DEFAULT_PSD_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// Use the raw second moment `X'X / n`.
    #[default]
    None,
    /// Subtract column means first.
    Columns,
}

/// A dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Wraps `m`, checking it is square and symmetric to `1e-12 * (1 + |a_ij|)`.
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        for j in 0..d {
            for i in (j + 1)..d {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Averages `m` with its transpose. Used for products that are symmetric
    /// in exact arithmetic but pick up rounding asymmetry.
    pub fn symmetrize(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn identity(d: usize) -> Self {
        Self(Mat::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(Mat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn eigen(&self) -> SymEigen {
        sym_eigen(&self.0)
    }

    /// True when the smallest eigenvalue is at least `-tol * largest`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let eig = self.eigen();
        psd_violation(&eig.values, tol).is_none()
    }
}

impl Deref for SymMatrix {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Eigen-decomposition with eigenvalues sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: Mat,
}

impl SymEigen {
    /// Rebuilds `Q f(Λ) Q'` for an elementwise spectral map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn largest(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }

    /// Number of eigenvalues above `rank_tol * max(largest, 0)`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let cut = rank_tol * self.largest().max(0.0);
        self.values.iter().filter(|&&l| l > cut && l > 0.0).count()
    }
}

pub fn sym_eigen(a: &Mat) -> SymEigen {
    let d = a.nrows();
    if d == 0 {
        return SymEigen {
            values: DVector::zeros(0),
            vectors: Mat::zeros(0, 0),
        };
    }
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Mat::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    SymEigen { values, vectors }
}

fn psd_violation(values: &DVector<f64>, tol: f64) -> Option<Error> {
    if values.is_empty() {
        return None;
    }
    let max = values.max();
    let min = values.min();
    if min < -tol * max.max(0.0) {
        Some(Error::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        })
    } else {
        None
    }
}

/// Centers each column of `x`, returning the centered copy and the column means.
pub fn center_columns(x: &Mat) -> (Mat, DVector<f64>) {
    let n = x.nrows().max(1) as f64;
    let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered, means)
}

fn centered_view(x: &Mat, centering: Centering) -> std::borrow::Cow<'_, Mat> {
    match centering {
        Centering::None => std::borrow::Cow::Borrowed(x),
        Centering::Columns => std::borrow::Cow::Owned(center_columns(x).0),
    }
}

/// `X'X / n`, after column-centering when requested.
pub fn sample_covariance(x: &Mat, centering: Centering) -> Result<SymMatrix> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput(
            "sample covariance of an empty matrix".into(),
        ));
    }
    let xc = centered_view(x, centering);
    let n = x.nrows() as f64;
    SymMatrix::symmetrize(xc.transpose() * xc.as_ref() / n)
}

/// `X'Y / n` with the same centering convention as [`sample_covariance`].
pub fn cross_covariance(x: &Mat, y: &Mat, centering: Centering) -> Result<Mat> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cross covariance needs equal row counts, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidInput(
            "cross covariance of empty matrices".into(),
        ));
    }
    let n = x.nrows() as f64;
    let xc = centered_view(x, centering);
    let yc = centered_view(y, centering);
    Ok(xc.transpose() * yc.as_ref() / n)
}

/// Shrunk covariance estimate together with the blend it used.
#[derive(Clone, Debug)]
pub struct LedoitWolf {
    pub covariance: SymMatrix,
    /// Weight `alpha` on the scaled-identity target.
    pub shrinkage: f64,
    /// Target scale `mu = trace(S) / d`.
    pub target_scale: f64,
}

/// Ledoit-Wolf shrinkage of the centered sample covariance toward `mu I`.
///
/// `alpha = min(1, sum_k ||x_k x_k' - S||_F^2 / n^2 / ||S - mu I||_F^2)`.
pub fn ledoit_wolf(x: &Mat) -> Result<LedoitWolf> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "Ledoit-Wolf needs at least 2 observations, got {n}"
        )));
    }
    let d = x.ncols();
    let (xc, _) = center_columns(x);
    let s = SymMatrix::symmetrize(xc.transpose() * &xc / n as f64)?;
    let mu = s.trace() / d as f64;

    // sum_k ||x_k x_k' - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
    let fourth: f64 = xc.row_iter().map(|row| row.norm_squared().powi(2)).sum();
    let s_frob2 = s.norm_squared();
    let spread = (fourth - n as f64 * s_frob2).max(0.0) / (n as f64 * n as f64);

    let mut dispersion = s_frob2 - 2.0 * mu * s.trace() + mu * mu * d as f64;
    dispersion = dispersion.max(0.0);
    let alpha = if dispersion <= f64::MIN_POSITIVE {
        1.0
    } else {
        (spread / dispersion).min(1.0)
    };

    let covariance = if alpha >= 1.0 {
        Mat::identity(d, d) * mu
    } else {
        s.as_mat() * (1.0 - alpha) + Mat::identity(d, d) * (alpha * mu)
    };
    Ok(LedoitWolf {
        covariance: SymMatrix::symmetrize(covariance)?,
        shrinkage: alpha,
        target_scale: mu,
    })
}

/// Principal (PSD) square root. Negative eigenvalues within `tol * lambda_max`
/// are clamped to zero.
pub fn sym_sqrt(a: &SymMatrix, tol: f64) -> Result<SymMatrix> {
    let eig = a.eigen();
    if let Some(err) = psd_violation(&eig.values, tol) {
        return Err(err);
    }
    SymMatrix::symmetrize(eig.map(|l| l.max(0.0).sqrt()))
}

/// Pseudo-inverse square root; also returns the numerical rank.
pub fn sym_inv_sqrt_with_rank(a: &SymMatrix, rank_tol: f64) -> Result<(SymMatrix, usize)> {
    let eig = a.eigen();
    if let Some(err) = psd_violation(&eig.values, DEFAULT_PSD_TOL) {
        return Err(err);
    }
    let rank = eig.rank(rank_tol);
    if rank == 0 {
        return Err(Error::RankDeficient(
            "every eigenvalue is below the rank threshold".into(),
        ));
    }
    let cut = rank_tol * eig.largest();
    let m = eig.map(|l| if l > cut && l > 0.0 { 1.0 / l.sqrt() } else { 0.0 });
    Ok((SymMatrix::symmetrize(m)?, rank))
}

/// Pseudo-inverse square root: eigenvalues above `rank_tol * lambda_max` map
/// to `lambda^-1/2`, the rest to zero.
pub fn sym_inv_sqrt(a: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    sym_inv_sqrt_with_rank(a, rank_tol).map(|(m, _)| m)
}

/// Moore-Penrose inverse of a symmetric PSD matrix via its eigenvectors.
pub fn sym_pseudo_inverse(a: &SymMatrix, rank_tol: f64) -> (SymMatrix, usize) {
    let eig = a.eigen();
    let rank = eig.rank(rank_tol);
    let cut = rank_tol * eig.largest().max(0.0);
    let m = eig.map(|l| if l > cut && l > 0.0 { 1.0 / l } else { 0.0 });
    (SymMatrix((&m + m.transpose()) * 0.5), rank)
}

/// Leading singular triple `M ~ left * diag(singulars) * right'`.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub left: Mat,
    pub singulars: DVector<f64>,
    pub right: Mat,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    pub fn reconstruct(&self) -> Mat {
        let mut scaled = self.left.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.singulars[j];
        }
        scaled * self.right.transpose()
    }
}

/// Full thin SVD sorted by decreasing singular value, with the sign convention
/// applied. Always returns `min(rows, cols)` triples.
pub fn thin_svd(m: &Mat) -> SvdTriple {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SvdTriple {
            left: Mat::zeros(rows, 0),
            singulars: DVector::zeros(0),
            right: Mat::zeros(cols, 0),
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut left = Mat::from_fn(rows, k, |r, c| u[(r, order[c])]);
    let mut right = Mat::from_fn(cols, k, |r, c| v_t[(order[c], r)]);
    let singulars = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));

    // Largest-magnitude entry of each left vector is made positive; the first
    // such entry wins ties.
    for j in 0..k {
        let col = left.column(j);
        let mut best = 0;
        for i in 1..rows {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }
    SvdTriple {
        left,
        singulars,
        right,
    }
}

/// Best rank-`r` factors of `m`.
pub fn top_r_svd(m: &Mat, r: usize) -> Result<SvdTriple> {
    let k = m.nrows().min(m.ncols());
    if r == 0 || r > k {
        return Err(Error::InvalidInput(format!(
            "rank {r} outside 1..={k} for a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let full = thin_svd(m);
    Ok(SvdTriple {
        left: full.left.columns(0, r).into_owned(),
        singulars: full.singulars.rows(0, r).into_owned(),
        right: full.right.columns(0, r).into_owned(),
    })
}

/// Moore-Penrose pseudo-inverse with singular values below
/// `rank_tol * sigma_max` treated as zero.
pub fn pseudo_inverse(m: &Mat, rank_tol: f64) -> Mat {
    let (rows, cols) = m.shape();
    let svd = thin_svd(m);
    let mut out = Mat::zeros(cols, rows);
    if svd.singulars.is_empty() {
        return out;
    }
    let cut = rank_tol * svd.singulars[0];
    for j in 0..svd.singulars.len() {
        let s = svd.singulars[j];
        if s > cut && s > 0.0 {
            out += svd.right.column(j) * svd.left.column(j).transpose() / s;
        }
    }
    out
}

/// Inverse of a symmetric positive definite matrix, `None` when the Cholesky
/// factorization fails.
pub fn spd_inverse(a: &Mat) -> Option<Mat> {
    let chol = nalgebra::Cholesky::new(a.clone())?;
    let inv = chol.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Sum of Euclidean norms of the rows.
pub fn l21_norm(m: &Mat) -> f64 {
    m.row_iter().map(|r| r.norm()).sum()
}

/// Column-stacks two blocks with equal column counts.
pub fn vstack(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Rows of `m` selected by `idx`, in order.
pub fn select_rows(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub fn select_cols(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

pub fn operator_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        thin_svd(m).singulars[0]
    }
}
