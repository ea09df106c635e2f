//! Subspace distances, held-out correlation and support overlap.

use serde::{Deserialize, Serialize};

use crate::cca::{canonical_variates, CcaModel};
use crate::error::{Error, Result};
use crate::linalg::{thin_svd, vstack, Mat, DEFAULT_RANK_TOL};
use crate::synth::GroundTruth;

/// Orthonormal basis of the column span of `a`.
fn orthonormal_basis(a: &Mat) -> Result<Mat> {
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("zero matrix has no column span".into()));
    }
    let svd = thin_svd(a);
    let top = svd.singulars[0];
    let k = svd
        .singulars
        .iter()
        .filter(|&&s| s > DEFAULT_RANK_TOL * top.max(1.0))
        .count();
    Ok(svd.left.columns(0, k).into_owned())
}

/// Cosines of the principal angles between `span(a)` and `span(b)`,
/// largest first, clamped to `[0, 1]`.
pub fn principal_cosines(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions {} and {} differ",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let cross = qa.transpose() * qb;
    let svd = thin_svd(&cross);
    Ok(svd.singulars.iter().map(|c| c.clamp(0.0, 1.0)).collect())
}

/// Principal angles in radians, smallest first.
pub fn principal_angles(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    Ok(principal_cosines(a, b)?.into_iter().map(f64::acos).collect())
}

/// Chordal distance `||sin Theta||_F` between two column spans.
///
/// Spans of different dimension are compared by padding the smaller with
/// right angles, so the result is `sqrt(max(k_a, k_b) - sum c_i^2)`.
pub fn subspace_distance(a: &Mat, b: &Mat) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions {} and {} differ",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    // ||(I - P_big) Q_small||_F^2 = k_small - sum c_i^2, evaluated directly
    // to keep precision for nearly equal spans.
    let residual = |big: &Mat, small: &Mat| (small - big * (big.transpose() * small)).norm_squared();
    let (ka, kb) = (qa.ncols(), qb.ncols());
    let sq = match ka.cmp(&kb) {
        std::cmp::Ordering::Greater => residual(&qa, &qb) + (ka - kb) as f64,
        std::cmp::Ordering::Less => residual(&qb, &qa) + (kb - ka) as f64,
        std::cmp::Ordering::Equal => 0.5 * (residual(&qa, &qb) + residual(&qb, &qa)),
    };
    Ok(sq.max(0.0).sqrt())
}

/// Distance between `[U; V]` of a fitted model and of the truth.
///
/// A model of reduced (or zero) rank is compared as is; a rank-0 model is at
/// the maximal distance `sqrt(r)`.
pub fn stacked_direction_distance(model: &CcaModel, gt: &GroundTruth) -> Result<f64> {
    stacked_distance(&model.u, &model.v, &gt.u_star, &gt.v_star)
}

pub fn stacked_distance(u: &Mat, v: &Mat, u_star: &Mat, v_star: &Mat) -> Result<f64> {
    if u.nrows() != u_star.nrows() || v.nrows() != v_star.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is ({} + {}) x r, truth is ({} + {}) x r",
            u.nrows(),
            v.nrows(),
            u_star.nrows(),
            v_star.nrows()
        )));
    }
    let truth = vstack(u_star, v_star);
    if u.ncols() == 0 {
        return Ok((orthonormal_basis(&truth)?.ncols() as f64).sqrt());
    }
    subspace_distance(&vstack(u, v), &truth)
}

/// Pearson correlation; 0 if either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Mean over components of the correlation between `X_val u_i` and
/// `Y_val v_i`. A rank-0 model scores 0.
pub fn validation_correlation(model: &CcaModel, x_val: &Mat, y_val: &Mat) -> Result<f64> {
    if x_val.nrows() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 validation rows, got {}",
            x_val.nrows()
        )));
    }
    let (xu, yv) = canonical_variates(model, x_val, y_val)?;
    if model.rank() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..model.rank())
        .map(|j| pearson(xu.column(j).as_slice(), yv.column(j).as_slice()))
        .sum();
    Ok(total / model.rank() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub fpr: f64,
    pub fnr: f64,
    pub est_support_size: usize,
    pub true_support_size: usize,
}

/// Rows whose Euclidean norm exceeds `tol`.
pub fn row_support(m: &Mat, tol: f64) -> Vec<usize> {
    (0..m.nrows()).filter(|&i| m.row(i).norm() > tol).collect()
}

pub fn support_metrics(u_hat: &Mat, u_star: &Mat, tol: f64) -> Result<SupportMetrics> {
    if u_hat.nrows() != u_star.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} rows, truth has {}",
            u_hat.nrows(),
            u_star.nrows()
        )));
    }
    let p = u_hat.nrows();
    let est = row_support(u_hat, tol);
    let truth = row_support(u_star, tol);
    let false_pos = est.iter().filter(|i| truth.binary_search(i).is_err()).count();
    let false_neg = truth.iter().filter(|i| est.binary_search(i).is_err()).count();
    Ok(SupportMetrics {
        fpr: false_pos as f64 / (p - truth.len()).max(1) as f64,
        fnr: false_neg as f64 / truth.len().max(1) as f64,
        est_support_size: est.len(),
        true_support_size: truth.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cca::Method;

    fn unit(d: usize, i: usize) -> Mat {
        let mut m = Mat::zeros(d, 1);
        m[(i, 0)] = 1.0;
        m
    }

    fn model(u: Mat, v: Mat) -> CcaModel {
        let r = u.ncols();
        CcaModel {
            u,
            v,
            correlations: vec![1.0; r],
            support: None,
            method: Method::Rrr,
            rho: 0.0,
            requested_rank: r,
            warnings: vec![],
        }
    }

    #[test]
    fn orthogonal_planes() {
        let a = Mat::from_column_slice(4, 2, &[1., 0., 0., 0., 0., 1., 0., 0.]);
        let b = Mat::from_column_slice(4, 2, &[0., 0., 1., 0., 0., 0., 0., 1.]);
        assert!((subspace_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_angle() {
        let a = unit(4, 0);
        let b = Mat::from_column_slice(4, 1, &[0.3f64.cos(), 0.3f64.sin(), 0., 0.]);
        assert!((subspace_distance(&a, &b).unwrap() - 0.3f64.sin()).abs() < 1e-12);
        assert!((principal_angles(&a, &b).unwrap()[0] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn same_span() {
        let a = Mat::from_column_slice(3, 2, &[1., 2., 3., -1., 0., 4.]);
        let r = Mat::from_column_slice(2, 2, &[2., 1., -1., 3.]);
        assert!(subspace_distance(&a, &(&a * r)).unwrap() < 1e-10);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(matches!(
            subspace_distance(&Mat::zeros(3, 1), &unit(3, 0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn support_examples() {
        let mut truth = Mat::zeros(100, 1);
        for i in 0..10 {
            truth[(i, 0)] = 1.0;
        }
        let s = support_metrics(&truth, &truth, 0.0).unwrap();
        assert_eq!((s.fpr, s.fnr), (0.0, 0.0));
        let s = support_metrics(&Mat::zeros(100, 1), &truth, 0.0).unwrap();
        assert_eq!((s.fpr, s.fnr), (0.0, 1.0));
        let s = support_metrics(&Mat::from_element(100, 1, 1.0), &truth, 0.0).unwrap();
        assert_eq!((s.fpr, s.fnr), (1.0, 0.0));
        assert_eq!(s.est_support_size, 100);
    }

    #[test]
    fn validation_examples() {
        let x = Mat::from_fn(20, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let m = model(Mat::identity(2, 2), Mat::identity(2, 2));
        assert!((validation_correlation(&m, &x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!(validation_correlation(&m, &x.rows(0, 2).into_owned(), &x.rows(0, 2).into_owned()).is_err());
        let zero = model(Mat::zeros(2, 2), Mat::identity(2, 2));
        assert_eq!(validation_correlation(&zero, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn sign_flip_changes_stacked_span() {
        let u = Mat::from_column_slice(3, 1, &[1., 0.5, 0.]);
        let v = Mat::from_column_slice(2, 1, &[0.2, 1.]);
        let d = stacked_distance(&u, &(-&v), &u, &v).unwrap();
        assert!(d > 0.0 && d <= 2f64.sqrt());
        assert!(stacked_distance(&u, &v, &u, &v).unwrap() < 1e-12);
        assert!((stacked_distance(&Mat::zeros(3, 0), &Mat::zeros(2, 0), &u, &v).unwrap() - 1.0).abs() < 1e-12);
    }
}
