// SPDX-License-Identifier: Apache-2.0

//! Principal component projection of embeddings.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PcaError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("requested {requested} components from {dim}-dimensional data")]
    TooManyComponents { requested: usize, dim: usize },
    #[error("samples have inconsistent or zero dimension")]
    Ragged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// One unit-length principal axis per row, by decreasing variance.
    pub components: Matrix,
    /// Sample variance along each component.
    pub variances: Vec<f64>,
    /// Centered samples projected onto the components.
    pub coords: Matrix,
}

/// Sample covariance (divides by `n - 1`) of the rows of `x`.
pub fn covariance(x: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut c = Matrix::zeros(d, d);
    for i in 0..n {
        let r = x.row(i);
        for a in 0..d {
            for b in a..d {
                c[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    for a in 0..d {
        for b in a..d {
            let v = c[(a, b)] / denom;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    (mean, c)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in decreasing order and eigenvectors as rows; each
/// vector's largest-magnitude entry is positive.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|k| v[(k, i)]).collect();
        let big = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in col.into_iter().enumerate() {
            vectors[(r, k)] = sign * x;
        }
    }
    (values, vectors)
}

/// Projects the rows of `x` onto their top `k` principal components.
pub fn project(x: &Matrix, k: usize) -> Result<Projection, PcaError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    if d == 0 {
        return Err(PcaError::Ragged);
    }
    if k == 0 || k > d {
        return Err(PcaError::TooManyComponents { requested: k, dim: d });
    }
    let (mean, cov) = covariance(x);
    let (values, vectors) = symmetric_eigen(&cov);
    let components = vectors.select_rows(&(0..k).collect::<Vec<_>>());
    let mut coords = Matrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            coords[(i, c)] = x.row(i).iter().zip(&mean).zip(components.row(c)).map(|((v, m), w)| (v - m) * w).sum();
        }
    }
    Ok(Projection { mean, components, variances: values[..k].iter().map(|v| v.max(0.0)).collect(), coords })
}

/// [`project`] over a list of equal-length vectors.
pub fn project_rows(rows: &[Vec<f64>], k: usize) -> Result<Projection, PcaError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PcaError::Ragged);
    }
    project(&Matrix::from_vec(rows.len(), d, rows.concat()), k)
}
