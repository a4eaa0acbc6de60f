//! Reference implementation of the per-bandwidth loss curve, kept
//! deliberately naive and independent of [`crate::kernel`]: its own distance
//! and kernel loops, a cyclic Jacobi eigensolver, and an explicit projection
//! `U_d (U_d^T Y)` rebuilt from scratch at every `d`.

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::kernel::LabelMatrix;

/// Largest input the dense reference is meant for.
pub const ORACLE_MAX_IMAGES: usize = 500;

pub fn oracle_curve(features: &FeatureSet, labels: &LabelMatrix, sigma: f64) -> Result<Vec<f64>> {
    let x = features.features();
    let n = x.nrows();
    if n > ORACLE_MAX_IMAGES {
        return Err(Error::invalid(format!("oracle is limited to {ORACLE_MAX_IMAGES} images, got {n}")));
    }
    if labels.n_images() != n {
        return Err(Error::DimensionMismatch(format!("{n} feature rows for {} label rows", labels.n_images())));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    let p = x.ncols();
    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut sq = 0.0;
            for m in 0..p {
                let diff = x[[i, m]] - x[[j, m]];
                sq += diff * diff;
            }
            kernel[i][j] = (-sq / (2.0 * sigma * sigma)).exp();
        }
    }
    let (values, vectors) = jacobi_eigen(kernel);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let y = labels.values();
    let k = y.ncols();
    let mut curve = Vec::with_capacity(n + 1);
    for d in 0..=n {
        let basis = &order[..d];
        let mut total = 0.0;
        for j in 0..k {
            // theta = U_d^T y_j
            let theta: Vec<f64> = basis
                .iter()
                .map(|&c| (0..n).map(|i| vectors[i][c] * y[[i, j]]).sum())
                .collect();
            let mut err = 0.0;
            for i in 0..n {
                let fit: f64 = basis.iter().zip(&theta).map(|(&c, t)| vectors[i][c] * t).sum();
                err += (fit - y[[i, j]]).powi(2);
            }
            total += err / n as f64;
        }
        curve.push(total / k as f64);
    }
    Ok(curve)
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
/// Returns unsorted eigenvalues and the eigenvectors as columns of `v`.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= 1e-34 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for m in 0..n {
                    let (pk, qk) = (a[p][m], a[q][m]);
                    a[p][m] = c * pk - s * qk;
                    a[q][m] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    (values, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_small_matrix() {
        let a = vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]];
        let (mut values, _) = jacobi_eigen(a);
        values.sort_by(f64::total_cmp);
        let r2 = 2f64.sqrt();
        for (got, want) in values.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }
}
