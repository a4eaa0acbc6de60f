use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Squared Euclidean distances between every pair of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    /// Each pair is summed once, coordinate by coordinate, and mirrored, so
    /// the result is exactly symmetric with an exactly zero diagonal.
    pub fn from_features(features: ArrayView2<'_, f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 rows, got {n}")));
        }
        let rows: Vec<Vec<f64>> = features.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = &rows[i];
                rows[i + 1..]
                    .iter()
                    .map(|xj| xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect()
            })
            .collect();
        let mut values = Array2::zeros((n, n));
        for (i, row) in upper.iter().enumerate() {
            for (offset, &d) in row.iter().enumerate() {
                let j = i + 1 + offset;
                values[[i, j]] = d;
                values[[j, i]] = d;
            }
        }
        Ok(DistanceMatrix { values })
    }

    /// Wraps a precomputed matrix after checking the distance-matrix invariants.
    pub fn from_squared(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m || n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix must be square with n >= 2, got {n}x{m}"
            )));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[[i, j]];
                if !(v.is_finite() && v >= 0.0) || v != values[[j, i]] {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Restriction to the given rows and columns, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::invalid("submatrix needs at least 2 indices"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("index {i} out of range")));
        }
        let values = self
            .values
            .select(Axis(0), indices)
            .select(Axis(1), indices);
        Ok(DistanceMatrix { values })
    }

    /// Euclidean (not squared) distances of the strictly upper triangle.
    pub fn pairwise_distances(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.values[[i, j]].sqrt());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_rows_are_at_distance_zero() {
        let d = DistanceMatrix::from_features(array![[1.5, -2.0], [1.5, -2.0]].view()).unwrap();
        assert_eq!(d.values()[[0, 1]], 0.0);
    }

    #[test]
    fn analytic_distances() {
        let d = DistanceMatrix::from_features(array![[0.0], [3.0]].view()).unwrap();
        assert_eq!(d.values()[[0, 1]], 9.0);
        let d = DistanceMatrix::from_features(array![[0.0, 0.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(d.values()[[0, 1]], 25.0);
        assert_eq!(d.values()[[1, 0]], 25.0);
        assert_eq!(d.values()[[1, 1]], 0.0);
    }

    #[test]
    fn submatrix_follows_index_order() {
        let d = DistanceMatrix::from_features(array![[0.0], [1.0], [3.0]].view()).unwrap();
        let s = d.submatrix(&[2, 0]).unwrap();
        assert_eq!(s.values(), &array![[0.0, 9.0], [9.0, 0.0]]);
    }

    #[test]
    fn rejects_asymmetric_input() {
        assert!(DistanceMatrix::from_squared(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_squared(array![[0.0, 1.0], [1.0, 0.0]]).is_ok());
    }
}
