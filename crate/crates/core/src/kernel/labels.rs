use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::AlignedDataset;
use crate::error::{Error, Result};

/// How one-vs-all class membership is turned into regression targets.
///
/// * `Binary`: 1 for members, 0 otherwise.
/// * `Signed`: +1 for members, -1 otherwise.
/// * `Standardized`: membership indicators shifted and scaled per column to
///   zero mean and unit (population) variance. The zero predictor then has
///   loss exactly 1, and label-independent features score near 0.5 KA-AUC
///   for any number of classes. With two balanced classes it equals `Signed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelEncoding {
    #[default]
    Standardized,
    Signed,
    Binary,
}

impl LabelEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelEncoding::Standardized => "standardized",
            LabelEncoding::Signed => "signed",
            LabelEncoding::Binary => "binary",
        }
    }
}

impl fmt::Display for LabelEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standardized" => Ok(LabelEncoding::Standardized),
            "signed" => Ok(LabelEncoding::Signed),
            "binary" => Ok(LabelEncoding::Binary),
            other => Err(Error::invalid(format!("unknown label encoding {other:?}"))),
        }
    }
}

/// The `n x k` one-vs-all target matrix. Column `j` belongs to
/// `class_names[j]`; class names are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Array2<f64>,
    encoding: LabelEncoding,
    class_names: Vec<String>,
}

impl LabelMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn encoding(&self) -> LabelEncoding {
        self.encoding
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_images(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.values.ncols()
    }

    /// Rows restricted to `rows`, re-encoded from scratch so per-column
    /// standardization reflects the subset.
    pub fn select_rows(&self, rows: &[usize]) -> Result<LabelMatrix> {
        let indices: Vec<usize> = rows
            .iter()
            .map(|&r| {
                self.values
                    .row(r)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .expect("k >= 1")
            })
            .collect();
        encode_class_indices(&indices, self.class_names.clone(), self.encoding)
    }
}

pub fn encode_labels(dataset: &AlignedDataset, encoding: LabelEncoding) -> Result<LabelMatrix> {
    encode_class_indices(&dataset.class_indices(), dataset.class_names().to_vec(), encoding)
}

/// Encodes per-row class indices (into `class_names`).
pub fn encode_class_indices(
    indices: &[usize],
    class_names: Vec<String>,
    encoding: LabelEncoding,
) -> Result<LabelMatrix> {
    let k = class_names.len();
    let n = indices.len();
    if k < 2 {
        return Err(Error::TooFewClasses(k));
    }
    if let Some(&bad) = indices.iter().find(|&&c| c >= k) {
        return Err(Error::invalid(format!("class index {bad} out of range for {k} classes")));
    }
    let mut counts = vec![0usize; k];
    for &c in indices {
        counts[c] += 1;
    }
    let (member, other): (Vec<f64>, Vec<f64>) = match encoding {
        LabelEncoding::Binary => (vec![1.0; k], vec![0.0; k]),
        LabelEncoding::Signed => (vec![1.0; k], vec![-1.0; k]),
        LabelEncoding::Standardized => {
            if let Some(j) = counts.iter().position(|&c| c == 0 || c == n) {
                return Err(Error::invalid(format!(
                    "class {:?} has {} of {n} images; standardized labels need a non-constant column",
                    class_names[j], counts[j]
                )));
            }
            counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n as f64;
                    let sd = (p * (1.0 - p)).sqrt();
                    ((1.0 - p) / sd, -p / sd)
                })
                .unzip()
        }
    };
    let values = Array2::from_shape_fn((n, k), |(i, j)| {
        if indices[i] == j {
            member[j]
        } else {
            other[j]
        }
    });
    Ok(LabelMatrix {
        values,
        encoding,
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn signed_encoding() {
        let y = encode_class_indices(&[0, 1, 0], names(), LabelEncoding::Signed).unwrap();
        assert_eq!(y.values(), &array![[1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]]);
    }

    #[test]
    fn binary_encoding() {
        let y = encode_class_indices(&[0, 1, 0], names(), LabelEncoding::Binary).unwrap();
        assert_eq!(y.values(), &array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance() {
        let y = encode_class_indices(&[0, 1, 0, 2, 2, 2], vec!["a".into(), "b".into(), "c".into()], LabelEncoding::Standardized)
            .unwrap();
        for col in y.values().columns() {
            let n = col.len() as f64;
            assert!((col.sum() / n).abs() < 1e-15);
            assert!((col.iter().map(|v| v * v).sum::<f64>() / n - 1.0).abs() < 1e-14);
        }
        // exactly one positive entry per row
        for row in y.values().rows() {
            assert_eq!(row.iter().filter(|&&v| v > 0.0).count(), 1);
        }
    }

    #[test]
    fn standardized_equals_signed_for_two_balanced_classes() {
        let idx = [0, 1, 1, 0];
        let a = encode_class_indices(&idx, names(), LabelEncoding::Standardized).unwrap();
        let b = encode_class_indices(&idx, names(), LabelEncoding::Signed).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn rejects_single_class() {
        assert!(matches!(
            encode_class_indices(&[0, 0], vec!["A".into()], LabelEncoding::Signed),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn select_rows_reencodes() {
        let y = encode_class_indices(&[0, 1, 0, 1, 1], names(), LabelEncoding::Binary).unwrap();
        let sub = y.select_rows(&[4, 0]).unwrap();
        assert_eq!(sub.values(), &array![[0.0, 1.0], [1.0, 0.0]]);
    }
}
