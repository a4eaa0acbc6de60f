use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    eigendecompose, encode_labels, gaussian_kernel, sigma_candidates, DistanceMatrix, EigenBasis,
    LabelEncoding, LabelMatrix, DEFAULT_QUANTILES,
};
use crate::dataset::{AlignedDataset, FeatureSet};
use crate::error::{Error, Result};

/// Knobs shared by every kernel-analysis entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaOptions {
    pub quantiles: Vec<f64>,
    pub encoding: LabelEncoding,
    /// Decompose the double-centred kernel instead of the raw one.
    pub centered: bool,
}

impl Default for KaOptions {
    fn default() -> Self {
        KaOptions {
            quantiles: DEFAULT_QUANTILES.to_vec(),
            encoding: LabelEncoding::default(),
            centered: false,
        }
    }
}

/// Class-averaged least-squares loss of the readout restricted to the
/// leading `d` eigenvectors, for `d = 0..=n`.
///
/// Runs as a residual update: starting from `R = Y`, each step removes the
/// projection onto the next eigenvector and records `||R||_F^2 / (n k)`.
pub fn loss_curve_for_sigma(basis: &EigenBasis, labels: &LabelMatrix) -> Result<Vec<f64>> {
    let n = labels.n_images();
    let k = labels.n_classes();
    if basis.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigenbasis of dimension {} for {n} labelled images",
            basis.dim()
        )));
    }
    let norm = 1.0 / (n as f64 * k as f64);
    // one contiguous residual vector per class
    let mut residual: Vec<Vec<f64>> = labels.values().columns().into_iter().map(|c| c.to_vec()).collect();
    let energy = |r: &[Vec<f64>]| r.iter().flatten().map(|v| v * v).sum::<f64>() * norm;

    let vectors = basis.vectors();
    let mut curve = Vec::with_capacity(n + 1);
    curve.push(energy(&residual));
    for d in 0..n {
        let column = vectors.column(d);
        let u = column.as_slice().expect("eigenvectors stored column-major");
        for r in residual.iter_mut() {
            let coef: f64 = u.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(u).for_each(|(ri, ui)| *ri -= coef * ui);
        }
        curve.push(energy(&residual));
    }
    Ok(curve)
}

/// Loss curves for each bandwidth candidate and their pointwise minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaCurve {
    /// Total dimensionality `D` (the number of images).
    pub dimension: usize,
    pub quantiles: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// `per_sigma[s][d]` is the loss at dimension `d` under `sigmas[s]`.
    pub per_sigma: Vec<Vec<f64>>,
    /// Minimum over bandwidths, `d = 0..=D`.
    pub loss: Vec<f64>,
    /// Bandwidth attaining `loss[d]`; ties go to the smallest bandwidth.
    pub argmin_sigma: Vec<f64>,
}

impl KaCurve {
    /// Builds the minimized curve from per-bandwidth curves. Candidates must be
    /// ordered by non-decreasing bandwidth for the tie rule to hold.
    pub fn from_candidates(quantiles: Vec<f64>, sigmas: Vec<f64>, per_sigma: Vec<Vec<f64>>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.len() != per_sigma.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bandwidths for {} curves",
                sigmas.len(),
                per_sigma.len()
            )));
        }
        let len = per_sigma[0].len();
        if len < 2 || per_sigma.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch("per-bandwidth curves differ in length".into()));
        }
        let mut loss = per_sigma[0].clone();
        let mut argmin_sigma = vec![sigmas[0]; len];
        for (curve, &sigma) in per_sigma.iter().zip(&sigmas).skip(1) {
            for d in 0..len {
                if curve[d] < loss[d] {
                    loss[d] = curve[d];
                    argmin_sigma[d] = sigma;
                }
            }
        }
        Ok(KaCurve {
            dimension: len - 1,
            quantiles,
            sigmas,
            per_sigma,
            loss,
            argmin_sigma,
        })
    }

    pub fn accuracy(&self) -> Vec<f64> {
        self.loss.iter().map(|e| 1.0 - e).collect()
    }

    /// Normalized complexity `d / D` for each point of the curve.
    pub fn complexity(&self) -> Vec<f64> {
        let big_d = self.dimension as f64;
        (0..=self.dimension).map(|d| d as f64 / big_d).collect()
    }

    pub fn auc(&self) -> f64 {
        ka_auc(self)
    }
}

pub fn ka_curve(features: &FeatureSet, labels: &LabelMatrix, options: &KaOptions) -> Result<KaCurve> {
    if features.n_images() != labels.n_images() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} label rows",
            features.n_images(),
            labels.n_images()
        )));
    }
    let distances = DistanceMatrix::from_features(features.features().view())?;
    ka_curve_from_distances(&distances, labels, options)
}

/// Same as [`ka_curve`] but reuses precomputed squared distances.
pub fn ka_curve_from_distances(
    distances: &DistanceMatrix,
    labels: &LabelMatrix,
    options: &KaOptions,
) -> Result<KaCurve> {
    if distances.len() != labels.n_images() {
        return Err(Error::DimensionMismatch(format!(
            "{} distance rows for {} label rows",
            distances.len(),
            labels.n_images()
        )));
    }
    let candidates = sigma_candidates(distances, &options.quantiles)?;
    let per_sigma = candidates
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let mut kernel = gaussian_kernel(distances, sigma)?;
            if options.centered {
                kernel = kernel.centered();
            }
            let basis = eigendecompose(&kernel)?;
            loss_curve_for_sigma(&basis, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    KaCurve::from_candidates(candidates.quantiles, candidates.sigmas, per_sigma)
}

/// Trapezoidal area under accuracy versus `d / D` on the grid `d = 0..=D`.
pub fn ka_auc(curve: &KaCurve) -> f64 {
    auc_from_loss(&curve.loss)
}

pub fn auc_from_loss(loss: &[f64]) -> f64 {
    assert!(loss.len() >= 2, "a curve needs at least two points");
    let step = 1.0 / (loss.len() - 1) as f64;
    loss.windows(2)
        .map(|w| (2.0 - w[0] - w[1]) * 0.5 * step)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaResult {
    pub auc: f64,
    pub curve: KaCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
}

/// Encodes labels, computes the curve and its area in one call.
pub fn evaluate(dataset: &AlignedDataset, options: &KaOptions) -> Result<KaResult> {
    let labels = encode_labels(dataset, options.encoding)?;
    let curve = ka_curve(dataset.features(), &labels, options)?;
    Ok(KaResult {
        auc: curve.auc(),
        curve,
        subset: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Variation;
    use crate::kernel::encode_class_indices;
    use ndarray::{array, Array2};

    #[test]
    fn trapezoid_with_step_at_first_dimension() {
        let big_d = 10;
        let mut loss = vec![0.0; big_d + 1];
        loss[0] = 1.0;
        let expected = 1.0 - 1.0 / (2.0 * big_d as f64);
        assert!((auc_from_loss(&loss) - expected).abs() < 1e-15);
    }

    #[test]
    fn linear_accuracy_has_half_area() {
        let big_d = 7;
        let loss: Vec<f64> = (0..=big_d).map(|d| 1.0 - d as f64 / big_d as f64).collect();
        assert!((auc_from_loss(&loss) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_candidate_curve_is_unchanged() {
        let c = vec![1.0, 0.4, 0.1, 0.0];
        let curve = KaCurve::from_candidates(vec![0.5], vec![2.0], vec![c.clone()]).unwrap();
        assert_eq!(curve.loss, c);
        assert_eq!(curve.argmin_sigma, vec![2.0; 4]);
    }

    #[test]
    fn ties_go_to_the_smallest_bandwidth() {
        let curve = KaCurve::from_candidates(
            vec![0.1, 0.5, 0.9],
            vec![1.0, 2.0, 3.0],
            vec![vec![1.0, 0.5, 0.0], vec![1.0, 0.3, 0.0], vec![1.0, 0.3, 0.0]],
        )
        .unwrap();
        assert_eq!(curve.loss, vec![1.0, 0.3, 0.0]);
        assert_eq!(curve.argmin_sigma, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn full_basis_reproduces_labels() {
        let fs = FeatureSet::new(
            (0..6).map(|i| format!("i{i}")).collect(),
            array![[0.0, 1.0], [0.3, 0.2], [1.0, 1.0], [2.0, 0.1], [0.5, 0.9], [1.4, 1.1]],
            Variation::Low,
        )
        .unwrap();
        let y = encode_class_indices(&[0, 0, 1, 1, 2, 2], vec!["a".into(), "b".into(), "c".into()], LabelEncoding::Signed)
            .unwrap();
        let curve = ka_curve(&fs, &y, &KaOptions::default()).unwrap();
        assert_eq!(curve.loss.len(), 7);
        assert!((curve.loss[0] - 1.0).abs() < 1e-15);
        for per in &curve.per_sigma {
            assert!(per[6] <= 1e-10);
            for w in per.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for d in 0..per.len() {
                assert!(curve.loss[d] <= per[d]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let fs = FeatureSet::new(vec!["a".into(), "b".into(), "c".into()], Array2::zeros((3, 1)), Variation::Low).unwrap();
        let y = encode_class_indices(&[0, 1], vec!["a".into(), "b".into()], LabelEncoding::Signed).unwrap();
        assert!(matches!(ka_curve(&fs, &y, &KaOptions::default()), Err(Error::DimensionMismatch(_))));
    }
}
