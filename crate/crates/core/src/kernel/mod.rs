//! Kernel analysis: Gaussian kernels over pairwise distances, their ordered
//! eigendecomposition, and the readout loss as a function of how many leading
//! eigenvectors the linear readout may use.
//!
//! For a bandwidth `sigma` with eigenvectors `u_1, u_2, ...` sorted by
//! decreasing eigenvalue, the loss at dimension `d` is
//!
//! ```text
//! e(d, sigma) = mean_j (1/n) || U_d U_d^T Y_j - Y_j ||^2
//! ```
//!
//! and `e(d)` is its minimum over the bandwidth candidates. Accuracy is
//! `1 - e(d)`, plotted against the normalized complexity `d / D`.

mod curve;
mod distance;
mod eigen;
mod export;
mod labels;
mod sigma;

pub use curve::{
    auc_from_loss, evaluate, ka_auc, ka_curve, ka_curve_from_distances, loss_curve_for_sigma, KaCurve, KaOptions,
    KaResult,
};
pub use distance::DistanceMatrix;
pub use eigen::{eigendecompose, eigendecompose_symmetric, gaussian_kernel, EigenBasis, KernelMatrix};
pub use export::{curve_csv, CurveSummary, CURVE_CSV_HEADER};
pub use labels::{encode_class_indices, encode_labels, LabelEncoding, LabelMatrix};
pub use sigma::{linear_quantile, normalize_quantiles, sigma_candidates, SigmaCandidates, DEFAULT_QUANTILES};
