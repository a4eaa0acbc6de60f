use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd;
use faer::{Mat, Par};
use ndarray::{s, Array2, ArrayView2, ShapeBuilder};

use super::DistanceMatrix;
use crate::error::{Error, Result};

/// Gaussian kernel matrix `K_ij = exp(-D_ij / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    sigma: f64,
    centered: bool,
}

impl KernelMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Double-centred kernel `H K H` with `H = I - 11^T / n`.
    pub fn centered(&self) -> KernelMatrix {
        let n = self.len();
        let nf = n as f64;
        let row_means: Vec<f64> = self.values.rows().into_iter().map(|r| r.sum() / nf).collect();
        let grand = row_means.iter().sum::<f64>() / nf;
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = self.values[[i, j]] - row_means[i] - row_means[j] + grand;
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        KernelMatrix {
            values,
            sigma: self.sigma,
            centered: true,
        }
    }
}

pub fn gaussian_kernel(distances: &DistanceMatrix, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    let d = distances.values();
    let n = d.nrows();
    let scale = 1.0 / (2.0 * sigma * sigma);
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in i + 1..n {
            let k = (-d[[i, j]] * scale).exp();
            values[[i, j]] = k;
            values[[j, i]] = k;
        }
    }
    Ok(KernelMatrix {
        values,
        sigma,
        centered: false,
    })
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Eigenvectors as columns, stored column-major so each is contiguous.
    vectors: Array2<f64>,
    values: Vec<f64>,
    clamped: usize,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    /// The `d` leading eigenvectors.
    pub fn leading(&self, d: usize) -> ArrayView2<'_, f64> {
        self.vectors.slice(s![.., ..d])
    }

    /// The `d` leading eigenvalues. Not used by the loss, which depends on
    /// the eigenvectors only.
    pub fn leading_values(&self, d: usize) -> &[f64] {
        &self.values[..d]
    }

    /// Number of eigenvalues that were significantly negative and clamped to 0.
    pub fn clamped(&self) -> usize {
        self.clamped
    }
}

pub fn eigendecompose(kernel: &KernelMatrix) -> Result<EigenBasis> {
    eigendecompose_symmetric(kernel.values().view())
}

/// Symmetric eigendecomposition. Eigenvalues are sorted descending and each
/// eigenvector is signed so that its first nonzero component is positive.
/// Eigenvalues below `-1e-8 * lambda_1` are reported as 0 with a warning.
pub fn eigendecompose_symmetric(matrix: ArrayView2<'_, f64>) -> Result<EigenBasis> {
    let (n, m) = matrix.dim();
    if n != m || n == 0 {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {n}x{m}")));
    }
    let a = Mat::<f64>::from_fn(n, n, |i, j| matrix[[i, j]]);
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = Diag::<f64>::zeros(n);
    // Sequential so the basis is bit-reproducible; callers parallelise across
    // independent decompositions instead.
    let par = Par::Seq;
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        evd::ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Eigen(format!("{e:?}")))?;

    // faer returns ascending order
    let mut values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let mut data = Vec::with_capacity(n * n);
    for col in (0..n).rev() {
        let start = data.len();
        data.extend((0..n).map(|row| u[(row, col)]));
        let v = &mut data[start..];
        let pivot = v.iter().copied().find(|x| x.abs() > 16.0 * f64::EPSILON).unwrap_or(0.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let vectors = Array2::from_shape_vec((n, n).f(), data).expect("n*n entries");

    let floor = -1e-8 * values[0].abs();
    let mut clamped = 0;
    for v in values.iter_mut().filter(|v| **v < floor) {
        *v = 0.0;
        clamped += 1;
    }
    if clamped > 0 {
        log::warn!("{clamped} eigenvalue(s) below -1e-8 * lambda_1 clamped to 0; matrix may be numerically asymmetric");
    }
    Ok(EigenBasis {
        vectors,
        values,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_diagonal_and_analytic_entry() {
        let sigma = 1.5;
        let d = 2.0 * sigma * sigma;
        let dm = DistanceMatrix::from_squared(array![[0.0, d], [d, 0.0]]).unwrap();
        let k = gaussian_kernel(&dm, sigma).unwrap();
        assert_eq!(k.values()[[0, 0]], 1.0);
        assert_eq!(k.values()[[1, 1]], 1.0);
        assert!((k.values()[[0, 1]] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.values()[[0, 1]] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn wide_kernel_tends_to_all_ones() {
        let dm = DistanceMatrix::from_features(array![[0.0], [1.0], [5.0]].view()).unwrap();
        let max = dm.values().iter().copied().fold(0.0, f64::max);
        let k = gaussian_kernel(&dm, (1e6 * max).sqrt()).unwrap();
        assert!(k.values().iter().all(|&v| (v - 1.0).abs() <= 1e-6));
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let dm = DistanceMatrix::from_features(array![[0.0], [1.0]].view()).unwrap();
        assert!(gaussian_kernel(&dm, 0.0).is_err());
        assert!(gaussian_kernel(&dm, -1.0).is_err());
    }

    #[test]
    fn identity_spectrum() {
        let eb = eigendecompose_symmetric(Array2::<f64>::eye(4).view()).unwrap();
        for &v in eb.values() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn all_ones_is_rank_one() {
        let eb = eigendecompose_symmetric(Array2::<f64>::ones((4, 4)).view()).unwrap();
        assert!((eb.values()[0] - 4.0).abs() < 1e-12);
        for &v in &eb.values()[1..] {
            assert!(v.abs() < 1e-12);
        }
        for &x in eb.vectors().column(0) {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstructs_random_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let dm = DistanceMatrix::from_features(x.view()).unwrap();
        let k = gaussian_kernel(&dm, 0.7).unwrap();
        let eb = eigendecompose(&k).unwrap();
        let u = eb.vectors();
        let lambda = Array2::from_diag(&ndarray::Array1::from(eb.values().to_vec()));
        let rec = u.dot(&lambda).dot(&u.t());
        let err = (&rec - k.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-8, "reconstruction error {err}");
        let gram = u.t().dot(&u);
        let orth = (&gram - &Array2::<f64>::eye(n)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(orth <= 1e-10, "orthogonality error {orth}");
        assert!(eb.values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvectors_follow_sign_convention() {
        let m = array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        let eb = eigendecompose_symmetric(m.view()).unwrap();
        for col in eb.vectors().columns() {
            let first = col.iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn clamps_clearly_negative_eigenvalues() {
        let m = array![[1.0, 0.0], [0.0, -0.5]];
        let eb = eigendecompose_symmetric(m.view()).unwrap();
        assert_eq!(eb.values(), &[1.0, 0.0]);
        assert_eq!(eb.clamped(), 1);
    }

    #[test]
    fn centering_annihilates_constants() {
        let dm = DistanceMatrix::from_features(array![[0.0], [1.0], [3.0], [4.0]].view()).unwrap();
        let k = gaussian_kernel(&dm, 1.0).unwrap().centered();
        for r in k.values().rows() {
            assert!(r.sum().abs() < 1e-14);
        }
    }
}
