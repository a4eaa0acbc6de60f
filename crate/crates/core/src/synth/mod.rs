//! Synthetic representations whose kernel-analysis behaviour is known in
//! advance, used as stand-ins for real feature exports.

mod oracle;

pub use oracle::{jacobi_eigen, oracle_curve, ORACLE_MAX_IMAGES};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSet, LabelFrame, Variation};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Every image of class `j` sits at `separation * e_j`.
    Onehot,
    /// Class centroids on a sphere of radius `separation`, plus isotropic
    /// Gaussian noise of standard deviation `noise` per coordinate.
    Clusters,
    /// Standard normal features, independent of the labels.
    Noise,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "onehot" => Ok(SynthKind::Onehot),
            "clusters" => Ok(SynthKind::Clusters),
            "noise" => Ok(SynthKind::Noise),
            other => Err(Error::invalid(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Onehot => "onehot",
            SynthKind::Clusters => "clusters",
            SynthKind::Noise => "noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub k: usize,
    pub n_per_class: usize,
    /// Feature dimension; one-hot sets need `p >= k`.
    pub p: usize,
    pub noise: f64,
    pub separation: f64,
    pub seed: u64,
    #[serde(default)]
    pub variation: Variation,
}

impl SynthSpec {
    pub fn onehot(k: usize, n_per_class: usize, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::Onehot,
            k,
            n_per_class,
            p: k,
            noise: 0.0,
            separation: 1.0,
            seed,
            variation: Variation::Unspecified,
        }
    }

    pub fn clusters(k: usize, n_per_class: usize, p: usize, noise: f64, separation: f64, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::Clusters,
            k,
            n_per_class,
            p,
            noise,
            separation,
            seed,
            variation: Variation::Unspecified,
        }
    }

    pub fn noise(k: usize, n_per_class: usize, p: usize, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::Noise,
            k,
            n_per_class,
            p,
            noise: 1.0,
            separation: 0.0,
            seed,
            variation: Variation::Unspecified,
        }
    }

    pub fn n_images(&self) -> usize {
        self.k * self.n_per_class
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("need k >= 2 classes, got {}", self.k)));
        }
        if self.n_per_class < 2 {
            return Err(Error::invalid(format!("need at least 2 images per class, got {}", self.n_per_class)));
        }
        if self.p < 1 {
            return Err(Error::invalid("need at least one feature dimension"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise must be finite and non-negative, got {}", self.noise)));
        }
        if !self.separation.is_finite() {
            return Err(Error::invalid("separation must be finite"));
        }
        if self.kind == SynthKind::Onehot && self.p < self.k {
            return Err(Error::invalid(format!("one-hot sets need p >= k ({} < {})", self.p, self.k)));
        }
        Ok(())
    }
}

fn class_name(j: usize, k: usize) -> String {
    let width = (k - 1).to_string().len();
    format!("c{j:0width$}")
}

/// Generates features and labels. Rows are grouped by class.
pub fn generate(spec: &SynthSpec) -> Result<(FeatureSet, LabelFrame)> {
    spec.validate()?;
    let n = spec.n_images();
    let width = (n - 1).to_string().len();
    let ids: Vec<String> = (0..n).map(|i| format!("img{i:0width$}")).collect();
    let classes: Vec<String> = (0..n).map(|i| class_name(i / spec.n_per_class, spec.k)).collect();

    let features = match spec.kind {
        SynthKind::Onehot => Array2::from_shape_fn((n, spec.p), |(i, m)| {
            if m == i / spec.n_per_class {
                spec.separation
            } else {
                0.0
            }
        }),
        SynthKind::Clusters => {
            let mut rng = keyed_rng(spec.seed, Domain::Synth, 0);
            let centroids: Vec<Vec<f64>> = (0..spec.k)
                .map(|_| {
                    let v: Vec<f64> = (0..spec.p).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    v.into_iter().map(|x| x * spec.separation / norm).collect()
                })
                .collect();
            let mut rng = keyed_rng(spec.seed, Domain::Synth, 1);
            let mut x = Array2::zeros((n, spec.p));
            for i in 0..n {
                let c = &centroids[i / spec.n_per_class];
                for m in 0..spec.p {
                    let z: f64 = rng.sample(StandardNormal);
                    x[[i, m]] = c[m] + spec.noise * z;
                }
            }
            x
        }
        SynthKind::Noise => {
            let mut rng = keyed_rng(spec.seed, Domain::Synth, 2);
            Array2::from_shape_simple_fn((n, spec.p), || rng.sample(StandardNormal))
        }
    };
    let fs = FeatureSet::new(ids.clone(), features, spec.variation)?;
    let lf = LabelFrame::new(ids, classes)?;
    Ok((fs, lf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn distinct_rows(fs: &FeatureSet) -> usize {
        fs.features()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<HashSet<_>>()
            .len()
    }

    #[test]
    fn onehot_shape() {
        let (fs, lf) = generate(&SynthSpec::onehot(7, 70, 1)).unwrap();
        assert_eq!(fs.features().dim(), (490, 7));
        assert_eq!(distinct_rows(&fs), 7);
        assert_eq!(lf.len(), 490);
    }

    #[test]
    fn noiseless_clusters_collapse_to_k_points() {
        let (fs, _) = generate(&SynthSpec::clusters(5, 10, 8, 0.0, 1.0, 4)).unwrap();
        assert_eq!(distinct_rows(&fs), 5);
        for r in fs.features().rows() {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SynthSpec::clusters(3, 4, 5, 0.3, 1.0, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn class_names_sort_numerically() {
        let (_, lf) = generate(&SynthSpec::noise(12, 2, 3, 0)).unwrap();
        let mut names: Vec<&String> = lf.classes().iter().collect();
        names.dedup();
        assert_eq!(names.first().unwrap().as_str(), "c00");
        assert!(names.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate(&SynthSpec::onehot(1, 5, 0)).is_err());
        assert!(generate(&SynthSpec::onehot(3, 1, 0)).is_err());
        let mut spec = SynthSpec::onehot(4, 3, 0);
        spec.p = 3;
        assert!(generate(&spec).is_err());
        assert!(generate(&SynthSpec::clusters(3, 3, 2, -1.0, 1.0, 0)).is_err());
    }
}
