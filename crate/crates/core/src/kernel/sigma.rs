use serde::{Deserialize, Serialize};

use super::DistanceMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_QUANTILES: [f64; 3] = [0.10, 0.50, 0.90];

/// Gaussian bandwidths drawn from the pairwise-distance distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCandidates {
    pub quantiles: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl SigmaCandidates {
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

/// Checks that every quantile lies in (0, 1) and returns them sorted.
pub fn normalize_quantiles(quantiles: &[f64]) -> Result<Vec<f64>> {
    if quantiles.is_empty() {
        return Err(Error::invalid("at least one quantile is required"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::invalid(format!("quantile {q} outside (0, 1)")));
    }
    let mut sorted = quantiles.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Linear-interpolation quantile of an ascending slice: position `q (N - 1)`.
pub fn linear_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bandwidths at the given quantiles of the off-diagonal Euclidean distances.
///
/// A zero-valued quantile (many coincident points) is replaced by the
/// smallest positive distance so every candidate is strictly positive.
pub fn sigma_candidates(distances: &DistanceMatrix, quantiles: &[f64]) -> Result<SigmaCandidates> {
    let quantiles = normalize_quantiles(quantiles)?;
    let mut pairs = distances.pairwise_distances();
    pairs.sort_by(f64::total_cmp);
    let smallest_positive = pairs
        .iter()
        .copied()
        .find(|&d| d > 0.0)
        .ok_or(Error::ConstantRepresentation)?;
    let sigmas = quantiles
        .iter()
        .map(|&q| {
            let s = linear_quantile(&pairs, q);
            if s > 0.0 {
                s
            } else {
                smallest_positive
            }
        })
        .collect();
    Ok(SigmaCandidates { quantiles, sigmas })
}
