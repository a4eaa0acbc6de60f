//! The subset protocol: evaluate a representation on seeded, class-equalized
//! subsets of each variation level and aggregate the KA-AUCs.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AlignedDataset, Variation};
use crate::error::{Error, Result};
use crate::kernel::{
    encode_class_indices, ka_curve_from_distances, normalize_quantiles, DistanceMatrix, KaOptions, LabelEncoding,
};
use crate::rng::{keyed_rng, Domain};

pub const DEFAULT_SUBSETS: usize = 10;
pub const DEFAULT_FRACTION: f64 = 0.8;
/// Points on the shared `d / D` grid used for envelopes.
pub const ENVELOPE_POINTS: usize = 512;
pub const PERMUTATIONS: usize = 10_000;

/// Row indices of each subset, ascending within a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub seed: u64,
    pub n_subsets: usize,
    pub fraction: f64,
    pub subsets: Vec<Vec<usize>>,
}

/// Draws `n_subsets` class-equalized subsets.
///
/// Subset `s` takes `floor(fraction * n_c)` members of every class `c`
/// without replacement from the stream keyed by `(seed, s)`, then truncates
/// every class to the smallest of those counts.
pub fn make_subsets(classes: &[String], n_subsets: usize, fraction: f64, seed: u64) -> Result<SubsetSpec> {
    if n_subsets == 0 {
        return Err(Error::invalid("need at least one subset"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subset fraction must lie in (0, 1], got {fraction}")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        by_class.entry(c.as_str()).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::TooFewClasses(by_class.len()));
    }
    // small tolerance so products like 0.7 * 10 are not floored to 6
    let take = |n: usize| (fraction * n as f64 + 1e-9).floor() as usize;
    let per_class = by_class.values().map(|m| take(m.len())).min().unwrap_or(0);
    if per_class == 0 {
        let (class, members) = by_class.iter().min_by_key(|(_, m)| m.len()).expect("non-empty");
        return Err(Error::invalid(format!(
            "class {class:?} with {} member(s) is empty after sampling a {fraction} fraction",
            members.len()
        )));
    }

    let subsets = (0..n_subsets)
        .map(|s| {
            let mut rng = keyed_rng(seed, Domain::Subsets, s as u64);
            let mut rows = Vec::with_capacity(per_class * by_class.len());
            for members in by_class.values() {
                let drawn = index::sample(&mut rng, members.len(), take(members.len()));
                rows.extend(drawn.iter().take(per_class).map(|i| members[i]));
            }
            rows.sort_unstable();
            rows
        })
        .collect();
    Ok(SubsetSpec {
        seed,
        n_subsets,
        fraction,
        subsets,
    })
}

/// Pointwise accuracy statistics on a common normalized-complexity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCurve {
    pub subset: usize,
    pub dimension: usize,
    pub sigmas: Vec<f64>,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: Variation,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub auc_per_subset: Vec<f64>,
    pub envelope: Envelope,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub curves: Vec<SubsetCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub version: String,
    pub seed: u64,
    pub n_subsets: usize,
    pub fraction: f64,
    pub quantiles: Vec<f64>,
    pub encoding: LabelEncoding,
    pub centered: bool,
    pub levels: Vec<LevelReport>,
}

impl ProtocolReport {
    pub fn level(&self, level: Variation) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.level == level)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            context: "protocol report".into(),
            source: e,
        })
    }
}

/// Linear interpolation of accuracy `1 - loss[d]` at normalized complexity `x`.
fn accuracy_at(loss: &[f64], x: f64) -> f64 {
    let big_d = (loss.len() - 1) as f64;
    let pos = (x * big_d).clamp(0.0, big_d);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(loss.len() - 1);
    let frac = pos - lo as f64;
    1.0 - (loss[lo] + frac * (loss[hi] - loss[lo]))
}

fn envelope(curves: &[SubsetCurve]) -> Envelope {
    let grid: Vec<f64> = (0..ENVELOPE_POINTS)
        .map(|i| i as f64 / (ENVELOPE_POINTS - 1) as f64)
        .collect();
    let mut mean = Vec::with_capacity(grid.len());
    let mut min = Vec::with_capacity(grid.len());
    let mut max = Vec::with_capacity(grid.len());
    for &x in &grid {
        let values: Vec<f64> = curves.iter().map(|c| accuracy_at(&c.loss, x)).collect();
        mean.push(values.iter().sum::<f64>() / values.len() as f64);
        min.push(values.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Envelope { grid, mean, min, max }
}

pub const ENVELOPE_CSV_HEADER: &str = "d_over_D,mean,min,max";

pub fn envelope_csv(envelope: &Envelope) -> String {
    let mut out = String::from(ENVELOPE_CSV_HEADER);
    out.push('\n');
    for i in 0..envelope.grid.len() {
        out.push_str(&format!(
            "{:?},{:?},{:?},{:?}\n",
            envelope.grid[i], envelope.mean[i], envelope.min[i], envelope.max[i]
        ));
    }
    out
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs kernel analysis on every subset of one level and aggregates.
pub fn run_protocol(dataset: &AlignedDataset, subsets: &SubsetSpec, options: &KaOptions) -> Result<LevelReport> {
    let quantiles = normalize_quantiles(&options.quantiles)?;
    if let Some(&bad) = subsets.subsets.iter().flatten().find(|&&i| i >= dataset.n_images()) {
        return Err(Error::invalid(format!("subset index {bad} out of range for {} images", dataset.n_images())));
    }
    let distances = DistanceMatrix::from_features(dataset.features().features().view())?;
    let class_indices = dataset.class_indices();
    let class_names = dataset.class_names().to_vec();

    let curves = subsets
        .subsets
        .par_iter()
        .enumerate()
        .map(|(s, rows)| {
            let sub = distances.submatrix(rows)?;
            let idx: Vec<usize> = rows.iter().map(|&r| class_indices[r]).collect();
            let labels = encode_class_indices(&idx, class_names.clone(), options.encoding)?;
            let curve = ka_curve_from_distances(&sub, &labels, options)?;
            Ok(SubsetCurve {
                subset: s,
                dimension: curve.dimension,
                sigmas: curve.sigmas,
                loss: curve.loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let aucs: Vec<f64> = curves.iter().map(|c| crate::kernel::auc_from_loss(&c.loss)).collect();
    let (auc_mean, auc_std) = mean_and_sample_std(&aucs);
    Ok(LevelReport {
        level: dataset.features().variation(),
        auc_mean,
        auc_std,
        auc_per_subset: aucs,
        envelope: envelope(&curves),
        seed: subsets.seed,
        quantiles,
        curves,
    })
}

/// Draws subsets per level from one seed and runs the protocol on each level.
pub fn run_protocol_levels(
    levels: &[AlignedDataset],
    n_subsets: usize,
    fraction: f64,
    seed: u64,
    options: &KaOptions,
) -> Result<ProtocolReport> {
    let reports = levels
        .iter()
        .map(|ds| {
            let subsets = make_subsets(ds.classes(), n_subsets, fraction, seed)?;
            run_protocol(ds, &subsets, options)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProtocolReport {
        version: crate::VERSION.to_string(),
        seed,
        n_subsets,
        fraction,
        quantiles: normalize_quantiles(&options.quantiles)?,
        encoding: options.encoding,
        centered: options.centered,
        levels: reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub level: Variation,
    /// Mean over subsets of `auc_a - auc_b`.
    pub delta_mean: f64,
    pub p_value: f64,
    pub n_subsets: usize,
    pub permutations: usize,
    /// True when every sign pattern was enumerated instead of sampled.
    pub exact: bool,
    pub seed: u64,
}

/// Paired two-sided sign-flip permutation test on per-subset AUCs.
///
/// When `2^n <= 10^4` all sign patterns are enumerated and the p-value is
/// exact; otherwise 10^4 patterns are drawn from the seeded stream and the
/// p-value is `(1 + hits) / (1 + 10^4)`.
pub fn compare(a: &ProtocolReport, b: &ProtocolReport, level: Variation, seed: u64) -> Result<ComparisonReport> {
    let la = a
        .level(level)
        .ok_or_else(|| Error::invalid(format!("first report has no {level} level")))?;
    let lb = b
        .level(level)
        .ok_or_else(|| Error::invalid(format!("second report has no {level} level")))?;
    if la.auc_per_subset.len() != lb.auc_per_subset.len() {
        return Err(Error::invalid(format!(
            "subset counts differ: {} vs {}",
            la.auc_per_subset.len(),
            lb.auc_per_subset.len()
        )));
    }
    let diffs: Vec<f64> = la
        .auc_per_subset
        .iter()
        .zip(&lb.auc_per_subset)
        .map(|(x, y)| x - y)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::invalid("reports contain no subsets"));
    }
    let delta_mean = diffs.iter().sum::<f64>() / n as f64;
    let observed = delta_mean.abs();
    let threshold = observed - 1e-12 * observed.max(1e-300);
    let flipped_mean = |signs: &dyn Fn(usize) -> bool| {
        diffs
            .iter()
            .enumerate()
            .map(|(i, d)| if signs(i) { -d } else { *d })
            .sum::<f64>()
            / n as f64
    };

    let exact = n < 64 && (1u64 << n) <= PERMUTATIONS as u64;
    let (p_value, permutations) = if exact {
        let total = 1u64 << n;
        let hits = (0..total)
            .filter(|mask| flipped_mean(&|i| mask >> i & 1 == 1).abs() >= threshold)
            .count();
        (hits as f64 / total as f64, total as usize)
    } else {
        let mut rng = keyed_rng(seed, Domain::Permutation, 0);
        let mut hits = 0usize;
        for _ in 0..PERMUTATIONS {
            let signs: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            if flipped_mean(&|i| signs[i]).abs() >= threshold {
                hits += 1;
            }
        }
        ((1 + hits) as f64 / (1 + PERMUTATIONS) as f64, PERMUTATIONS)
    };
    Ok(ComparisonReport {
        level,
        delta_mean,
        p_value,
        n_subsets: n,
        permutations,
        exact,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_classes(k: usize, per: usize) -> Vec<String> {
        (0..k * per).map(|i| format!("c{}", i / per)).collect()
    }

    #[test]
    fn low_variation_arithmetic() {
        let classes = balanced_classes(7, 70);
        let spec = make_subsets(&classes, 10, 0.8, 42).unwrap();
        assert_eq!(spec.subsets.len(), 10);
        for s in &spec.subsets {
            assert_eq!(s.len(), 392);
            let mut counts = BTreeMap::new();
            for &i in s {
                *counts.entry(&classes[i]).or_insert(0) += 1;
            }
            assert!(counts.values().all(|&c| c == 56));
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        assert_ne!(spec.subsets[0], spec.subsets[1]);
    }

    #[test]
    fn subsets_are_deterministic() {
        let classes = balanced_classes(3, 9);
        assert_eq!(
            make_subsets(&classes, 4, 0.8, 5).unwrap(),
            make_subsets(&classes, 4, 0.8, 5).unwrap()
        );
    }

    #[test]
    fn full_fraction_equalizes_to_smallest_class() {
        let mut classes = balanced_classes(2, 5);
        classes.extend(["c2".to_string(), "c2".to_string(), "c2".to_string()]);
        let spec = make_subsets(&classes, 1, 1.0, 0).unwrap();
        assert_eq!(spec.subsets[0].len(), 9);
        let c2 = spec.subsets[0].iter().filter(|&&i| classes[i] == "c2").count();
        assert_eq!(c2, 3);
    }

    #[test]
    fn rejects_empty_classes_and_bad_params() {
        let classes = balanced_classes(2, 2);
        assert!(make_subsets(&classes, 1, 0.4, 0).is_err());
        assert!(make_subsets(&classes, 0, 0.8, 0).is_err());
        assert!(make_subsets(&classes, 1, 1.5, 0).is_err());
    }

    #[test]
    fn interpolated_accuracy() {
        let loss = [1.0, 0.5, 0.0];
        assert_eq!(accuracy_at(&loss, 0.0), 0.0);
        assert_eq!(accuracy_at(&loss, 0.25), 0.25);
        assert_eq!(accuracy_at(&loss, 1.0), 1.0);
    }

    fn report_with(aucs: Vec<f64>) -> ProtocolReport {
        let (auc_mean, auc_std) = mean_and_sample_std(&aucs);
        ProtocolReport {
            version: "test".into(),
            seed: 0,
            n_subsets: aucs.len(),
            fraction: 0.8,
            quantiles: vec![0.5],
            encoding: LabelEncoding::Standardized,
            centered: false,
            levels: vec![LevelReport {
                level: Variation::Medium,
                auc_mean,
                auc_std,
                auc_per_subset: aucs,
                envelope: Envelope {
                    grid: vec![],
                    mean: vec![],
                    min: vec![],
                    max: vec![],
                },
                seed: 0,
                quantiles: vec![0.5],
                curves: vec![],
            }],
        }
    }

    #[test]
    fn identical_reports_are_not_different() {
        let r = report_with(vec![0.7, 0.71, 0.69, 0.7, 0.72]);
        let c = compare(&r, &r, Variation::Medium, 1).unwrap();
        assert_eq!(c.delta_mean, 0.0);
        assert_eq!(c.p_value, 1.0);
    }

    #[test]
    fn uniform_shift_reaches_minimum_p() {
        let b: Vec<f64> = (0..10).map(|i| 0.5 + 0.001 * i as f64).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let c = compare(&report_with(a), &report_with(b), Variation::Medium, 1).unwrap();
        assert!((c.delta_mean - 0.2).abs() < 1e-12);
        assert!(c.exact);
        // only the identity pattern and its mirror are as extreme
        assert_eq!(c.p_value, 2.0 / 1024.0);
    }

    #[test]
    fn sampled_test_is_seeded() {
        let b: Vec<f64> = (0..20).map(|i| 0.5 + 0.01 * (i % 3) as f64).collect();
        let a: Vec<f64> = b.iter().enumerate().map(|(i, x)| x + if i % 2 == 0 { 0.01 } else { -0.005 }).collect();
        let (ra, rb) = (report_with(a), report_with(b));
        let c1 = compare(&ra, &rb, Variation::Medium, 3).unwrap();
        let c2 = compare(&ra, &rb, Variation::Medium, 3).unwrap();
        assert!(!c1.exact);
        assert_eq!(c1, c2);
        assert!(c1.p_value > 0.0 && c1.p_value <= 1.0);
    }

    #[test]
    fn compare_errors() {
        let r = report_with(vec![0.5, 0.6]);
        assert!(compare(&r, &r, Variation::Low, 0).is_err());
        assert!(compare(&r, &report_with(vec![0.5, 0.6, 0.7]), Variation::Medium, 0).is_err());
    }
}
