//! KA-AUC as a function of the number of feature columns (recording sites),
//! and the saturating fit `AUC(t) = a + b * exp(-c * t^d)` whose `a`
//! estimates the full-population asymptote.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AlignedDataset;
use crate::error::{Error, Result};
use crate::kernel::{encode_labels, ka_curve, normalize_quantiles, KaOptions, LabelEncoding};
use crate::protocol::mean_and_sample_std;
use crate::rng::{keyed_rng, pair_index, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPoint {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
    pub aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingCurve {
    pub points: Vec<SamplingPoint>,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub encoding: LabelEncoding,
    pub n_features: usize,
}

impl SamplingCurve {
    /// Builds a curve from precomputed means, e.g. for fitting external data.
    pub fn from_means(ts: &[usize], means: &[f64]) -> Result<Self> {
        if ts.len() != means.len() {
            return Err(Error::DimensionMismatch(format!("{} site counts for {} AUC values", ts.len(), means.len())));
        }
        check_grid(ts, usize::MAX)?;
        Ok(SamplingCurve {
            points: ts
                .iter()
                .zip(means)
                .map(|(&t, &mean)| SamplingPoint {
                    t,
                    mean,
                    std: 0.0,
                    repeats: 1,
                    aucs: vec![mean],
                })
                .collect(),
            seed: 0,
            quantiles: Vec::new(),
            encoding: LabelEncoding::default(),
            n_features: ts.last().copied().unwrap_or(0),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean,std\n");
        for p in &self.points {
            out.push_str(&format!("{},{:?},{:?}\n", p.t, p.mean, p.std));
        }
        out
    }
}

fn check_grid(t_grid: &[usize], p: usize) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("site-count grid is empty"));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t < 1) {
        return Err(Error::invalid(format!("site counts must be at least 1, got {t}")));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| t > p) {
        return Err(Error::invalid(format!("site count {t} exceeds the {p} available feature columns")));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("site-count grid must be strictly increasing"));
    }
    Ok(())
}

/// For each `t`, evaluates `repeats` uniformly drawn column subsets of size
/// `t`. Draw `r` at grid value `t` uses the stream keyed by `(seed, t, r)`.
pub fn subsample_sites_auc(
    dataset: &AlignedDataset,
    t_grid: &[usize],
    repeats: usize,
    seed: u64,
    options: &KaOptions,
) -> Result<SamplingCurve> {
    let p = dataset.features().n_features();
    check_grid(t_grid, p)?;
    if repeats < 1 {
        return Err(Error::invalid("need at least one repeat per site count"));
    }
    let labels = encode_labels(dataset, options.encoding)?;
    let jobs: Vec<(usize, usize)> = t_grid.iter().flat_map(|&t| (0..repeats).map(move |r| (t, r))).collect();
    let aucs = jobs
        .par_iter()
        .map(|&(t, r)| {
            let mut rng = keyed_rng(seed, Domain::Sites, pair_index(t as u64, r as u64));
            let mut columns = index::sample(&mut rng, p, t).into_vec();
            columns.sort_unstable();
            let features = dataset.features().select_columns(&columns)?;
            Ok(ka_curve(&features, &labels, options)?.auc())
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = t_grid
        .iter()
        .zip(aucs.chunks(repeats))
        .map(|(&t, chunk)| {
            let (mean, std) = mean_and_sample_std(chunk);
            SamplingPoint {
                t,
                mean,
                std,
                repeats,
                aucs: chunk.to_vec(),
            }
        })
        .collect();
    Ok(SamplingCurve {
        points,
        seed,
        quantiles: normalize_quantiles(&options.quantiles)?,
        encoding: options.encoding,
        n_features: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeighting {
    #[default]
    Unweighted,
    /// Residuals scaled by `1 / std` of each point.
    InverseStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d_exp: f64,
    pub rss: f64,
    pub converged: bool,
    pub weighting: FitWeighting,
}

pub fn predict_auc(fit: &SaturationFit, t: f64) -> f64 {
    fit.a + fit.b * (-fit.c * t.powf(fit.d_exp)).exp()
}

const A_BOUNDS: (f64, f64) = (0.0, 1.0);
const C_BOUNDS: (f64, f64) = (1e-12, 1e3);
const D_BOUNDS: (f64, f64) = (1e-6, 4.0);
const START_C: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
const START_D: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const MAX_ITER: usize = 500;

/// Parameters are `(a, b, ln c, ln d)`; the log scale keeps `c` and `d`
/// positive and evens out the conditioning.
type Params = [f64; 4];

fn clamp(p: Params) -> Params {
    [
        p[0].clamp(A_BOUNDS.0, A_BOUNDS.1),
        p[1],
        p[2].clamp(C_BOUNDS.0.ln(), C_BOUNDS.1.ln()),
        p[3].clamp(D_BOUNDS.0.ln(), D_BOUNDS.1.ln()),
    ]
}

fn model(p: &Params, t: f64) -> f64 {
    p[0] + p[1] * (-p[2].exp() * t.powf(p[3].exp())).exp()
}

fn weighted_rss(p: &Params, ts: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    ts.iter()
        .zip(ys)
        .zip(ws)
        .map(|((&t, &y), &w)| (w * (y - model(p, t))).powi(2))
        .sum()
}

/// Solves the 4x4 system `m x = v` by Gaussian elimination with partial
/// pivoting. Returns `None` when singular.
fn solve4(mut m: [[f64; 4]; 4], mut v: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    Some(x)
}

/// Levenberg-Marquardt with box projection. Returns the final parameters,
/// their weighted RSS and whether a convergence test fired.
fn levenberg_marquardt(start: Params, ts: &[f64], ys: &[f64], ws: &[f64]) -> (Params, f64, bool) {
    let mut p = clamp(start);
    let mut rss = weighted_rss(&p, ts, ys, ws);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        if rss == 0.0 {
            return (p, rss, true);
        }
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        let (c, d) = (p[2].exp(), p[3].exp());
        for ((&t, &y), &w) in ts.iter().zip(ys).zip(ws) {
            let td = t.powf(d);
            let e = (-c * td).exp();
            let r = w * (y - (p[0] + p[1] * e));
            let grad = [
                w,
                w * e,
                w * (-p[1] * td * e) * c,
                w * (-p[1] * c * td * t.ln() * e) * d,
            ];
            for i in 0..4 {
                jtr[i] += grad[i] * r;
                for j in 0..4 {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }
        let scale = (0..4).map(|i| jtj[i][i]).fold(0.0, f64::max);
        if jtr.iter().all(|g| g.abs() <= 1e-15 * scale.max(1e-300).sqrt() * rss.sqrt()) {
            return (p, rss, true);
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * (jtj[i][i] + 1e-12 * scale);
            }
            let Some(step) = solve4(damped, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = clamp([p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]]);
            let candidate_rss = weighted_rss(&candidate, ts, ys, ws);
            if candidate_rss < rss {
                let small_step = (0..4).all(|i| (candidate[i] - p[i]).abs() <= 1e-12 * (1.0 + p[i].abs()));
                let small_gain = rss - candidate_rss <= 1e-15 * rss;
                p = candidate;
                rss = candidate_rss;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small_step || small_gain {
                    return (p, rss, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left at any damping: a stationary point
            return (p, rss, true);
        }
    }
    (p, rss, false)
}

/// Fits the saturating curve to the mean AUCs from 16 fixed starts and keeps
/// the lowest residual. Falls back to the constant model if nothing beats it.
pub fn fit_saturation(curve: &SamplingCurve, weighting: FitWeighting) -> Result<SaturationFit> {
    let points = &curve.points;
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 site counts to fit 4 parameters, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[0].t >= w[1].t) {
        return Err(Error::invalid("site counts must be strictly increasing"));
    }
    if let Some(p) = points.iter().find(|p| !p.mean.is_finite()) {
        return Err(Error::invalid(format!("non-finite AUC at t = {}", p.t)));
    }
    let ts: Vec<f64> = points.iter().map(|p| p.t as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let ws: Vec<f64> = match weighting {
        FitWeighting::Unweighted => vec![1.0; points.len()],
        FitWeighting::InverseStd => {
            let floor = points
                .iter()
                .map(|p| p.std)
                .filter(|&s| s > 0.0)
                .fold(f64::INFINITY, f64::min);
            if floor.is_finite() {
                points.iter().map(|p| 1.0 / p.std.max(floor)).collect()
            } else {
                vec![1.0; points.len()]
            }
        }
    };

    let a0 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b0 = ys[0] - a0;
    let mut best: Option<(Params, f64, bool)> = None;
    for &c0 in &START_C {
        for &d0 in &START_D {
            let result = levenberg_marquardt([a0, b0, c0.ln(), d0.ln()], &ts, &ys, &ws);
            if best.as_ref().is_none_or(|b| result.1 < b.1) {
                best = Some(result);
            }
        }
    }
    let (p, rss, converged) = best.expect("at least one start");

    let wsum: f64 = ws.iter().map(|w| w * w).sum();
    let mean = ys.iter().zip(&ws).map(|(y, w)| y * w * w).sum::<f64>() / wsum;
    let constant = [mean.clamp(A_BOUNDS.0, A_BOUNDS.1), 0.0, 0.0, 0.0];
    let constant_rss = weighted_rss(&constant, &ts, &ys, &ws);
    if constant_rss <= rss {
        return Ok(SaturationFit {
            a: constant[0],
            b: 0.0,
            c: 1.0,
            d_exp: 1.0,
            rss: constant_rss,
            converged: true,
            weighting,
        });
    }
    if !converged {
        log::warn!("saturation fit hit the iteration limit; returning the best iterate");
    }
    Ok(SaturationFit {
        a: p[0],
        b: p[1],
        c: p[2].exp(),
        d_exp: p[3].exp(),
        rss,
        converged,
        weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{align, FeatureSet, LabelFrame, Variation};
    use crate::synth::{generate, SynthSpec};
    use ndarray::Array2;

    fn curve(ts: &[usize], f: impl Fn(f64) -> f64) -> SamplingCurve {
        let ys: Vec<f64> = ts.iter().map(|&t| f(t as f64)).collect();
        SamplingCurve::from_means(ts, &ys).unwrap()
    }

    #[test]
    fn exact_data_is_recovered() {
        let ts = [8, 16, 32, 64, 128, 256, 512];
        let fit = fit_saturation(&curve(&ts, |t| 0.9 - 0.35 * (-0.08 * t).exp()), FitWeighting::Unweighted).unwrap();
        assert!((fit.a - 0.9).abs() < 1e-6, "{fit:?}");
        assert!((fit.b + 0.35).abs() < 1e-4, "{fit:?}");
        assert!(fit.rss < 1e-12);
    }

    #[test]
    fn constant_data_fits_flat() {
        let fit = fit_saturation(&curve(&[1, 2, 4, 8, 16], |_| 0.7), FitWeighting::Unweighted).unwrap();
        assert!((fit.a - 0.7).abs() <= 1e-6);
        assert!(fit.b.abs() <= 1e-6);
        for t in [1.0, 100.0, 1e6] {
            assert!((predict_auc(&fit, t) - 0.7).abs() <= 1e-6);
        }
    }

    #[test]
    fn prediction_limits() {
        let fit = SaturationFit {
            a: 0.8,
            b: -0.3,
            c: 0.1,
            d_exp: 1.0,
            rss: 0.0,
            converged: true,
            weighting: FitWeighting::Unweighted,
        };
        assert!((predict_auc(&fit, 1e9) - 0.8).abs() < 1e-15);
        assert!((predict_auc(&fit, 10.0) - (0.8 - 0.3 * (-1f64).exp())).abs() < 1e-15);
        let flat = SaturationFit { b: 0.0, ..fit };
        assert_eq!(predict_auc(&flat, 3.0), 0.8);
    }

    #[test]
    fn too_few_points() {
        let c = curve(&[1, 2, 3], |_| 0.5);
        assert!(fit_saturation(&c, FitWeighting::Unweighted).is_err());
    }

    #[test]
    fn weighted_fit_runs() {
        let mut c = curve(&[4, 8, 16, 32, 64], |t| 0.85 - 0.4 * (-0.1 * t).exp());
        for (i, p) in c.points.iter_mut().enumerate() {
            p.std = 0.01 * (i + 1) as f64;
        }
        let fit = fit_saturation(&c, FitWeighting::InverseStd).unwrap();
        assert!((fit.a - 0.85).abs() < 1e-4, "{fit:?}");
    }

    fn clustered() -> AlignedDataset {
        let (fs, lf) = generate(&SynthSpec::clusters(3, 8, 16, 0.5, 1.0, 2)).unwrap();
        align(&fs, &lf).unwrap()
    }

    #[test]
    fn full_width_subset_matches_full_auc() {
        let ds = clustered();
        let options = KaOptions::default();
        let full = crate::kernel::evaluate(&ds, &options).unwrap().auc;
        let sc = subsample_sites_auc(&ds, &[16], 1, 3, &options).unwrap();
        assert_eq!(sc.points[0].mean, full);
        assert_eq!(sc.points[0].std, 0.0);
    }

    fn onehot_with_copies(k: usize, per: usize, copies: usize) -> AlignedDataset {
        let n = k * per;
        let x = Array2::from_shape_fn((n, k * copies), |(i, m)| if m % k == i / per { 1.0 } else { 0.0 });
        let ids: Vec<String> = (0..n).map(|i| format!("i{i:02}")).collect();
        let classes: Vec<String> = (0..n).map(|i| format!("c{}", i / per)).collect();
        let fs = FeatureSet::new(ids.clone(), x, Variation::Unspecified).unwrap();
        align(&fs, &LabelFrame::new(ids, classes).unwrap()).unwrap()
    }

    #[test]
    fn duplicated_onehot_columns() {
        // duplicating every indicator column scales all distances alike, and
        // the quantile bandwidths scale with them
        let options = KaOptions::default();
        let plain = crate::kernel::evaluate(&onehot_with_copies(3, 4, 1), &options).unwrap().auc;
        let dup = onehot_with_copies(3, 4, 4);
        let sc = subsample_sites_auc(&dup, &[12], 1, 1, &options).unwrap();
        assert!((sc.points[0].mean - plain).abs() < 1e-9);
        // any subset keeping every class at equal multiplicity behaves the same
        let two_each = dup.select_columns(&[0, 1, 2, 6, 7, 8]).unwrap();
        let auc = crate::kernel::evaluate(&two_each, &options).unwrap().auc;
        assert!((auc - plain).abs() < 1e-9);
    }

    #[test]
    fn grid_validation() {
        let ds = clustered();
        let options = KaOptions::default();
        assert!(subsample_sites_auc(&ds, &[17], 1, 0, &options).is_err());
        assert!(subsample_sites_auc(&ds, &[0, 4], 1, 0, &options).is_err());
        assert!(subsample_sites_auc(&ds, &[8, 4], 1, 0, &options).is_err());
        assert!(subsample_sites_auc(&ds, &[4], 0, 0, &options).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = clustered();
        let options = KaOptions::default();
        let a = subsample_sites_auc(&ds, &[2, 4, 8], 3, 11, &options).unwrap();
        let b = subsample_sites_auc(&ds, &[2, 4, 8], 3, 11, &options).unwrap();
        assert_eq!(a, b);
        assert!(a.to_csv().starts_with("t,mean,std\n2,"));
    }
}
