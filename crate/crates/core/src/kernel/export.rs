use serde::{Deserialize, Serialize};

use super::{KaCurve, KaOptions, LabelEncoding};

pub const CURVE_CSV_HEADER: &str = "d,d_over_D,e_d,accuracy,argmin_sigma";

/// Renders a curve as CSV, one row per dimension `d = 0..=D`.
pub fn curve_csv(curve: &KaCurve) -> String {
    let mut out = String::with_capacity(64 * (curve.dimension + 2));
    out.push_str(CURVE_CSV_HEADER);
    out.push('\n');
    let complexity = curve.complexity();
    for d in 0..=curve.dimension {
        let e = curve.loss[d];
        out.push_str(&format!(
            "{d},{:?},{:?},{:?},{:?}\n",
            complexity[d],
            e,
            1.0 - e,
            curve.argmin_sigma[d]
        ));
    }
    out
}

/// JSON summary written next to a curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub quantiles: Vec<f64>,
    pub encoding: LabelEncoding,
    pub centered: bool,
    pub seed: Option<u64>,
    pub version: String,
}

impl CurveSummary {
    pub fn new(curve: &KaCurve, k: usize, options: &KaOptions, seed: Option<u64>) -> Self {
        CurveSummary {
            auc: curve.auc(),
            sigmas: curve.sigmas.clone(),
            n: curve.dimension,
            k,
            quantiles: curve.quantiles.clone(),
            encoding: options.encoding,
            centered: options.centered,
            seed,
            version: crate::VERSION.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_row_per_dimension() {
        let curve = KaCurve::from_candidates(vec![0.5], vec![1.5], vec![vec![1.0, 0.25, 0.0]]).unwrap();
        let text = curve_csv(&curve);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CURVE_CSV_HEADER);
        assert_eq!(lines[1], "0,0.0,1.0,0.0,1.5");
        assert_eq!(lines[2], "1,0.5,0.25,0.75,1.5");
        assert_eq!(lines.len(), 4);
    }
}
