//! Seeded random search over a model family, scoring every draw on a
//! training set and on test sets per variation level, plus the transfer
//! statistics computed from the resulting records.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{align, AlignedDataset, FeatureSet, Variation};
use crate::error::{Error, Result};
use crate::kernel::{evaluate, KaOptions};
use crate::rng::{keyed_rng, pair_index, Domain};
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Dimension {
    Uniform { low: f64, high: f64 },
    Int { low: i64, high: i64 },
    Choice { values: Vec<Value> },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        match self {
            Dimension::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => Err(
                Error::invalid(format!("dimension {name:?}: need finite bounds with low < high, got [{low}, {high}]")),
            ),
            Dimension::Int { low, high } if low > high => {
                Err(Error::invalid(format!("dimension {name:?}: empty integer range [{low}, {high}]")))
            }
            Dimension::Choice { values } if values.is_empty() => {
                Err(Error::invalid(format!("dimension {name:?}: no choices")))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Value {
        match self {
            Dimension::Uniform { low, high } => Value::from(rng.random_range(*low..*high)),
            Dimension::Int { low, high } => Value::from(rng.random_range(*low..=*high)),
            Dimension::Choice { values } => values[rng.random_range(0..values.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dimensions: BTreeMap<String, Dimension>,
}

pub type Assignment = BTreeMap<String, Value>;

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::invalid("parameter space has no dimensions"));
        }
        self.dimensions.iter().try_for_each(|(name, d)| d.validate(name))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let space: ParamSpace = serde_json::from_str(&text).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })?;
        space.validate()?;
        Ok(space)
    }

    /// Assignment for one draw; dimensions are sampled in name order from the
    /// stream keyed by `(seed, draw)`.
    pub fn draw(&self, seed: u64, draw: usize) -> Assignment {
        let mut rng = keyed_rng(seed, Domain::Search, draw as u64);
        self.dimensions
            .iter()
            .map(|(name, d)| (name.clone(), d.sample(&mut rng)))
            .collect()
    }
}

/// Features produced by one model instance.
pub struct EvaluatedFeatures {
    pub train: AlignedDataset,
    pub test: Vec<(Variation, AlignedDataset)>,
}

/// A model family: maps a parameter assignment to train and test features.
pub trait Evaluator: Sync {
    fn features(&self, assignment: &Assignment, draw: usize) -> Result<EvaluatedFeatures>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub draw: usize,
    pub seed: u64,
    pub assignment: Assignment,
    pub train_auc: Option<f64>,
    pub test_auc: BTreeMap<Variation, f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SearchRecord {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

fn evaluate_draw(
    space: &ParamSpace,
    evaluator: &dyn Evaluator,
    seed: u64,
    draw: usize,
    options: &KaOptions,
) -> SearchRecord {
    let assignment = space.draw(seed, draw);
    let scored = evaluator.features(&assignment, draw).and_then(|f| {
        let train = evaluate(&f.train, options)?.auc;
        let test = f
            .test
            .iter()
            .map(|(level, ds)| Ok((*level, evaluate(ds, options)?.auc)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok((train, test))
    });
    match scored {
        Ok((train, test)) => SearchRecord {
            draw,
            seed,
            assignment,
            train_auc: Some(train),
            test_auc: test,
            status: Status::Ok,
            error: None,
        },
        Err(e) => {
            log::warn!("draw {draw} failed: {e}");
            SearchRecord {
                draw,
                seed,
                assignment,
                train_auc: None,
                test_auc: BTreeMap::new(),
                status: Status::Failed,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Evaluates draws `0..n_draws`. Evaluator failures are recorded on the
/// record and do not stop the search. Records come back in draw order.
pub fn random_search(
    space: &ParamSpace,
    evaluator: &dyn Evaluator,
    n_draws: usize,
    seed: u64,
    options: &KaOptions,
) -> Result<Vec<SearchRecord>> {
    space.validate()?;
    if n_draws < 1 {
        return Err(Error::invalid("need at least one draw"));
    }
    Ok((0..n_draws)
        .into_par_iter()
        .map(|draw| evaluate_draw(space, evaluator, seed, draw, options))
        .collect())
}

pub fn read_records(path: &Path) -> Result<Vec<SearchRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SearchRecord>(&line) {
            Ok(r) => records.push(r),
            // an interrupted run may leave a partial final line
            Err(e) => log::warn!("{}: skipping unreadable line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(records)
}

fn write_records(path: &Path, records: &[SearchRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Runs a search that streams records to a JSON-lines file as batches
/// finish. With `resume`, draws already present in the file for the same
/// seed are kept and skipped. The finished file lists records by draw index.
pub fn random_search_to_file(
    space: &ParamSpace,
    evaluator: &dyn Evaluator,
    n_draws: usize,
    seed: u64,
    options: &KaOptions,
    path: &Path,
    resume: bool,
) -> Result<Vec<SearchRecord>> {
    space.validate()?;
    if n_draws < 1 {
        return Err(Error::invalid("need at least one draw"));
    }
    let mut done: BTreeMap<usize, SearchRecord> = BTreeMap::new();
    if resume && path.exists() {
        for r in read_records(path)? {
            if r.seed != seed {
                return Err(Error::invalid(format!(
                    "{}: existing records use seed {}, not {seed}",
                    path.display(),
                    r.seed
                )));
            }
            if r.draw < n_draws && r.assignment == space.draw(seed, r.draw) {
                done.insert(r.draw, r);
            }
        }
        log::info!("resuming with {} of {n_draws} draws complete", done.len());
    }
    write_records(path, &done.values().cloned().collect::<Vec<_>>())?;

    let pending: Vec<usize> = (0..n_draws).filter(|d| !done.contains_key(d)).collect();
    let batch = rayon::current_num_threads().max(1) * 4;
    for chunk in pending.chunks(batch) {
        let fresh: Vec<SearchRecord> = chunk
            .par_iter()
            .map(|&draw| evaluate_draw(space, evaluator, seed, draw, options))
            .collect();
        let mut file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        for r in &fresh {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        done.extend(fresh.into_iter().map(|r| (r.draw, r)));
    }
    let records: Vec<SearchRecord> = done.into_values().collect();
    write_records(path, &records)?;
    Ok(records)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 paired values, got {}", x.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation undefined: a score series has zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Average ranks, ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Pearson correlation between train AUC and test AUC at `level` over the
/// successful records that carry both.
pub fn transfer_correlation(records: &[SearchRecord], level: Variation) -> Result<f64> {
    let (train, test): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| Some((r.train_auc?, *r.test_auc.get(&level)?)))
        .unzip();
    if train.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 successful records with a {level} score, got {}",
            train.len()
        )));
    }
    pearson(&train, &test)
}

/// Successful record with the highest train AUC; ties go to the lowest draw.
pub fn select_top(records: &[SearchRecord]) -> Result<&SearchRecord> {
    records
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| r.train_auc.map(|auc| (auc, r)))
        .max_by(|(a, ra), (b, rb)| a.total_cmp(b).then(rb.draw.cmp(&ra.draw)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::invalid("no successful records to select from"))
}

/// Built-in demonstration family: clustered synthetic features whose
/// within-class spread grows with the `noise` parameter in [0, 1], rotated by
/// the optional `rotation` angle (radians) in the first coordinate plane.
/// Test sets add extra spread per variation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFamily {
    pub k: usize,
    pub n_per_class: usize,
    pub p: usize,
    pub base_noise: f64,
    pub noise_scale: f64,
    pub levels: Vec<(Variation, f64)>,
    pub seed: u64,
}

impl Default for ClusterFamily {
    fn default() -> Self {
        ClusterFamily {
            k: 4,
            n_per_class: 20,
            p: 16,
            base_noise: 0.05,
            noise_scale: 0.6,
            levels: vec![(Variation::Low, 0.0), (Variation::Medium, 0.1), (Variation::High, 0.2)],
            seed: 0,
        }
    }
}

impl ClusterFamily {
    pub fn default_space() -> ParamSpace {
        ParamSpace {
            dimensions: BTreeMap::from([
                ("noise".to_string(), Dimension::Uniform { low: 0.0, high: 1.0 }),
                (
                    "rotation".to_string(),
                    Dimension::Uniform {
                        low: 0.0,
                        high: std::f64::consts::PI,
                    },
                ),
            ]),
        }
    }

    /// Centroids come from the family seed; the within-class noise comes
    /// from its own stream so train and test share one class geometry.
    fn dataset(&self, noise: f64, rotation: f64, stream: u64) -> Result<AlignedDataset> {
        let spec = SynthSpec::clusters(self.k, self.n_per_class, self.p, 0.0, 1.0, self.seed);
        let (fs, lf) = generate(&spec)?;
        let mut rng = keyed_rng(self.seed, Domain::Noise, stream);
        let mut x = fs.features().mapv(|c| c + noise * rng.sample::<f64, _>(StandardNormal));
        if self.p >= 2 && rotation != 0.0 {
            let (s, c) = rotation.sin_cos();
            for mut row in x.rows_mut() {
                let (u, v) = (row[0], row[1]);
                row[0] = c * u - s * v;
                row[1] = s * u + c * v;
            }
        }
        let fs = FeatureSet::new(fs.image_ids().to_vec(), x, fs.variation())?;
        align(&fs, &lf)
    }
}

fn number(assignment: &Assignment, name: &str) -> Result<Option<f64>> {
    match assignment.get(name) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("parameter {name:?} must be numeric, got {v}"))),
    }
}

impl Evaluator for ClusterFamily {
    fn features(&self, assignment: &Assignment, draw: usize) -> Result<EvaluatedFeatures> {
        let noise = number(assignment, "noise")?.ok_or_else(|| Error::invalid("assignment lacks \"noise\""))?;
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::invalid(format!("noise must lie in [0, 1], got {noise}")));
        }
        let rotation = number(assignment, "rotation")?.unwrap_or(0.0);
        let spread = self.base_noise + self.noise_scale * noise;
        let stream = |split: u64| pair_index(draw as u64, split);
        let train = self.dataset(spread, rotation, stream(0))?;
        let mut seen = BTreeSet::new();
        let test = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, &(level, extra))| {
                if !seen.insert(level) {
                    return Err(Error::invalid(format!("level {level} listed twice")));
                }
                Ok((level, self.dataset(spread + extra, rotation, stream(1 + i as u64))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvaluatedFeatures { train, test })
    }
}
