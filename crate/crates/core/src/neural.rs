//! Turns repetition-level spike counts into a feature matrix: background
//! subtraction against blank presentations, per-block standard-deviation
//! normalization, and averaging over repetitions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSet, Variation};
use crate::error::{Error, Result};

pub const BLANK_IMAGE: &str = "__blank__";
pub const REPETITION_HEADER: [&str; 6] = ["site_id", "image_id", "block_id", "repetition", "count", "is_blank"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub site_id: String,
    pub image_id: String,
    pub block_id: String,
    pub repetition: u32,
    /// Spikes in the response window; counts may be pre-scaled, so any
    /// finite non-negative value is accepted.
    pub count: f64,
    pub is_blank: bool,
}

impl RepetitionRecord {
    fn key(&self) -> String {
        format!(
            "(site {:?}, image {:?}, block {:?}, repetition {})",
            self.site_id, self.image_id, self.block_id, self.repetition
        )
    }
}

/// Response window in milliseconds after stimulus onset. Informational only;
/// counts arrive already windowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseWindow {
    pub onset_ms: f64,
    pub offset_ms: f64,
}

impl Default for ResponseWindow {
    fn default() -> Self {
        ResponseWindow {
            onset_ms: 70.0,
            offset_ms: 170.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionTable {
    records: Vec<RepetitionRecord>,
    window: ResponseWindow,
}

impl RepetitionTable {
    pub fn new(records: Vec<RepetitionRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !(r.count >= 0.0 && r.count.is_finite()) {
                return Err(Error::invalid(format!("{}: count must be finite and non-negative, got {}", r.key(), r.count)));
            }
            if r.is_blank != (r.image_id == BLANK_IMAGE) {
                return Err(Error::invalid(format!(
                    "{}: blank rows must use image id {BLANK_IMAGE:?} and only blank rows may",
                    r.key()
                )));
            }
            if !seen.insert((&r.site_id, &r.image_id, &r.block_id, r.repetition)) {
                return Err(Error::DuplicateKey(r.key()));
            }
        }
        Ok(RepetitionTable {
            records,
            window: ResponseWindow::default(),
        })
    }

    pub fn with_window(mut self, window: ResponseWindow) -> Self {
        self.window = window;
        self
    }

    pub fn records(&self) -> &[RepetitionRecord] {
        &self.records
    }

    pub fn window(&self) -> ResponseWindow {
        self.window
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_repetition_table(path: &Path) -> Result<RepetitionTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut columns = [0usize; 6];
    for (slot, name) in columns.iter_mut().zip(REPETITION_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, "header", format!("missing column {name:?}")))?;
    }
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let record = result.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        let field = |c: usize| record.get(columns[c]).unwrap_or("");
        let count: f64 = field(4)
            .parse()
            .map_err(|_| Error::parse(path, format!("line {line}"), format!("count {:?} is not a number", field(4))))?;
        if !(count >= 0.0 && count.is_finite()) {
            return Err(Error::parse(path, format!("line {line}"), format!("count must be non-negative, got {count}")));
        }
        let repetition = field(3).parse().map_err(|_| {
            Error::parse(path, format!("line {line}"), format!("repetition {:?} is not a non-negative integer", field(3)))
        })?;
        let is_blank = match field(5) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(path, format!("line {line}"), format!("is_blank must be 0 or 1, got {other:?}")))
            }
        };
        records.push(RepetitionRecord {
            site_id: field(0).to_string(),
            image_id: field(1).to_string(),
            block_id: field(2).to_string(),
            repetition,
            count,
            is_blank,
        });
    }
    RepetitionTable::new(records)
}

pub fn save_repetition_table(table: &RepetitionTable, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer.write_record(REPETITION_HEADER).map_err(|e| csv_error(path, e))?;
    for r in table.records() {
        writer
            .write_record([
                r.site_id.as_str(),
                r.image_id.as_str(),
                r.block_id.as_str(),
                &r.repetition.to_string(),
                &format!("{:?}", r.count),
                if r.is_blank { "1" } else { "0" },
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "file".into());
    Error::parse(path, location, e.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "epsilon")]
pub enum ZeroVariancePolicy {
    #[default]
    Error,
    /// Divide by `max(std, epsilon)`.
    Epsilon(f64),
    DropSite,
}

impl FromStr for ZeroVariancePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "error" => Ok(ZeroVariancePolicy::Error),
            "epsilon" => Ok(ZeroVariancePolicy::Epsilon(DEFAULT_EPSILON)),
            "drop_site" | "drop-site" => Ok(ZeroVariancePolicy::DropSite),
            other => Err(Error::invalid(format!(
                "unknown zero-variance policy {other:?} (expected error, epsilon or drop_site)"
            ))),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocConfig {
    pub variation: Variation,
    /// Number of repetition sets per block at low variation.
    pub low_split: usize,
    pub zero_variance: ZeroVariancePolicy,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        PreprocConfig {
            variation: Variation::Unspecified,
            low_split: 3,
            zero_variance: ZeroVariancePolicy::Error,
        }
    }
}

impl PreprocConfig {
    pub fn new(variation: Variation) -> Self {
        PreprocConfig {
            variation,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFeatures {
    /// Images as rows in sorted id order, retained sites as columns.
    pub features: FeatureSet,
    pub sites: Vec<String>,
    pub dropped_sites: Vec<String>,
}

struct Response<'a> {
    image: &'a str,
    repetition: u32,
    value: f64,
}

/// Normalizes one site. Returns `None` when the site is dropped.
fn normalize_site<'a>(
    site: &str,
    blocks: &BTreeMap<&'a str, (Vec<f64>, Vec<Response<'a>>)>,
    cfg: &PreprocConfig,
) -> Result<Option<BTreeMap<&'a str, (f64, usize)>>> {
    let split = if cfg.variation == Variation::Low { cfg.low_split } else { 1 };
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (&block, (blanks, responses)) in blocks {
        if responses.is_empty() {
            continue;
        }
        if blanks.is_empty() {
            return Err(Error::MissingBlank {
                site: site.to_string(),
                block: block.to_string(),
            });
        }
        let background = blanks.iter().sum::<f64>() / blanks.len() as f64;
        for set in 0..split {
            let members: Vec<&Response> = responses
                .iter()
                .filter(|r| r.repetition as usize % split == set)
                .collect();
            if members.is_empty() {
                continue;
            }
            let centered: Vec<f64> = members.iter().map(|r| r.value - background).collect();
            let m = centered.len() as f64;
            let mean = centered.iter().sum::<f64>() / m;
            let std = (centered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
            let divisor = match cfg.zero_variance {
                ZeroVariancePolicy::Epsilon(eps) => std.max(eps),
                _ if std > 0.0 => std,
                ZeroVariancePolicy::Error => {
                    return Err(Error::ZeroVariance {
                        site: site.to_string(),
                        block: block.to_string(),
                    })
                }
                ZeroVariancePolicy::DropSite => {
                    log::warn!("dropping site {site:?}: zero response variance in block {block:?}");
                    return Ok(None);
                }
            };
            for (r, c) in members.iter().zip(&centered) {
                let entry = sums.entry(r.image).or_insert((0.0, 0));
                entry.0 += c / divisor;
                entry.1 += 1;
            }
        }
    }
    Ok(Some(sums))
}

pub fn build_neural_features(table: &RepetitionTable, cfg: &PreprocConfig) -> Result<NeuralFeatures> {
    if cfg.low_split < 1 {
        return Err(Error::invalid("low-variation split count must be at least 1"));
    }
    if let ZeroVariancePolicy::Epsilon(eps) = cfg.zero_variance {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {eps}")));
        }
    }

    // site -> block -> (blank counts, image responses)
    type Blocks<'a> = BTreeMap<&'a str, (Vec<f64>, Vec<Response<'a>>)>;
    let mut sites: BTreeMap<&str, Blocks> = BTreeMap::new();
    let mut images: BTreeSet<&str> = BTreeSet::new();
    for r in table.records() {
        let block = sites
            .entry(r.site_id.as_str())
            .or_default()
            .entry(r.block_id.as_str())
            .or_default();
        if r.is_blank {
            block.0.push(r.count);
        } else {
            images.insert(r.image_id.as_str());
            block.1.push(Response {
                image: r.image_id.as_str(),
                repetition: r.repetition,
                value: r.count,
            });
        }
    }
    if images.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 distinct images, found {}", images.len())));
    }

    let mut columns = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (&site, blocks) in &sites {
        match normalize_site(site, blocks, cfg)? {
            Some(sums) => {
                if let Some(missing) = images.iter().find(|i| !sums.contains_key(*i)) {
                    return Err(Error::MissingCoverage {
                        site: site.to_string(),
                        image: missing.to_string(),
                    });
                }
                columns.push(sums);
                kept.push(site.to_string());
            }
            None => dropped.push(site.to_string()),
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every site was dropped"));
    }

    let ids: Vec<String> = images.iter().map(|s| s.to_string()).collect();
    let matrix = Array2::from_shape_fn((ids.len(), kept.len()), |(i, s)| {
        let (sum, count) = columns[s][ids[i].as_str()];
        sum / count as f64
    });
    Ok(NeuralFeatures {
        features: FeatureSet::new(ids, matrix, cfg.variation)?,
        sites: kept,
        dropped_sites: dropped,
    })
}
