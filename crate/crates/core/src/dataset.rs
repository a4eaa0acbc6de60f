//! Feature matrices, category labels, and the on-disk formats they travel in.
//!
//! Two feature formats are supported:
//!
//! * CSV with header `image_id,f0,f1,...,f{p-1}`, one row per image.
//! * Raw little-endian row-major `f64` data in `<name>.f64` next to a JSON
//!   sidecar `<name>.json` holding `rows`, `cols`, `dtype`, `order` and `ids`.
//!
//! Labels are CSV `image_id,class`. Non-finite feature values are rejected at
//! load time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Difficulty tier of a stimulus set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variation {
    Low,
    Medium,
    High,
    #[default]
    Unspecified,
}

impl Variation {
    pub fn as_str(self) -> &'static str {
        match self {
            Variation::Low => "low",
            Variation::Medium => "medium",
            Variation::High => "high",
            Variation::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Variation::Low),
            "medium" => Ok(Variation::Medium),
            "high" => Ok(Variation::High),
            "unspecified" => Ok(Variation::Unspecified),
            other => Err(Error::invalid(format!("unknown variation level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FeatureFormat::Csv),
            "binary" | "f64" => Ok(FeatureFormat::Binary),
            other => Err(Error::invalid(format!("unknown feature format {other:?}"))),
        }
    }
}

impl FeatureFormat {
    /// Guesses the format from a file extension; anything but `.f64` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("f64") => FeatureFormat::Binary,
            _ => FeatureFormat::Csv,
        }
    }
}

/// An `n x p` matrix of features, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    image_ids: Vec<String>,
    features: Array2<f64>,
    variation: Variation,
}

impl FeatureSet {
    pub fn new(image_ids: Vec<String>, features: Array2<f64>, variation: Variation) -> Result<Self> {
        let (n, p) = features.dim();
        if n < 2 {
            return Err(Error::invalid(format!("feature set needs at least 2 images, got {n}")));
        }
        if p < 1 {
            return Err(Error::invalid("feature set needs at least 1 feature column"));
        }
        if image_ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} image ids for {n} feature rows",
                image_ids.len()
            )));
        }
        if let Some(((row, col), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {v} at row {row}, column {col}"
            )));
        }
        check_distinct(&image_ids)?;
        Ok(FeatureSet {
            image_ids,
            features,
            variation,
        })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn variation(&self) -> Variation {
        self.variation
    }

    pub fn with_variation(mut self, variation: Variation) -> Self {
        self.variation = variation;
        self
    }

    pub fn n_images(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureSet> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::invalid(format!(
                "column {c} out of range for {} features",
                self.n_features()
            )));
        }
        FeatureSet::new(
            self.image_ids.clone(),
            self.features.select(Axis(1), columns),
            self.variation,
        )
    }
}

fn check_distinct(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateKey(format!("image id {id:?}")));
        }
    }
    Ok(())
}

/// Per-image category labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFrame {
    image_ids: Vec<String>,
    classes: Vec<String>,
}

impl LabelFrame {
    pub fn new(image_ids: Vec<String>, classes: Vec<String>) -> Result<Self> {
        if image_ids.len() != classes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} image ids for {} labels",
                image_ids.len(),
                classes.len()
            )));
        }
        check_distinct(&image_ids)?;
        check_class_sizes(&classes)?;
        Ok(LabelFrame { image_ids, classes })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Sorted class names with their member counts.
fn class_counts(classes: &[String]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for c in classes {
        *counts.entry(c.as_str()).or_insert(0) += 1;
    }
    counts
}

fn check_class_sizes(classes: &[String]) -> Result<()> {
    let counts = class_counts(classes);
    if counts.len() < 2 {
        return Err(Error::TooFewClasses(counts.len()));
    }
    if let Some((class, &count)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::SmallClass {
            class: class.to_string(),
            count,
        });
    }
    Ok(())
}

/// Features and labels co-indexed in feature-set row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    features: FeatureSet,
    classes: Vec<String>,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
}

impl AlignedDataset {
    /// Builds a dataset from rows that already correspond one-to-one.
    pub fn new(features: FeatureSet, classes: Vec<String>) -> Result<Self> {
        if classes.len() != features.n_images() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} images",
                classes.len(),
                features.n_images()
            )));
        }
        check_class_sizes(&classes)?;
        Ok(Self::from_parts(features, classes))
    }

    fn from_parts(features: FeatureSet, classes: Vec<String>) -> Self {
        let counts = class_counts(&classes);
        let class_names = counts.keys().map(|s| s.to_string()).collect();
        let class_counts = counts.values().copied().collect();
        AlignedDataset {
            features,
            classes,
            class_names,
            class_counts,
        }
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Distinct class names in sorted order; this order defines label columns.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn n_images(&self) -> usize {
        self.features.n_images()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Column index into `class_names` for every row.
    pub fn class_indices(&self) -> Vec<usize> {
        self.classes
            .iter()
            .map(|c| self.class_names.binary_search(c).expect("class present"))
            .collect()
    }

    /// Restricts to the given rows, in the given order. Class-size minimums
    /// are not re-checked, so equalized protocol subsets may hold any count.
    pub fn select_rows(&self, rows: &[usize]) -> Result<AlignedDataset> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_images()) {
            return Err(Error::invalid(format!(
                "row {r} out of range for {} images",
                self.n_images()
            )));
        }
        let ids = rows.iter().map(|&r| self.features.image_ids[r].clone()).collect();
        let fs = FeatureSet::new(
            ids,
            self.features.features.select(Axis(0), rows),
            self.features.variation,
        )?;
        let classes = rows.iter().map(|&r| self.classes[r].clone()).collect();
        Ok(Self::from_parts(fs, classes))
    }

    pub fn select_columns(&self, columns: &[usize]) -> Result<AlignedDataset> {
        Ok(Self::from_parts(
            self.features.select_columns(columns)?,
            self.classes.clone(),
        ))
    }
}

/// Attaches labels to features, re-ordering labels to feature-row order.
pub fn align(fs: &FeatureSet, lf: &LabelFrame) -> Result<AlignedDataset> {
    let lookup: HashMap<&str, &str> = lf
        .image_ids
        .iter()
        .zip(&lf.classes)
        .map(|(id, c)| (id.as_str(), c.as_str()))
        .collect();
    let classes = fs
        .image_ids
        .iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .map(|c| c.to_string())
                .ok_or_else(|| Error::MissingLabel(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    AlignedDataset::new(fs.clone(), classes)
}

// ---------------------------------------------------------------------------
// Feature files

pub fn load_feature_matrix(path: &Path, format: FeatureFormat) -> Result<FeatureSet> {
    match format {
        FeatureFormat::Csv => load_feature_csv(path),
        FeatureFormat::Binary => load_feature_binary(path),
    }
}

pub fn save_feature_matrix(fs: &FeatureSet, path: &Path, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => save_feature_csv(fs, path),
        FeatureFormat::Binary => save_feature_binary(fs, path),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "header".into());
    Error::parse(path, location, e.to_string())
}

fn load_feature_csv(path: &Path) -> Result<FeatureSet> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[0] != "image_id" {
        return Err(Error::parse(
            path,
            "header",
            "expected header `image_id,f0,f1,...`",
        ));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::parse(
                path,
                format!("header, column {}", j + 1),
                format!("expected `f{j}`, found `{name}`"),
            ));
        }
    }
    let p = header.len() - 1;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != p + 1 {
            return Err(Error::parse(
                path,
                format!("row {row}"),
                format!("expected {} fields, found {}", p + 1, record.len()),
            ));
        }
        ids.push(record[0].to_string());
        for (col, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(path, format!("row {row}, column {col}"), format!("non-numeric cell {cell:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("row {row}, column {col}"),
                    format!("non-finite value {cell:?}"),
                ));
            }
            values.push(v);
        }
    }
    let n = ids.len();
    let features = Array2::from_shape_vec((n, p), values).expect("shape checked per row");
    FeatureSet::new(ids, features, Variation::Unspecified)
}

fn save_feature_csv(fs: &FeatureSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("image_id");
    for j in 0..fs.n_features() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (id, row) in fs.image_ids.iter().zip(fs.features.rows()) {
        out.push_str(id);
        for v in row {
            out.push(',');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BinarySidecar {
    rows: usize,
    cols: usize,
    dtype: String,
    order: String,
    ids: Vec<String>,
}

/// Path of the JSON sidecar that accompanies a binary feature file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn load_feature_binary(path: &Path) -> Result<FeatureSet> {
    let sidecar_path = sidecar_path(path);
    let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: BinarySidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
        context: sidecar_path.display().to_string(),
        source: e,
    })?;
    if sidecar.dtype != "f64" || sidecar.order != "row-major" {
        return Err(Error::parse(
            &sidecar_path,
            "sidecar",
            format!(
                "unsupported layout dtype={:?} order={:?}",
                sidecar.dtype, sidecar.order
            ),
        ));
    }
    if sidecar.ids.len() != sidecar.rows {
        return Err(Error::RowCountMismatch {
            path: sidecar_path,
            declared: sidecar.rows,
            found: sidecar.ids.len(),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let row_bytes = sidecar.cols * 8;
    if row_bytes == 0 || bytes.len() % row_bytes != 0 {
        return Err(Error::parse(
            path,
            format!("byte {}", bytes.len()),
            format!("file length is not a whole number of {}-column rows", sidecar.cols),
        ));
    }
    let found = bytes.len() / row_bytes;
    if found != sidecar.rows {
        return Err(Error::RowCountMismatch {
            path: path.to_path_buf(),
            declared: sidecar.rows,
            found,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::parse(
            path,
            format!("row {}, column {}", i / sidecar.cols, i % sidecar.cols),
            format!("non-finite value {}", values[i]),
        ));
    }
    let features = Array2::from_shape_vec((sidecar.rows, sidecar.cols), values)
        .expect("length checked against sidecar");
    FeatureSet::new(sidecar.ids, features, Variation::Unspecified)
}

fn save_feature_binary(fs: &FeatureSet, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(fs.features.len() * 8);
    for v in fs.features.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;

    let sidecar = BinarySidecar {
        rows: fs.n_images(),
        cols: fs.n_features(),
        dtype: "f64".into(),
        order: "row-major".into(),
        ids: fs.image_ids.clone(),
    };
    let sidecar_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))
}

// ---------------------------------------------------------------------------
// Label files

pub fn load_labels(path: &Path) -> Result<LabelFrame> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 || &header[0] != "image_id" || &header[1] != "class" {
        return Err(Error::parse(path, "header", "expected header `image_id,class`"));
    }
    let mut ids = Vec::new();
    let mut classes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                format!("row {row}"),
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        ids.push(record[0].to_string());
        classes.push(record[1].to_string());
    }
    LabelFrame::new(ids, classes)
}

pub fn save_labels(lf: &LabelFrame, path: &Path) -> Result<()> {
    let mut out = String::from("image_id,class\n");
    for (id, c) in lf.image_ids.iter().zip(&lf.classes) {
        out.push_str(&format!("{id},{c}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub variation: Variation,
    pub path: PathBuf,
    pub format: FeatureFormat,
}

/// A named collection of feature files, one per variation level, sharing a
/// label file. Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.labels = base.join(&manifest.labels);
        for entry in &mut manifest.entries {
            entry.path = base.join(&entry.path);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("manifest has no entries"));
        }
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.variation) {
                return Err(Error::invalid(format!(
                    "variation level {} listed twice",
                    entry.variation
                )));
            }
        }
        let mut files: Vec<PathBuf> = vec![self.labels.clone()];
        for entry in &self.entries {
            files.push(entry.path.clone());
            if entry.format == FeatureFormat::Binary {
                files.push(sidecar_path(&entry.path));
            }
        }
        for file in files {
            if !file.exists() {
                return Err(Error::io(
                    file,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        Ok(())
    }

    /// Loads and aligns every level, in manifest order.
    pub fn load_levels(&self) -> Result<Vec<AlignedDataset>> {
        let labels = load_labels(&self.labels)?;
        self.entries
            .iter()
            .map(|entry| {
                let fs = load_feature_matrix(&entry.path, entry.format)?.with_variation(entry.variation);
                align(&fs, &labels)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_small_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "image_id,f0,f1\na,1,2\nb,3.5,-4\nc,0,1e-3\n").unwrap();
        let fs = load_feature_matrix(&path, FeatureFormat::Csv).unwrap();
        assert_eq!(fs.n_images(), 3);
        assert_eq!(fs.n_features(), 2);
        assert_eq!(fs.image_ids(), &ids(&["a", "b", "c"])[..]);
        assert_eq!(fs.features()[[1, 1]], -4.0);
    }

    #[test]
    fn csv_errors_carry_locations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");

        fs::write(&path, "id,f0\na,1\nb,2\n").unwrap();
        let err = load_feature_matrix(&path, FeatureFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");

        fs::write(&path, "image_id,f0,f1\na,1,2\nb,x,2\n").unwrap();
        let err = load_feature_matrix(&path, FeatureFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("row 1, column 0"), "{err}");

        fs::write(&path, "image_id,f0\na,1\nb,NaN\n").unwrap();
        let err = load_feature_matrix(&path, FeatureFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");

        fs::write(&path, "image_id,f0\na,1\nb,inf\n").unwrap();
        assert!(load_feature_matrix(&path, FeatureFormat::Csv).is_err());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f64");
        let m = array![[0.1, -2.5e-300], [f64::MAX, 1.0 / 3.0], [-0.0, 7.0]];
        let fs = FeatureSet::new(ids(&["x", "y", "z"]), m, Variation::Low).unwrap();
        save_feature_matrix(&fs, &path, FeatureFormat::Binary).unwrap();
        let back = load_feature_matrix(&path, FeatureFormat::Binary).unwrap();
        assert_eq!(back.image_ids(), fs.image_ids());
        for (a, b) in fs.features().iter().zip(back.features()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f64");
        let data: Vec<u8> = (0..9 * 2).flat_map(|i| (i as f64).to_le_bytes()).collect();
        fs::write(&path, data).unwrap();
        let ids: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let sidecar = serde_json::json!({
            "rows": 10, "cols": 2, "dtype": "f64", "order": "row-major", "ids": ids
        });
        fs::write(sidecar_path(&path), sidecar.to_string()).unwrap();
        let err = load_feature_matrix(&path, FeatureFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::RowCountMismatch { declared: 10, found: 9, .. }));
        assert!(err.to_string().contains("row-count mismatch"));
    }

    #[test]
    fn feature_set_invariants() {
        assert!(FeatureSet::new(ids(&["a"]), array![[1.0]], Variation::Low).is_err());
        assert!(FeatureSet::new(ids(&["a", "a"]), array![[1.0], [2.0]], Variation::Low).is_err());
        assert!(FeatureSet::new(ids(&["a", "b"]), array![[1.0], [f64::NAN]], Variation::Low).is_err());
        assert!(FeatureSet::new(ids(&["a", "b", "c"]), array![[1.0], [2.0]], Variation::Low).is_err());
    }

    fn small_set() -> FeatureSet {
        FeatureSet::new(
            ids(&["a", "b", "c", "d"]),
            array![[0.0], [1.0], [2.0], [3.0]],
            Variation::Unspecified,
        )
        .unwrap()
    }

    #[test]
    fn align_passes_through_matching_order() {
        let fs = small_set();
        let lf = LabelFrame::new(ids(&["a", "b", "c", "d"]), ids(&["x", "y", "x", "y"])).unwrap();
        let ad = align(&fs, &lf).unwrap();
        assert_eq!(ad.classes(), lf.classes());
        assert_eq!(ad.class_names(), &ids(&["x", "y"])[..]);
        assert_eq!(ad.class_counts(), &[2, 2]);
        assert_eq!(ad.class_indices(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn align_reorders_shuffled_labels() {
        let fs = small_set();
        let lf = LabelFrame::new(ids(&["d", "b", "a", "c"]), ids(&["y", "y", "x", "x"])).unwrap();
        let ad = align(&fs, &lf).unwrap();
        assert_eq!(ad.classes(), &ids(&["x", "y", "x", "y"])[..]);
    }

    #[test]
    fn align_names_missing_id() {
        let fs = FeatureSet::new(ids(&["a", "zzz"]), array![[0.0], [1.0]], Variation::Low).unwrap();
        let lf = LabelFrame::new(ids(&["a", "b", "c", "d"]), ids(&["x", "y", "x", "y"])).unwrap();
        let err = align(&fs, &lf).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn align_rejects_degenerate_classes() {
        let fs = small_set();
        let lf = LabelFrame::new(ids(&["a", "b", "c", "d", "e", "f"]), ids(&["x", "x", "x", "x", "y", "y"])).unwrap();
        // only class x is represented among the feature ids
        assert!(matches!(align(&fs, &lf), Err(Error::TooFewClasses(1))));
        let lf = LabelFrame::new(ids(&["a", "b", "c", "d", "e"]), ids(&["x", "x", "x", "y", "y"])).unwrap();
        assert!(matches!(align(&fs, &lf), Err(Error::SmallClass { .. })));
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let fs = small_set();
        save_feature_matrix(&fs, &dir.path().join("low.f64"), FeatureFormat::Binary).unwrap();
        let lf = LabelFrame::new(ids(&["a", "b", "c", "d"]), ids(&["x", "y", "x", "y"])).unwrap();
        save_labels(&lf, &dir.path().join("labels.csv")).unwrap();
        let manifest = DatasetManifest {
            name: "demo".into(),
            labels: "labels.csv".into(),
            seed: Some(3),
            entries: vec![ManifestEntry {
                variation: Variation::Low,
                path: "low.f64".into(),
                format: FeatureFormat::Binary,
            }],
        };
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();
        let loaded = DatasetManifest::load(&path).unwrap();
        let levels = loaded.load_levels().unwrap();
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].features().variation(), Variation::Low);

        let mut dup = manifest.clone();
        dup.entries.push(dup.entries[0].clone());
        dup.save(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
