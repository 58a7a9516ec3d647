//! CSV ingestion, [-1, 1] normalization, k-fold splitting and stored-vector
//! selection.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::encode_differential;
use crate::kernel::StoredVectors;
use crate::scalar::Scalar;
use crate::trainer::LabelPair;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<LabelPair>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}: missing or empty value in column {column}")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: cannot parse {value:?} as a number")]
    BadNumber { row: usize, value: String },
    #[error("row {row}: label {value:?} is not binary (expected 0 or 1)")]
    NonBinaryLabel { row: usize, value: String },
    #[error("dataset is empty")]
    Empty,
    #[error("stored-vector count {requested} exceeds training-set size {available}")]
    StoredCountTooLarge { requested: usize, available: usize },
    #[error("bad ranges file: {0}")]
    BadRangesFile(String),
}

/// Parse a CSV with a header row. `label_column` names the binary label
/// column; every other column must be numeric.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // 1-based, after the header
        let mut feat = Vec::with_capacity(feature_names.len());
        for (col, field) in record.iter().enumerate() {
            let name = headers.get(col).unwrap_or("?");
            if field.trim().is_empty() {
                return Err(DatasetError::MissingValue { row, column: name.to_string() });
            }
            let value: f64 = field.trim().parse().map_err(|_| DatasetError::BadNumber {
                row,
                value: field.to_string(),
            })?;
            if col == label_idx {
                if value == 1.0 {
                    labels.push(LabelPair::positive());
                } else if value == 0.0 {
                    labels.push(LabelPair::negative());
                } else {
                    return Err(DatasetError::NonBinaryLabel { row, value: field.to_string() });
                }
            } else {
                feat.push(value);
            }
        }
        features.push(feat);
    }
    if features.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset { features, labels, feature_names })
}

/// Per-column min/max captured at training time so inference reuses the
/// identical mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRanges {
    pub fn fit(dataset: &Dataset) -> FeatureRanges {
        let dims = dataset.dims();
        let mut min = vec![f64::INFINITY; dims];
        let mut max = vec![f64::NEG_INFINITY; dims];
        for row in &dataset.features {
            for (d, &v) in row.iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        FeatureRanges { min, max }
    }

    /// Min-max map to [-1, 1], clamped for out-of-range inference inputs.
    /// Constant columns map to the midpoint 0.
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(d, &v)| {
                let span = self.max[d] - self.min[d];
                if span == 0.0 {
                    0.0
                } else {
                    (2.0 * (v - self.min[d]) / span - 1.0).clamp(-1.0, 1.0)
                }
            })
            .collect()
    }

    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        Dataset {
            features: dataset.features.iter().map(|r| self.apply_row(r)).collect(),
            labels: dataset.labels.clone(),
            feature_names: dataset.feature_names.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut out = std::fs::File::create(path)?;
        writeln!(out, "mpkm-ranges v1")?;
        for (min, max) in self.min.iter().zip(&self.max) {
            writeln!(out, "{min:?} {max:?}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureRanges, DatasetError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| DatasetError::BadRangesFile("empty file".into()))?;
        if header.trim() != "mpkm-ranges v1" {
            return Err(DatasetError::BadRangesFile(format!("bad header {header:?}")));
        }
        let mut min = Vec::new();
        let mut max = Vec::new();
        for line in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let lo: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| DatasetError::BadRangesFile(format!("bad line {line:?}")))?;
            let hi: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| DatasetError::BadRangesFile(format!("bad line {line:?}")))?;
            min.push(lo);
            max.push(hi);
        }
        Ok(FeatureRanges { min, max })
    }
}

/// Normalize a dataset to [-1, 1], returning the fitted ranges for reuse.
pub fn normalize(dataset: &Dataset) -> (Dataset, FeatureRanges) {
    let ranges = FeatureRanges::fit(dataset);
    (ranges.apply(dataset), ranges)
}

/// Deterministic shuffled k-fold partition.
#[derive(Debug, Clone)]
pub struct FoldSpec {
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn kfold(n: usize, k: usize, seed: u64) -> FoldSpec {
    assert!(k >= 1 && n >= k, "kfold: need at least k samples");
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    if k == 1 {
        // degenerate: train and test on the same split
        return FoldSpec { folds: vec![Fold { train: indices.clone(), test: indices }] };
    }
    let mut folds = Vec::with_capacity(k);
    for chunk in 0..k {
        let test: Vec<usize> = indices.iter().copied().skip(chunk).step_by(k).collect();
        let train: Vec<usize> =
            indices.iter().copied().enumerate().filter(|(i, _)| i % k != chunk).map(|(_, v)| v).collect();
        folds.push(Fold { train, test });
    }
    FoldSpec { folds }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoredPolicy {
    /// First `count` training samples.
    Head,
    /// Seeded random subset.
    Random { seed: u64 },
}

/// Pick the stored (support) vectors from normalized training features and
/// encode them differentially.
pub fn select_stored<S: Scalar>(
    normalized: &Dataset,
    count: usize,
    policy: StoredPolicy,
    proto: S,
) -> Result<StoredVectors<S>, DatasetError> {
    if count > normalized.len() {
        return Err(DatasetError::StoredCountTooLarge {
            requested: count,
            available: normalized.len(),
        });
    }
    let indices: Vec<usize> = match policy {
        StoredPolicy::Head => (0..count).collect(),
        StoredPolicy::Random { seed } => {
            let mut all: Vec<usize> = (0..normalized.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            all.shuffle(&mut rng);
            all.truncate(count);
            all
        }
    };
    let rows = indices
        .iter()
        .map(|&i| encode_differential(&normalized.features[i], proto).expect("normalized input"))
        .collect::<Vec<_>>();
    Ok(StoredVectors { rows })
}

/// Deterministic synthetic stand-in for the room-occupancy sensor dataset
/// (temperature, humidity, light, CO2, humidity ratio; binary occupancy).
/// Class-conditional sensor levels with overlap and a small label-noise
/// fraction set the achievable accuracy ceiling in the low-to-mid 90s.
pub fn synth_occupancy(n: usize, seed: u64) -> Dataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let gauss = move |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    for i in 0..n {
        let occupied = i % 2 == 0;
        let (t_mu, h_mu, l_mu, c_mu) = if occupied {
            (21.8, 27.0, 430.0, 900.0)
        } else {
            (20.4, 25.5, 60.0, 500.0)
        };
        let temperature = t_mu + 1.0 * gauss(&mut rng);
        let humidity = h_mu + 3.5 * gauss(&mut rng);
        let light = (l_mu + 160.0 * gauss(&mut rng)).max(0.0);
        let co2 = (c_mu + 200.0 * gauss(&mut rng)).max(350.0);
        let ratio = humidity * 0.00028 + 0.0004 * gauss(&mut rng).abs();
        let label = if rng.gen_bool(0.01) { !occupied } else { occupied };
        features.push(vec![temperature, humidity, light, co2, ratio]);
        labels.push(LabelPair::from_bool(label));
    }
    Dataset {
        features,
        labels,
        feature_names: vec![
            "Temperature".into(),
            "Humidity".into(),
            "Light".into(),
            "CO2".into(),
            "HumidityRatio".into(),
        ],
    }
}

/// Write a dataset back out as CSV with the label in the last column.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = dataset.feature_names.clone();
    header.push("Occupancy".into());
    writer.write_record(&header)?;
    for (row, label) in dataset.features.iter().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        record.push(label.y_plus.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
