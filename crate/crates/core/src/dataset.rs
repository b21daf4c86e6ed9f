//! Tabular datasets with a binary label `y` and a binary sensitive attribute `z`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

/// One cell of the `(label, sensitive)` partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub y: u8,
    pub z: u8,
}

impl GroupKey {
    /// All four keys in index order `(0,0), (0,1), (1,0), (1,1)`.
    pub const ALL: [GroupKey; 4] = [
        GroupKey { y: 0, z: 0 },
        GroupKey { y: 0, z: 1 },
        GroupKey { y: 1, z: 0 },
        GroupKey { y: 1, z: 1 },
    ];

    pub const fn new(y: u8, z: u8) -> Self {
        GroupKey { y, z }
    }

    pub const fn index(self) -> usize {
        (self.y as usize) * 2 + self.z as usize
    }

    /// Same label, other sensitive value.
    pub const fn sibling(self) -> Self {
        GroupKey {
            y: self.y,
            z: 1 - self.z,
        }
    }

    /// Parses `y0z1`-style names.
    pub fn parse(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() != 4 || b[0] != b'y' || b[2] != b'z' {
            return None;
        }
        let bit = |c: u8| match c {
            b'0' => Some(0),
            b'1' => Some(1),
            _ => None,
        };
        Some(GroupKey::new(bit(b[1])?, bit(b[3])?))
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.y, self.z)
    }
}

/// A value per group, indexed by [`GroupKey`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerGroup<T>(pub [T; 4]);

impl<T> PerGroup<T> {
    pub fn from_fn(mut f: impl FnMut(GroupKey) -> T) -> Self {
        PerGroup([
            f(GroupKey::ALL[0]),
            f(GroupKey::ALL[1]),
            f(GroupKey::ALL[2]),
            f(GroupKey::ALL[3]),
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (GroupKey, &T)> {
        GroupKey::ALL.iter().copied().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(GroupKey, &T) -> U) -> PerGroup<U> {
        PerGroup::from_fn(|k| f(k, &self.0[k.index()]))
    }
}

impl<T> Index<GroupKey> for PerGroup<T> {
    type Output = T;
    fn index(&self, key: GroupKey) -> &T {
        &self.0[key.index()]
    }
}

impl<T> IndexMut<GroupKey> for PerGroup<T> {
    fn index_mut(&mut self, key: GroupKey) -> &mut T {
        &mut self.0[key.index()]
    }
}

/// Feature matrix (row-major) with binary labels and sensitive attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
    ids: Vec<usize>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major features. `ids` default to `0..n`.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Self> {
        let n = labels.len();
        let ids = (0..n).collect();
        Self::with_ids(features, n_features, labels, sensitive, ids)
    }

    pub fn with_ids(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
        ids: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if n_features == 0 {
            return Err(Error::InvalidModel("dataset needs at least one feature".into()));
        }
        if sensitive.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sensitive.len(),
            });
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: ids.len(),
            });
        }
        if features.len() != n * n_features {
            return Err(Error::DimensionMismatch {
                expected: n * n_features,
                got: features.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryLabel {
                row,
                value: labels[row].to_string(),
            });
        }
        if let Some(row) = sensitive.iter().position(|&v| v > 1) {
            return Err(Error::NonBinarySensitive {
                row,
                value: sensitive[row].to_string(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        let feature_names = (1..=n_features).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            features,
            n_features,
            labels,
            sensitive,
            ids,
            feature_names,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn group(&self, i: usize) -> GroupKey {
        GroupKey::new(self.labels[i], self.sensitive[i])
    }

    /// Same rows with a replaced label vector. Features and `z` are untouched.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Dataset::with_ids(
            self.features.clone(),
            self.n_features,
            labels,
            self.sensitive.clone(),
            self.ids.clone(),
        )
        .and_then(|d| d.with_feature_names(self.feature_names.clone()))
    }

    /// Rows at the given positions, in that order, keeping their ids.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(positions.len() * self.n_features);
        for &p in positions {
            features.extend_from_slice(self.row(p));
        }
        Dataset::with_ids(
            features,
            self.n_features,
            positions.iter().map(|&p| self.labels[p]).collect(),
            positions.iter().map(|&p| self.sensitive[p]).collect(),
            positions.iter().map(|&p| self.ids[p]).collect(),
        )
        .and_then(|d| d.with_feature_names(self.feature_names.clone()))
    }

    /// Writes `feature..., y, z` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    /// [`Dataset::write_csv`] into any writer.
    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("y".into());
        header.push("z".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            rec.push(self.sensitive[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

fn default_binary_map() -> BTreeMap<String, u8> {
    BTreeMap::from([("0".to_string(), 0), ("1".to_string(), 1)])
}

/// Column roles for [`load_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label: String,
    pub sensitive: String,
    /// Feature columns. Empty means every column not named elsewhere.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default = "default_binary_map")]
    pub label_values: BTreeMap<String, u8>,
    #[serde(default = "default_binary_map")]
    pub sensitive_values: BTreeMap<String, u8>,
}

impl Schema {
    pub fn new(label: &str, sensitive: &str) -> Self {
        Schema {
            label: label.into(),
            sensitive: sensitive.into(),
            features: Vec::new(),
            ignore: Vec::new(),
            label_values: default_binary_map(),
            sensitive_values: default_binary_map(),
        }
    }

    /// The layout written by [`Dataset::write_csv`].
    pub fn native() -> Self {
        Schema::new("y", "z")
    }

    fn validate(&self) -> Result<()> {
        for (name, map) in [("label", &self.label_values), ("sensitive", &self.sensitive_values)] {
            let mut targets: Vec<u8> = map.values().copied().collect();
            targets.sort_unstable();
            targets.dedup();
            if targets != [0, 1] {
                return Err(Error::Config(format!(
                    "{name} value map must send values onto both 0 and 1"
                )));
            }
        }
        Ok(())
    }
}

/// Loads a header-first, comma-delimited UTF-8 file.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let label_col = col(&schema.label)?;
    let sens_col = col(&schema.sensitive)?;
    for name in &schema.ignore {
        col(name)?;
    }
    let feature_cols: Vec<usize> = if schema.features.is_empty() {
        (0..headers.len())
            .filter(|&j| {
                j != label_col && j != sens_col && !schema.ignore.iter().any(|c| c == &headers[j])
            })
            .collect()
    } else {
        schema.features.iter().map(|c| col(c)).collect::<Result<_>>()?
    };
    if feature_cols.is_empty() {
        return Err(Error::Config("schema selects no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| -> Result<&str> {
            match rec.get(j) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::MissingCell {
                    row,
                    column: headers[j].to_string(),
                }),
            }
        };
        for &j in &feature_cols {
            let raw = cell(j)?;
            let v: f64 = raw.parse().map_err(|_| Error::NonNumericFeature {
                row,
                column: headers[j].to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericFeature {
                    row,
                    column: headers[j].to_string(),
                    value: raw.to_string(),
                });
            }
            features.push(v);
        }
        let raw = cell(label_col)?;
        labels.push(*schema.label_values.get(raw).ok_or_else(|| Error::NonBinaryLabel {
            row,
            value: raw.to_string(),
        })?);
        let raw = cell(sens_col)?;
        sensitive.push(
            *schema
                .sensitive_values
                .get(raw)
                .ok_or_else(|| Error::NonBinarySensitive {
                    row,
                    value: raw.to_string(),
                })?,
        );
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let names = feature_cols.iter().map(|&j| headers[j].to_string()).collect();
    Dataset::new(features, feature_cols.len(), labels, sensitive)?.with_feature_names(names)
}

/// Per-column location and scale used by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Columns whose population std falls below this map to all zeros.
const CONSTANT_COLUMN_STD: f64 = 1e-12;

impl Stats {
    pub fn compute(d: &Dataset) -> Stats {
        let n = d.len() as f64;
        let m = d.n_features();
        let mut means = vec![0.0; m];
        for i in 0..d.len() {
            for (acc, v) in means.iter_mut().zip(d.row(i)) {
                *acc += v;
            }
        }
        means.iter_mut().for_each(|v| *v /= n);
        let mut vars = vec![0.0; m];
        for i in 0..d.len() {
            for ((acc, v), mu) in vars.iter_mut().zip(d.row(i)).zip(&means) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let stds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
        Stats { means, stds }
    }
}

/// Z-scores every feature column. Computes stats from `d` unless given.
pub fn standardize(d: &Dataset, stats: Option<&Stats>) -> Result<(Dataset, Stats)> {
    let stats = match stats {
        Some(s) => {
            if s.means.len() != d.n_features() || s.stds.len() != d.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: d.n_features(),
                    got: s.means.len().min(s.stds.len()),
                });
            }
            s.clone()
        }
        None => Stats::compute(d),
    };
    let m = d.n_features();
    let features = d
        .features
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let j = k % m;
            if stats.stds[j] < CONSTANT_COLUMN_STD {
                0.0
            } else {
                (v - stats.means[j]) / stats.stds[j]
            }
        })
        .collect();
    let out = Dataset {
        features,
        ..d.clone()
    };
    Ok((out, stats))
}

/// Fractions of a shuffle-then-cut split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            validation_fraction: validation,
            test_fraction: test,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSplit("fractions must be nonnegative".into()));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle, then a contiguous train / validation / test cut.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Option<Dataset>, Option<Dataset>)> {
    spec.validate()?;
    let n = d.len();
    let mut n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).min(n - n_train);
    if spec.test_fraction == 0.0 {
        n_train = n - n_val;
    }
    let n_test = n - n_train - n_val;
    for (name, frac, size) in [
        ("train", spec.train_fraction, n_train),
        ("validation", spec.validation_fraction, n_val),
        ("test", spec.test_fraction, n_test),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(Error::InvalidSplit(format!("{name} part rounds to zero rows")));
        }
    }
    if n_train == 0 {
        return Err(Error::InvalidSplit("train part is empty".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(spec.seed, 0x5_1177));
    let (train_idx, rest) = order.split_at(n_train);
    let (val_idx, test_idx) = rest.split_at(n_val);
    let part = |idx: &[usize]| -> Result<Option<Dataset>> {
        if idx.is_empty() {
            Ok(None)
        } else {
            d.subset(idx).map(Some)
        }
    };
    Ok((d.subset(train_idx)?, part(val_idx)?, part(test_idx)?))
}

/// Ascending positions of each `(y, z)` cell.
pub fn group_index(d: &Dataset) -> PerGroup<Vec<usize>> {
    let mut groups: PerGroup<Vec<usize>> = PerGroup::default();
    for i in 0..d.len() {
        groups[d.group(i)].push(i);
    }
    groups
}

/// Cell sizes of [`group_index`].
pub fn group_sizes(d: &Dataset) -> PerGroup<usize> {
    let mut sizes = PerGroup([0usize; 4]);
    for i in 0..d.len() {
        sizes[d.group(i)] += 1;
    }
    sizes
}
