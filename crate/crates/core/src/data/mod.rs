//! Tabular datasets with a three-way feature partition.

mod csv_io;
mod synthetic;

pub use csv_io::{load_csv, save_csv, GroupSource, SchemaConfig};
pub use synthetic::{generate_synthetic, OutlierSpec, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use rand::seq::SliceRandom;

/// Split of feature indices into improvable, manipulable and immutable columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePartition {
    pub improvable: Vec<usize>,
    #[serde(default)]
    pub manipulable: Vec<usize>,
    #[serde(default)]
    pub immutable: Vec<usize>,
}

impl FeaturePartition {
    pub fn new(improvable: Vec<usize>, manipulable: Vec<usize>, immutable: Vec<usize>) -> Self {
        Self {
            improvable,
            manipulable,
            immutable,
        }
    }

    /// Every column improvable.
    pub fn all_improvable(d: usize) -> Self {
        Self::new((0..d).collect(), vec![], vec![])
    }

    /// Checks that the three lists are disjoint and cover `0..d` exactly.
    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = vec![false; d];
        for &i in self
            .improvable
            .iter()
            .chain(&self.manipulable)
            .chain(&self.immutable)
        {
            if i >= d {
                return Err(Error::config(format!(
                    "partition index {i} out of range for {d} features"
                )));
            }
            if seen[i] {
                return Err(Error::config(format!(
                    "feature {i} appears in more than one partition list"
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "feature {missing} is not assigned to any partition list"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.improvable.len() + self.manipulable.len() + self.immutable.len()
    }
}

/// Row-major feature matrix with binary labels and integer group attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    groups: Vec<usize>,
    n_groups: usize,
    d: usize,
    partition: FeaturePartition,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        d: usize,
        labels: Vec<u8>,
        groups: Vec<usize>,
        n_groups: usize,
        partition: FeaturePartition,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::config("dataset must contain at least one row"));
        }
        if d == 0 || features.len() != n * d {
            return Err(Error::Data(format!(
                "feature matrix has {} entries, expected {n} x {d}",
                features.len()
            )));
        }
        if groups.len() != n {
            return Err(Error::Data(format!(
                "{} group entries for {n} rows",
                groups.len()
            )));
        }
        if n_groups < 2 {
            return Err(Error::config("at least two groups are required"));
        }
        if column_names.len() != d {
            return Err(Error::Data(format!(
                "{} column names for {d} features",
                column_names.len()
            )));
        }
        partition.validate(d)?;
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}, column {}",
                i / d,
                i % d
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Data(format!("label at row {i} is not binary")));
        }
        if let Some(i) = groups.iter().position(|&z| z >= n_groups) {
            return Err(Error::Data(format!(
                "group index at row {i} exceeds group count {n_groups}"
            )));
        }
        Ok(Self {
            features,
            labels,
            groups,
            n_groups,
            d,
            partition,
            column_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups];
        for &z in &self.groups {
            counts[z] += 1;
        }
        counts
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        let mut groups = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            groups.push(self.groups[i]);
        }
        Self::new(
            features,
            self.d,
            labels,
            groups,
            self.n_groups,
            self.partition.clone(),
            self.column_names.clone(),
        )
    }

    /// Appends the group index as an extra immutable column named `z`.
    pub fn with_group_feature(&self) -> Self {
        let d = self.d + 1;
        let mut features = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.push(self.groups[i] as f64);
        }
        let mut partition = self.partition.clone();
        partition.immutable.push(self.d);
        let mut names = self.column_names.clone();
        names.push("z".to_string());
        Self {
            features,
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            n_groups: self.n_groups,
            d,
            partition,
            column_names: names,
        }
    }

    /// Concatenates two datasets with identical layout.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.d != other.d || self.partition != other.partition {
            return Err(Error::Data("cannot concatenate datasets with different layouts".into()));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut groups = self.groups.clone();
        groups.extend_from_slice(&other.groups);
        Self::new(
            features,
            self.d,
            labels,
            groups,
            self.n_groups.max(other.n_groups),
            self.partition.clone(),
            self.column_names.clone(),
        )
    }

    /// Largest `max - min` over all columns.
    pub fn max_column_range(&self) -> f64 {
        (0..self.d)
            .map(|j| {
                let (lo, hi) = (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |acc, i| {
                    let v = self.features[i * self.d + j];
                    (acc.0.min(v), acc.1.max(v))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// Number of test rows for a split: `round(n * fraction)` clamped to `[1, n - 1]`.
pub fn test_size(n: usize, test_fraction: f64) -> Result<usize> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::config(format!(
            "cannot split {n} row(s) into two non-empty parts"
        )));
    }
    let raw = (n as f64 * test_fraction).round() as usize;
    Ok(raw.clamp(1, n - 1))
}

/// Seeded shuffle split into `(train, test)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    let n_test = test_size(n, test_fraction)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(seed, stream::SPLIT));
    let (test_idx, train_idx) = perm.split_at(n_test);
    Ok((dataset.subset(train_idx)?, dataset.subset(test_idx)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let features: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        let groups = (0..n).map(|i| (i / 2) % 2).collect();
        Dataset::new(
            features,
            1,
            labels,
            groups,
            2,
            FeaturePartition::all_improvable(1),
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(FeaturePartition::new(vec![0], vec![2], vec![1]).validate(3).is_ok());
        assert!(FeaturePartition::new(vec![0, 1], vec![1], vec![2]).validate(3).is_err());
        assert!(FeaturePartition::new(vec![0], vec![], vec![2]).validate(3).is_err());
        assert!(FeaturePartition::new(vec![0, 3], vec![], vec![1, 2]).validate(3).is_err());
    }

    #[test]
    fn split_sizes_four_to_one() {
        let (train, test) = split(&toy(1000), 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (800, 200));
    }

    #[test]
    fn split_clamps_tiny_datasets() {
        let (train, test) = split(&toy(2), 0.999, 0).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
        assert!(split(&toy(1), 0.5, 0).is_err());
        assert!(split(&toy(10), 0.0, 0).is_err());
        assert!(split(&toy(10), 1.0, 0).is_err());
    }

    #[test]
    fn split_is_a_partition_and_deterministic() {
        let data = toy(57);
        let (a1, b1) = split(&data, 0.3, 11).unwrap();
        let (a2, b2) = split(&data, 0.3, 11).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let mut all: Vec<f64> = a1.features().iter().chain(b1.features()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, data.features());
    }

    #[test]
    fn rejects_invalid_rows() {
        let p = FeaturePartition::all_improvable(1);
        let names = vec!["x".to_string()];
        assert!(Dataset::new(vec![], 1, vec![], vec![], 2, p.clone(), names.clone()).is_err());
        assert!(Dataset::new(vec![f64::NAN], 1, vec![0], vec![0], 2, p.clone(), names.clone()).is_err());
        assert!(Dataset::new(vec![0.0], 1, vec![2], vec![0], 2, p.clone(), names.clone()).is_err());
        assert!(Dataset::new(vec![0.0], 1, vec![1], vec![2], 2, p.clone(), names.clone()).is_err());
        assert!(Dataset::new(vec![0.0], 1, vec![1], vec![0], 1, p, names).is_err());
    }

    #[test]
    fn group_feature_is_immutable() {
        let data = toy(4).with_group_feature();
        assert_eq!(data.dim(), 2);
        assert_eq!(data.partition().immutable, vec![1]);
        assert_eq!(data.row(2), &[2.0, 1.0]);
    }
}
