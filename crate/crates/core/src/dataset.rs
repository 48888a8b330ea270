//! In-memory dataset representation and CSV loading.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scaler::FeatureScaler;

/// What kind of prediction problem the targets describe, as declared by the
/// caller before the data is inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskHint {
    Binary,
    MultiClass,
    Regression,
}

/// The resolved task, with the class count pinned down for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Binary,
    MultiClass { num_classes: usize },
    Regression,
}

impl Task {
    /// Number of classes, or `None` for regression.
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Task::Binary => Some(2),
            Task::MultiClass { num_classes } => Some(*num_classes),
            Task::Regression => None,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, Task::Regression)
    }
}

/// A fixed-order dataset: ids, a dense feature matrix and a target vector.
///
/// Row order is the order samples are presented to the sampling policy, so it
/// is preserved exactly as loaded or constructed.
#[derive(Debug, Clone)]
pub struct Dataset {
    ids: Vec<String>,
    feature_names: Vec<String>,
    features: Array2<f64>,
    targets: Array1<f64>,
    task: Task,
}

impl Dataset {
    /// Builds a dataset from parts, validating shapes, finiteness and labels.
    ///
    /// For `TaskHint::MultiClass` the class count is inferred as
    /// `max label + 1`; every class below the maximum must occur at least once.
    pub fn from_parts(
        ids: Vec<String>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        targets: Array1<f64>,
        hint: TaskHint,
    ) -> Result<Dataset> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidData("dataset has no feature columns".into()));
        }
        if ids.len() != n || targets.len() != n {
            return Err(Error::InvalidData(format!(
                "inconsistent lengths: {} rows, {} ids, {} targets",
                n,
                ids.len(),
                targets.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.ncols()
            )));
        }

        let mut seen = std::collections::HashSet::new();
        for (row, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate id '{id}' at row {}",
                    row + 1
                )));
            }
        }

        for ((i, j), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite feature at row {}, column '{}'",
                    i + 1,
                    feature_names[j]
                )));
            }
        }
        for (i, v) in targets.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite target at row {}",
                    i + 1
                )));
            }
        }

        let task = match hint {
            TaskHint::Binary => {
                for (i, v) in targets.iter().enumerate() {
                    if *v != 0.0 && *v != 1.0 {
                        return Err(Error::InvalidData(format!(
                            "binary target must be 0 or 1, got {v} at row {}",
                            i + 1
                        )));
                    }
                }
                Task::Binary
            }
            TaskHint::MultiClass => {
                let mut max_label = 0usize;
                for (i, v) in targets.iter().enumerate() {
                    if *v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidData(format!(
                            "multiclass target must be a non-negative integer, \
                             got {v} at row {}",
                            i + 1
                        )));
                    }
                    max_label = max_label.max(*v as usize);
                }
                let num_classes = max_label + 1;
                if num_classes < 3 {
                    return Err(Error::InvalidData(format!(
                        "multiclass targets span only {num_classes} classes; \
                         use the binary task instead"
                    )));
                }
                let mut counts = vec![0usize; num_classes];
                for v in targets.iter() {
                    counts[*v as usize] += 1;
                }
                if let Some(missing) = counts.iter().position(|c| *c == 0) {
                    return Err(Error::InvalidData(format!(
                        "class {missing} has no samples (labels must be \
                         contiguous from 0)"
                    )));
                }
                Task::MultiClass { num_classes }
            }
            TaskHint::Regression => Task::Regression,
        };

        if task.is_classification() {
            let distinct: std::collections::HashSet<u64> =
                targets.iter().map(|v| *v as u64).collect();
            if distinct.len() < 2 {
                return Err(Error::InvalidData(
                    "classification targets contain a single class".into(),
                ));
            }
        }

        Ok(Dataset {
            ids,
            feature_names,
            features,
            targets,
            task,
        })
    }

    /// Loads a dataset from a headered CSV file.
    ///
    /// `target_col` names the target column. `id_col`, when given, names the
    /// id column; otherwise row indices become ids. All remaining columns are
    /// features, kept in file order.
    pub fn load_csv(
        path: &Path,
        target_col: &str,
        id_col: Option<&str>,
        hint: TaskHint,
    ) -> Result<Dataset> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, target_col, id_col, hint)
    }

    fn parse_csv(
        text: &str,
        target_col: &str,
        id_col: Option<&str>,
        hint: TaskHint,
    ) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::InvalidData(format!("cannot read header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();

        let find = |name: &str| headers.iter().position(|h| h == name);
        let target_idx = find(target_col).ok_or_else(|| {
            Error::InvalidData(format!(
                "target column '{target_col}' not found; available: {}",
                headers.join(", ")
            ))
        })?;
        let id_idx = match id_col {
            Some(name) => Some(find(name).ok_or_else(|| {
                Error::InvalidData(format!(
                    "id column '{name}' not found; available: {}",
                    headers.join(", ")
                ))
            })?),
            None => None,
        };

        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|j| *j != target_idx && Some(*j) != id_idx)
            .collect();
        if feature_cols.is_empty() {
            return Err(Error::InvalidData(
                "no feature columns left after removing id and target".into(),
            ));
        }
        let feature_names: Vec<String> =
            feature_cols.iter().map(|j| headers[*j].clone()).collect();

        let mut ids = Vec::new();
        let mut targets = Vec::new();
        let mut flat = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| {
                Error::InvalidData(format!("cannot read row {}: {e}", row + 1))
            })?;
            if record.len() != headers.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {}",
                    row + 1,
                    record.len(),
                    headers.len()
                )));
            }
            let parse = |j: usize| -> Result<f64> {
                let cell = record[j].trim();
                cell.parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}, column '{}': cannot parse '{cell}' as a number",
                        row + 1,
                        headers[j]
                    ))
                })
            };
            ids.push(match id_idx {
                Some(j) => record[j].trim().to_string(),
                None => row.to_string(),
            });
            targets.push(parse(target_idx)?);
            for j in &feature_cols {
                flat.push(parse(*j)?);
            }
        }

        let n = ids.len();
        let d = feature_cols.len();
        let features = Array2::from_shape_vec((n, d), flat)
            .expect("row-major feature buffer matches (n, d)");
        Dataset::from_parts(ids, feature_names, features, Array1::from(targets), hint)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Per-class sample counts (classification only).
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let num_classes = self.task.num_classes().ok_or_else(|| {
            Error::InvalidConfig("class counts are undefined for regression".into())
        })?;
        let mut counts = vec![0usize; num_classes];
        for v in self.targets.iter() {
            counts[*v as usize] += 1;
        }
        Ok(counts)
    }

    /// Class proportions over the whole dataset (classification only).
    pub fn target_distribution(&self) -> Result<Vec<f64>> {
        let counts = self.class_counts()?;
        let n = self.n_samples() as f64;
        Ok(counts.iter().map(|c| *c as f64 / n).collect())
    }

    /// Features z-scored column-wise over the whole dataset. This is the
    /// policy's view of the data; base learners standardise on their own
    /// training split instead.
    pub fn standardized_features(&self) -> Array2<f64> {
        let (_, z) = FeatureScaler::fit_transform(&self.features.view());
        z
    }
}
