//! Disease-classification models: CART decision tree, one-vs-rest
//! logistic regression and a rectifier feed-forward network.

mod logistic;
mod metrics;
mod neural;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, LabelId, SensorSchema};

pub use logistic::{train_lr, LogisticParams, LogisticRegressionModel};
pub use metrics::{evaluate, ConfusionMatrix, Metrics};
pub use neural::{train_nn, Activation, NeuralNetworkModel, NeuralParams, DEFAULT_HIDDEN};
pub use tree::{train_dt, Branch, DecisionTreeModel, PathRule, TreeNode, TreeParams, TreePath};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DcmError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("expected {expected} measurements, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged")]
    DivergenceDetected,
    #[error("training produced a non-finite loss")]
    NonFiniteLoss,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dims(expected: usize, p: &[f64]) -> Result<(), DcmError> {
    if p.len() != expected {
        return Err(DcmError::DimensionMismatch {
            expected,
            got: p.len(),
        });
    }
    Ok(())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn majority_label(counts: &[usize]) -> LabelId {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Per-sensor standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Population mean/std per sensor; zero spread is replaced by 1.
    pub fn fit(data: &Dataset) -> Self {
        let n_s = data.n_sensors();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; n_s];
        for r in &data.records {
            for (m, v) in mean.iter_mut().zip(&r.measurements) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; n_s];
        for r in &data.records {
            for ((s, v), m) in var.iter_mut().zip(&r.measurements).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcmKind {
    Dt,
    Lr,
    Nn,
}

/// Any of the three classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dcm {
    DecisionTree(DecisionTreeModel),
    LogisticRegression(LogisticRegressionModel),
    NeuralNetwork(NeuralNetworkModel),
}

impl Dcm {
    pub fn kind(&self) -> DcmKind {
        match self {
            Dcm::DecisionTree(_) => DcmKind::Dt,
            Dcm::LogisticRegression(_) => DcmKind::Lr,
            Dcm::NeuralNetwork(_) => DcmKind::Nn,
        }
    }

    pub fn predict(&self, p: &[f64]) -> Result<LabelId, DcmError> {
        match self {
            Dcm::DecisionTree(m) => m.predict(p),
            Dcm::LogisticRegression(m) => m.predict(p),
            Dcm::NeuralNetwork(m) => m.predict(p),
        }
    }

    pub fn n_sensors(&self) -> usize {
        match self {
            Dcm::DecisionTree(m) => m.n_sensors,
            Dcm::LogisticRegression(m) => m.n_sensors(),
            Dcm::NeuralNetwork(m) => m.n_sensors(),
        }
    }

    pub fn n_labels(&self) -> usize {
        match self {
            Dcm::DecisionTree(m) => m.n_labels,
            Dcm::LogisticRegression(m) => m.n_labels(),
            Dcm::NeuralNetwork(m) => m.n_labels(),
        }
    }

    pub fn validate(&self) -> Result<(), DcmError> {
        match self {
            Dcm::DecisionTree(m) => m.validate(),
            Dcm::LogisticRegression(m) => m.validate(),
            Dcm::NeuralNetwork(m) => m.validate(),
        }
    }
}

/// Versioned on-disk envelope for a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub schema: SensorSchema,
    pub model: Dcm,
}

impl ModelFile {
    pub fn new(schema: SensorSchema, model: Dcm) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            schema,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, DcmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DcmError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(DcmError::UnsupportedVersion(file.version));
        }
        file.model.validate()?;
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        assert_eq!(argmax_lowest(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[-1.0, -2.0, 5.0]), 2);
    }

    #[test]
    fn zero_lr_predicts_label_zero() {
        let m = LogisticRegressionModel {
            weights: vec![vec![0.0; 3]; 4],
            intercepts: vec![0.0; 4],
            scaler: Scaler::identity(3),
        };
        assert_eq!(Dcm::LogisticRegression(m).predict(&[5.0, -1.0, 2.0]).unwrap(), 0);
    }

    #[test]
    fn model_file_round_trip_and_version_check() {
        let tree = DecisionTreeModel::new(
            2,
            2,
            TreeNode::split(1, 0.5, TreeNode::leaf(0), TreeNode::leaf(1)),
        )
        .unwrap();
        let schema = SensorSchema::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into()])
            .unwrap();
        let file = ModelFile::new(schema, Dcm::DecisionTree(tree));
        let json = file.to_json().unwrap();
        assert!(json.contains("\"kind\": \"decision_tree\""));
        assert_eq!(ModelFile::from_json(&json).unwrap(), file);
        let bumped = json.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            ModelFile::from_json(&bumped),
            Err(DcmError::UnsupportedVersion(99))
        ));
    }
}
