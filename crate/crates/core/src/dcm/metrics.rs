use serde::{Deserialize, Serialize};

use super::{Dcm, DcmError};
use crate::data::Dataset;

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(n_labels: usize) -> Self {
        Self {
            counts: vec![vec![0; n_labels]; n_labels],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Macro averages over the labels that occur as ground truth. A label
    /// that is never predicted has precision 0.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self, DcmError> {
        let total = cm.total();
        if total == 0 {
            return Err(DcmError::EmptyDataset);
        }
        let n = cm.counts.len();
        let correct: usize = (0..n).map(|i| cm.counts[i][i]).sum();
        let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
        for l in 0..n {
            let row: usize = cm.counts[l].iter().sum();
            if row == 0 {
                continue;
            }
            present += 1;
            let col: usize = (0..n).map(|t| cm.counts[t][l]).sum();
            let tp = cm.counts[l][l] as f64;
            let precision = if col == 0 { 0.0 } else { tp / col as f64 };
            let recall = tp / row as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            p_sum += precision;
            r_sum += recall;
            f_sum += f1;
        }
        let k = present as f64;
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            precision: p_sum / k,
            recall: r_sum / k,
            f1: f_sum / k,
        })
    }
}

/// Confusion matrix and macro metrics of `model` on `test`.
pub fn evaluate(model: &Dcm, test: &Dataset) -> Result<(Metrics, ConfusionMatrix), DcmError> {
    if test.is_empty() {
        return Err(DcmError::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::new(test.n_labels().max(model.n_labels()));
    for r in &test.records {
        cm.record(r.label, model.predict(&r.measurements)?);
    }
    Ok((Metrics::from_confusion(&cm)?, cm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let cm = ConfusionMatrix {
            counts: vec![vec![3, 0], vec![0, 5]],
        };
        let m = Metrics::from_confusion(&cm).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_two_class() {
        let cm = ConfusionMatrix {
            counts: vec![vec![10, 0], vec![10, 0]],
        };
        let m = Metrics::from_confusion(&cm).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.precision, 0.25);
    }

    #[test]
    fn three_class_hand_computed() {
        // truth\pred   0  1  2
        //   0          5  2  1
        //   1          1  6  1
        //   2          0  3  4
        let cm = ConfusionMatrix {
            counts: vec![vec![5, 2, 1], vec![1, 6, 1], vec![0, 3, 4]],
        };
        let m = Metrics::from_confusion(&cm).unwrap();
        // precision: 5/6, 6/11, 4/6 ; recall: 5/8, 6/8, 4/7
        let p = [5.0 / 6.0, 6.0 / 11.0, 4.0 / 6.0];
        let r = [5.0 / 8.0, 6.0 / 8.0, 4.0 / 7.0];
        let f: Vec<f64> = p.iter().zip(&r).map(|(p, r)| 2.0 * p * r / (p + r)).collect();
        assert!((m.accuracy - 15.0 / 23.0).abs() < 1e-12);
        assert!((m.precision - p.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        assert!((m.recall - r.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        assert!((m.f1 - f.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_labels_are_not_averaged() {
        let cm = ConfusionMatrix {
            counts: vec![vec![4, 0, 0], vec![0, 0, 0], vec![0, 0, 4]],
        };
        let m = Metrics::from_confusion(&cm).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(Metrics::from_confusion(&ConfusionMatrix::new(3)).is_err());
    }
}
