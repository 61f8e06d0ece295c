use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_dims, DcmError, Scaler};
use crate::data::{Dataset, LabelId};

const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub iterations: usize,
    pub step_size: f64,
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 0.5,
            tolerance: 1e-7,
        }
    }
}

/// One-vs-rest logistic regression. `weights[g][i]` multiplies the
/// standardized value of sensor `i` in the logit of label `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressionModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub scaler: Scaler,
}

impl LogisticRegressionModel {
    pub fn n_sensors(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn n_labels(&self) -> usize {
        self.intercepts.len()
    }

    pub fn validate(&self) -> Result<(), DcmError> {
        let n_s = self.n_sensors();
        if self.weights.len() != self.intercepts.len()
            || self.weights.iter().any(|w| w.len() != n_s)
            || self.scaler.std.len() != n_s
        {
            return Err(DcmError::InvalidModel("weight dimensions mismatch".into()));
        }
        let finite = self.weights.iter().flatten().chain(&self.intercepts).all(|v| v.is_finite());
        if !finite {
            return Err(DcmError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn logits(&self, p: &[f64]) -> Result<Vec<f64>, DcmError> {
        check_dims(self.n_sensors(), p)?;
        let z = self.scaler.transform(p);
        Ok(self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| dot(w, &z) + b)
            .collect())
    }

    pub fn predict(&self, p: &[f64]) -> Result<LabelId, DcmError> {
        Ok(argmax_lowest(&self.logits(p)?))
    }

    /// Logits as affine functions of the raw measurements:
    /// `(coefficients[g][i], constant[g])`.
    pub fn raw_affine(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let coef: Vec<Vec<f64>> = self
            .weights
            .iter()
            .map(|w| w.iter().zip(&self.scaler.std).map(|(w, s)| w / s).collect())
            .collect();
        let constant = self
            .weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| {
                b - w
                    .iter()
                    .zip(self.scaler.mean.iter().zip(&self.scaler.std))
                    .map(|(w, (m, s))| w * m / s)
                    .sum::<f64>()
            })
            .collect();
        (coef, constant)
    }

    /// Summed one-vs-rest mean negative log-likelihood over `data`.
    pub fn loss(&self, data: &Dataset) -> f64 {
        let xs: Vec<Vec<f64>> = data.records.iter().map(|r| self.scaler.transform(&r.measurements)).collect();
        (0..self.n_labels())
            .map(|g| {
                binary_loss(&self.weights[g], self.intercepts[g], &xs, |i| data.records[i].label == g)
            })
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn binary_loss(w: &[f64], b: f64, xs: &[Vec<f64>], positive: impl Fn(usize) -> bool) -> f64 {
    let n = xs.len().max(1) as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let t = dot(w, x) + b;
            if positive(i) {
                softplus(-t)
            } else {
                softplus(t)
            }
        })
        .sum::<f64>()
        / n
}

/// One binary classifier per label, fit by full-batch gradient descent on
/// the mean log-loss over standardized features.
pub fn train_lr(train: &Dataset, params: LogisticParams) -> Result<LogisticRegressionModel, DcmError> {
    if train.is_empty() {
        return Err(DcmError::EmptyDataset);
    }
    let scaler = Scaler::fit(train);
    let xs: Vec<Vec<f64>> = train.records.iter().map(|r| scaler.transform(&r.measurements)).collect();
    let n_s = train.n_sensors();
    let n = xs.len() as f64;
    let mut weights = vec![vec![0.0; n_s]; train.n_labels()];
    let mut intercepts = vec![0.0; train.n_labels()];

    for g in 0..train.n_labels() {
        let positive = |i: usize| train.records[i].label == g;
        let w = &mut weights[g];
        let b = &mut intercepts[g];
        let mut prev = binary_loss(w, *b, &xs, positive);
        let mut rising = 0;
        for _ in 0..params.iterations {
            let mut grad_w = vec![0.0; n_s];
            let mut grad_b = 0.0;
            for (i, x) in xs.iter().enumerate() {
                let y = if positive(i) { 1.0 } else { 0.0 };
                let err = sigmoid(dot(w, x) + *b) - y;
                for (gw, xv) in grad_w.iter_mut().zip(x) {
                    *gw += err * xv;
                }
                grad_b += err;
            }
            for (wv, gw) in w.iter_mut().zip(&grad_w) {
                *wv -= params.step_size * gw / n;
            }
            *b -= params.step_size * grad_b / n;

            let loss = binary_loss(w, *b, &xs, positive);
            if !loss.is_finite() {
                return Err(DcmError::DivergenceDetected);
            }
            if loss > prev {
                rising += 1;
                if rising >= DIVERGENCE_PATIENCE {
                    return Err(DcmError::DivergenceDetected);
                }
            } else {
                rising = 0;
            }
            let done = (prev - loss).abs() < params.tolerance;
            prev = loss;
            if done {
                break;
            }
        }
    }
    let model = LogisticRegressionModel {
        weights,
        intercepts,
        scaler,
    };
    model.validate()?;
    Ok(model)
}
