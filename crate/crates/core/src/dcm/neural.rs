use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_dims, DcmError, Scaler};
use crate::data::{Dataset, LabelId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralParams {
    pub epochs: usize,
    pub step_size: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for NeuralParams {
    fn default() -> Self {
        Self {
            epochs: 40,
            step_size: 0.005,
            batch: 64,
            seed: 0,
        }
    }
}

/// Hidden layer sizes used for the eight-sensor synthetic system.
pub const DEFAULT_HIDDEN: [usize; 3] = [20, 12, 8];

/// Feed-forward network. `weights[m][o][n]` connects node `o` of layer `m`
/// to node `n` of layer `m + 1`; `biases[m][n]` is the bias of that node.
/// Hidden layers use `activation`, the output layer is linear (logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNetworkModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    pub scaler: Scaler,
}

struct Trace {
    /// Pre-activation values per non-input layer.
    pre: Vec<Vec<f64>>,
    /// Outputs per layer, input layer included.
    out: Vec<Vec<f64>>,
}

impl NeuralNetworkModel {
    /// He-initialized network with the given layer sizes.
    pub fn initialize(layer_sizes: Vec<usize>, scaler: Scaler, seed: u64) -> Result<Self, DcmError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(DcmError::InvalidModel(format!("bad layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            weights.push(
                (0..w[0])
                    .map(|_| (0..w[1]).map(|_| normal.sample(&mut rng)).collect())
                    .collect(),
            );
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            activation: Activation::Relu,
            scaler,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_labels(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_node_count(&self) -> usize {
        self.layer_sizes[1..self.layer_sizes.len() - 1].iter().sum()
    }

    pub fn validate(&self) -> Result<(), DcmError> {
        let l = self.layer_sizes.len();
        if l < 2 || self.weights.len() != l - 1 || self.biases.len() != l - 1 {
            return Err(DcmError::InvalidModel("layer count mismatch".into()));
        }
        for (m, w) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[m].len() != w[0]
                || self.weights[m].iter().any(|row| row.len() != w[1])
                || self.biases[m].len() != w[1]
            {
                return Err(DcmError::InvalidModel(format!("layer {m} dimensions do not chain")));
            }
        }
        if self.scaler.mean.len() != self.layer_sizes[0] {
            return Err(DcmError::InvalidModel("scaler size mismatch".into()));
        }
        if !self.parameters().iter().all(|v| v.is_finite()) {
            return Err(DcmError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    fn activate(&self, t: f64) -> f64 {
        match self.activation {
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
        }
    }

    fn activate_grad(&self, pre: f64, out: f64) -> f64 {
        match self.activation {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    fn forward_standardized(&self, z: Vec<f64>) -> Trace {
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut out = vec![z];
        for (m, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &out[m];
            let mut p = b.clone();
            for (o, row) in w.iter().enumerate() {
                let a = input[o];
                if a == 0.0 {
                    continue;
                }
                for (pn, wn) in p.iter_mut().zip(row) {
                    *pn += a * wn;
                }
            }
            let o: Vec<f64> = if m == last {
                p.clone()
            } else {
                p.iter().map(|&t| self.activate(t)).collect()
            };
            pre.push(p);
            out.push(o);
        }
        Trace { pre, out }
    }

    pub fn logits(&self, p: &[f64]) -> Result<Vec<f64>, DcmError> {
        check_dims(self.n_sensors(), p)?;
        let mut t = self.forward_standardized(self.scaler.transform(p));
        Ok(t.out.pop().unwrap())
    }

    pub fn predict(&self, p: &[f64]) -> Result<LabelId, DcmError> {
        Ok(argmax_lowest(&self.logits(p)?))
    }

    /// First-layer weights and biases acting on raw measurements (scaler folded in).
    pub fn raw_first_layer(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let w0 = &self.weights[0];
        let (mean, std) = (&self.scaler.mean, &self.scaler.std);
        let w: Vec<Vec<f64>> = w0
            .iter()
            .zip(std)
            .map(|(row, s)| row.iter().map(|v| v / s).collect())
            .collect();
        let b = (0..self.layer_sizes[1])
            .map(|n| {
                self.biases[0][n]
                    - (0..self.layer_sizes[0])
                        .map(|o| w0[o][n] * mean[o] / std[o])
                        .sum::<f64>()
            })
            .collect();
        (w, b)
    }

    /// Flat parameter vector: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for row in w {
                v.extend_from_slice(row);
            }
            v.extend_from_slice(b);
        }
        v
    }

    pub fn set_parameters(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for row in w.iter_mut() {
                for v in row.iter_mut() {
                    *v = it.next().expect("parameter vector too short");
                }
            }
            for v in b.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        }
    }

    /// Mean softmax cross-entropy of raw inputs `xs` against labels `ys`.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[LabelId]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| {
                let t = self.forward_standardized(self.scaler.transform(x));
                cross_entropy(t.out.last().unwrap(), y).0
            })
            .sum::<f64>()
            / n
    }

    /// Loss and its gradient, laid out like [`Self::parameters`].
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[LabelId]) -> (f64, Vec<f64>) {
        let mut grad_w: Vec<Vec<Vec<f64>>> = self
            .weights
            .iter()
            .map(|w| w.iter().map(|row| vec![0.0; row.len()]).collect())
            .collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let t = self.forward_standardized(self.scaler.transform(x));
            let (l, mut delta) = cross_entropy(t.out.last().unwrap(), y);
            total += l;
            for m in (0..self.weights.len()).rev() {
                let input = &t.out[m];
                for (o, gw_row) in grad_w[m].iter_mut().enumerate() {
                    let a = input[o];
                    if a != 0.0 {
                        for (g, d) in gw_row.iter_mut().zip(&delta) {
                            *g += a * d;
                        }
                    }
                }
                for (g, d) in grad_b[m].iter_mut().zip(&delta) {
                    *g += d;
                }
                if m > 0 {
                    delta = self.weights[m]
                        .iter()
                        .enumerate()
                        .map(|(o, row)| {
                            let back: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                            back * self.activate_grad(t.pre[m - 1][o], t.out[m][o])
                        })
                        .collect();
                }
            }
        }
        let n = xs.len().max(1) as f64;
        let mut flat = Vec::new();
        for (w, b) in grad_w.iter().zip(&grad_b) {
            for row in w {
                flat.extend(row.iter().map(|g| g / n));
            }
            flat.extend(b.iter().map(|g| g / n));
        }
        (total / n, flat)
    }
}

/// (loss, d loss / d logits) for one sample.
fn cross_entropy(logits: &[f64], y: LabelId) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[y] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / sum - if i == y { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam on softmax cross-entropy with rectifier hidden layers.
pub fn train_nn(
    train: &Dataset,
    hidden: &[usize],
    params: NeuralParams,
) -> Result<NeuralNetworkModel, DcmError> {
    if train.is_empty() {
        return Err(DcmError::EmptyDataset);
    }
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(DcmError::InvalidModel("hidden architecture must be non-empty".into()));
    }
    let mut sizes = vec![train.n_sensors()];
    sizes.extend_from_slice(hidden);
    sizes.push(train.n_labels());
    let mut model = NeuralNetworkModel::initialize(sizes, Scaler::fit(train), params.seed)?;

    let xs: Vec<Vec<f64>> = train.records.iter().map(|r| r.measurements.clone()).collect();
    let ys: Vec<LabelId> = train.records.iter().map(|r| r.label).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut flat = model.parameters();
    let mut adam = Adam::new(flat.len(), params.step_size);
    let batch = params.batch.max(1);

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<LabelId> = chunk.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&bx, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(DcmError::NonFiniteLoss);
            }
            adam.step(&mut flat, &grad);
            model.set_parameters(&flat);
        }
    }
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, SensorSchema};

    #[test]
    fn hand_set_single_hidden_layer_forward_pass() {
        // 2 inputs -> 2 hidden (relu) -> 2 outputs, identity scaler.
        let model = NeuralNetworkModel {
            layer_sizes: vec![2, 2, 2],
            weights: vec![
                vec![vec![1.0, -1.0], vec![2.0, 0.5]],
                vec![vec![1.0, 0.0], vec![-1.0, 1.0]],
            ],
            biases: vec![vec![0.0, 1.0], vec![0.5, 0.0]],
            activation: Activation::Relu,
            scaler: Scaler::identity(2),
        };
        // x = (1, 2): hidden pre = (1*1 + 2*2 + 0, 1*-1 + 2*0.5 + 1) = (5, 1)
        // out = (5*1 + 1*-1 + 0.5, 5*0 + 1*1 + 0) = (4.5, 1)
        let logits = model.logits(&[1.0, 2.0]).unwrap();
        assert_eq!(logits, vec![4.5, 1.0]);
        assert_eq!(model.predict(&[1.0, 2.0]).unwrap(), 0);
        // x = (-3, 0): pre = (-3, 4) -> relu (0, 4); out = (-4 + 0.5, 4) = (-3.5, 4)
        assert_eq!(model.logits(&[-3.0, 0.0]).unwrap(), vec![-3.5, 4.0]);
        assert_eq!(model.predict(&[-3.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn parameters_round_trip() {
        let mut m = NeuralNetworkModel::initialize(vec![3, 4, 2], Scaler::identity(3), 1).unwrap();
        let p = m.parameters();
        assert_eq!(p.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        m.set_parameters(&shifted);
        assert_eq!(m.parameters(), shifted);
    }

    fn blobs(n: usize, seed: u64) -> Dataset {
        let schema =
            SensorSchema::new(vec!["a".into(), "b".into()], vec!["A".into(), "B".into()])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let records = (0..n)
            .map(|i| {
                let l = i % 2;
                let c = if l == 0 { -3.0 } else { 3.0 };
                PatientRecord::new(
                    vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)],
                    l,
                )
            })
            .collect();
        Dataset::new(schema, records).unwrap()
    }

    #[test]
    fn two_blobs_are_learned() {
        let train = blobs(200, 1);
        let test = blobs(100, 2);
        let params = NeuralParams {
            epochs: 200,
            step_size: 0.01,
            batch: 16,
            seed: 3,
        };
        let m = train_nn(&train, &[4], params).unwrap();
        let correct = test
            .records
            .iter()
            .filter(|r| m.predict(&r.measurements).unwrap() == r.label)
            .count();
        assert_eq!(correct, test.len());
    }

    #[test]
    fn training_is_deterministic() {
        let train = blobs(60, 4);
        let params = NeuralParams {
            epochs: 5,
            ..Default::default()
        };
        let a = train_nn(&train, &[3, 3], params).unwrap();
        let b = train_nn(&train, &[3, 3], params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_architecture_is_rejected() {
        let train = blobs(10, 4);
        assert!(train_nn(&train, &[], NeuralParams::default()).is_err());
    }

    #[test]
    fn raw_first_layer_matches_standardized_forward() {
        let train = blobs(50, 9);
        let m = train_nn(&train, &[3], NeuralParams { epochs: 3, ..Default::default() }).unwrap();
        let (w, b) = m.raw_first_layer();
        let x = [1.7, -0.4];
        let z = m.scaler.transform(&x);
        for n in 0..3 {
            let std_pre: f64 = (0..2).map(|o| z[o] * m.weights[0][o][n]).sum::<f64>() + m.biases[0][n];
            let raw_pre: f64 = (0..2).map(|o| x[o] * w[o][n]).sum::<f64>() + b[n];
            assert!((std_pre - raw_pre).abs() < 1e-9);
        }
    }
}
