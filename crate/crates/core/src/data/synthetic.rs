use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::csv_io::round_significant;
use super::{DataError, Dataset, PatientRecord, SensorSchema};

const MAX_REJECTIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

/// Per-sensor Gaussian parameters for one patient status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProfile {
    pub name: String,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// Generator configuration: every (label, sensor) cell is a Gaussian
/// truncated to the sensor's physiological range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub sensors: Vec<SensorRange>,
    pub labels: Vec<LabelProfile>,
    pub samples: usize,
}

struct SensorDefault {
    name: &'static str,
    low: f64,
    high: f64,
    mean: f64,
    stddev: f64,
}

const SENSORS: [SensorDefault; 8] = [
    SensorDefault { name: "heart_rate", low: 40.0, high: 180.0, mean: 75.0, stddev: 4.0 },
    SensorDefault { name: "systolic", low: 80.0, high: 220.0, mean: 118.0, stddev: 5.0 },
    SensorDefault { name: "diastolic", low: 40.0, high: 140.0, mean: 78.0, stddev: 3.5 },
    SensorDefault { name: "glucose", low: 50.0, high: 400.0, mean: 100.0, stddev: 5.0 },
    SensorDefault { name: "blood_oxygen", low: 70.0, high: 100.0, mean: 97.0, stddev: 0.8 },
    SensorDefault { name: "respiration", low: 6.0, high: 40.0, mean: 16.0, stddev: 0.9 },
    SensorDefault { name: "alcohol", low: 0.0, high: 0.4, mean: 0.04, stddev: 0.002 },
    SensorDefault { name: "skin_conductance", low: 0.5, high: 30.0, mean: 5.0, stddev: 0.25 },
];

/// (label, [(sensor index, multiplicative shift of the normal mean)])
const LABELS: [(&str, &[(usize, f64)]); 6] = [
    ("normal", &[]),
    ("high_blood_pressure", &[(1, 1.22), (2, 1.20)]),
    ("high_cholesterol", &[(0, 1.18), (3, 1.16), (6, 1.20)]),
    ("abnormal_oxygen", &[(4, 0.91), (5, 1.22)]),
    ("excessive_sweating", &[(7, 1.22)]),
    ("high_blood_sugar", &[(3, 1.28), (7, 1.10)]),
];

impl Default for SyntheticConfig {
    /// Eight vital signs, six patient statuses, 17 000 samples. Normal
    /// means sit inside the usual clinical ranges; each disease status
    /// shifts a small signature subset of sensors.
    fn default() -> Self {
        let sensors = SENSORS
            .iter()
            .map(|s| SensorRange {
                name: s.name.to_string(),
                low: s.low,
                high: s.high,
            })
            .collect();
        let labels = LABELS
            .iter()
            .map(|(name, shifts)| {
                let mut means: Vec<f64> = SENSORS.iter().map(|s| s.mean).collect();
                let mut stddevs: Vec<f64> = SENSORS.iter().map(|s| s.stddev).collect();
                for &(sensor, factor) in shifts.iter() {
                    means[sensor] *= factor;
                    stddevs[sensor] *= factor;
                }
                LabelProfile {
                    name: name.to_string(),
                    means,
                    stddevs,
                }
            })
            .collect();
        Self {
            sensors,
            labels,
            samples: 17_000,
        }
    }
}

impl SyntheticConfig {
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn schema(&self) -> Result<SensorSchema, DataError> {
        SensorSchema::new(
            self.sensors.iter().map(|s| s.name.clone()).collect(),
            self.labels.iter().map(|l| l.name.clone()).collect(),
        )
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for s in &self.sensors {
            if !s.low.is_finite() || !s.high.is_finite() || s.low > s.high {
                return Err(DataError::InvalidRange {
                    sensor: s.name.clone(),
                    low: s.low,
                    high: s.high,
                });
            }
        }
        for l in &self.labels {
            if l.means.len() != self.sensors.len() || l.stddevs.len() != self.sensors.len() {
                return Err(DataError::InvalidSchema(format!(
                    "label `{}` must give one mean and stddev per sensor",
                    l.name
                )));
            }
            for (i, (&m, &sd)) in l.means.iter().zip(&l.stddevs).enumerate() {
                if !m.is_finite() || !sd.is_finite() || sd < 0.0 {
                    return Err(DataError::InvalidSchema(format!(
                        "label `{}`, sensor `{}`: mean {m} / stddev {sd} invalid",
                        l.name, self.sensors[i].name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn sample_truncated(rng: &mut ChaCha8Rng, mean: f64, stddev: f64, low: f64, high: f64) -> f64 {
    if stddev == 0.0 || low == high {
        return mean.clamp(low, high);
    }
    let normal = Normal::new(mean, stddev).expect("validated stddev");
    for _ in 0..MAX_REJECTIONS {
        let v = normal.sample(rng);
        if (low..=high).contains(&v) {
            return v;
        }
    }
    // Mean far outside the range: fall back to uniform inside it.
    rng.random_range(low..=high)
}

/// Draws `config.samples` records. Labels cycle round-robin so every
/// status gets an equal share; values are rounded to the CSV precision so
/// that a save/load cycle is lossless. Pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset, DataError> {
    config.validate()?;
    let schema = config.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_labels = config.labels.len();
    let mut records = Vec::with_capacity(config.samples);
    for i in 0..config.samples {
        let label = i % n_labels;
        let profile = &config.labels[label];
        let measurements = config
            .sensors
            .iter()
            .enumerate()
            .map(|(s, range)| {
                let v = sample_truncated(
                    &mut rng,
                    profile.means[s],
                    profile.stddevs[s],
                    range.low,
                    range.high,
                );
                round_significant(v).clamp(range.low, range.high)
            })
            .collect();
        records.push(PatientRecord::new(measurements, label));
    }
    Dataset::new(schema, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_shape() {
        let ds = generate_synthetic(&SyntheticConfig::default(), 7).unwrap();
        assert_eq!(ds.len(), 17_000);
        assert_eq!(ds.n_sensors(), 8);
        assert_eq!(ds.n_labels(), 6);
        assert!(ds.records.iter().all(|r| r.measurements.len() == 8));
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SyntheticConfig::default().with_samples(500);
        let a = generate_synthetic(&cfg, 42).unwrap();
        let b = generate_synthetic(&cfg, 42).unwrap();
        let c = generate_synthetic(&cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (x, y) in ra.measurements.iter().zip(&rb.measurements) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn zero_samples_gives_empty_dataset() {
        let ds = generate_synthetic(&SyntheticConfig::default().with_samples(0), 1).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.n_sensors(), 8);
    }

    #[test]
    fn inverted_range_is_rejected() {
        let mut cfg = SyntheticConfig::default();
        cfg.sensors[3].low = 500.0;
        match generate_synthetic(&cfg, 1) {
            Err(DataError::InvalidRange { sensor, .. }) => assert_eq!(sensor, "glucose"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn values_stay_in_range() {
        let cfg = SyntheticConfig::default().with_samples(3000);
        let ds = generate_synthetic(&cfg, 9).unwrap();
        for r in &ds.records {
            for (v, s) in r.measurements.iter().zip(&cfg.sensors) {
                assert!(*v >= s.low && *v <= s.high);
            }
        }
    }
}
