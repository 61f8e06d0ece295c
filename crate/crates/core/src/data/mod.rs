//! Tabular health-sensor data: schema, records, CSV I/O, the synthetic
//! generator and stratified splitting.

mod csv_io;
mod split;
mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{format_measurement, load_csv, load_csv_with_schema, save_csv, SchemaSidecar};
pub use split::stratified_split;
pub use synthetic::{generate_synthetic, LabelProfile, SensorRange, SyntheticConfig};

/// Label identifier, an index into [`SensorSchema::label_names`].
pub type LabelId = usize;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("input has no header row")]
    MissingHeader,
    #[error("label column `{0}` not found in header")]
    UnknownLabelColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    MissingField {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid range for sensor `{sensor}`: low {low} > high {high}")]
    InvalidRange { sensor: String, low: f64, high: f64 },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("record {index} does not conform to schema: {reason}")]
    NonConforming { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Names of the sensors (columns) and the patient-status labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSchema {
    pub sensor_names: Vec<String>,
    pub label_names: Vec<String>,
}

impl SensorSchema {
    pub fn new(sensor_names: Vec<String>, label_names: Vec<String>) -> Result<Self, DataError> {
        let schema = Self {
            sensor_names,
            label_names,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.sensor_names.len() < 2 {
            return Err(DataError::InvalidSchema("need at least 2 sensors".into()));
        }
        if self.label_names.len() < 2 {
            return Err(DataError::InvalidSchema("need at least 2 labels".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.sensor_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate sensor name `{name}`"
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &self.label_names {
            if !seen.insert(name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate label name `{name}`"
                )));
            }
        }
        Ok(())
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn sensor_index(&self, name: &str) -> Option<usize> {
        self.sensor_names.iter().position(|s| s == name)
    }
}

/// One measurement vector with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub measurements: Vec<f64>,
    pub label: LabelId,
}

impl PatientRecord {
    pub fn new(measurements: Vec<f64>, label: LabelId) -> Self {
        Self {
            measurements,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: SensorSchema,
    pub records: Vec<PatientRecord>,
}

impl Dataset {
    /// Builds a dataset, checking every record against the schema.
    pub fn new(schema: SensorSchema, records: Vec<PatientRecord>) -> Result<Self, DataError> {
        schema.validate()?;
        let ds = Self { schema, records };
        for (index, rec) in ds.records.iter().enumerate() {
            ds.check_record(index, rec)?;
        }
        Ok(ds)
    }

    fn check_record(&self, index: usize, rec: &PatientRecord) -> Result<(), DataError> {
        if rec.measurements.len() != self.schema.n_sensors() {
            return Err(DataError::NonConforming {
                index,
                reason: format!(
                    "{} measurements, schema has {} sensors",
                    rec.measurements.len(),
                    self.schema.n_sensors()
                ),
            });
        }
        if rec.label >= self.schema.n_labels() {
            return Err(DataError::NonConforming {
                index,
                reason: format!("label {} out of range", rec.label),
            });
        }
        if let Some(pos) = rec.measurements.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonConforming {
                index,
                reason: format!("non-finite value in `{}`", self.schema.sensor_names[pos]),
            });
        }
        Ok(())
    }

    pub fn empty(schema: SensorSchema) -> Self {
        Self {
            schema,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        self.schema.n_sensors()
    }

    pub fn n_labels(&self) -> usize {
        self.schema.n_labels()
    }

    /// Number of records carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_labels()];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Copy of the dataset holding only the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Per-sensor (min, max) over all records, or `None` for an empty dataset.
    pub fn sensor_bounds(&self) -> Option<Vec<(f64, f64)>> {
        let first = self.records.first()?;
        let mut bounds: Vec<(f64, f64)> = first.measurements.iter().map(|&v| (v, v)).collect();
        for r in &self.records[1..] {
            for (b, &v) in bounds.iter_mut().zip(&r.measurements) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Some(bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_duplicates_and_small_sizes() {
        let s = SensorSchema::new(vec!["a".into(), "a".into()], vec!["x".into(), "y".into()]);
        assert!(matches!(s, Err(DataError::InvalidSchema(_))));
        let s = SensorSchema::new(vec!["a".into()], vec!["x".into(), "y".into()]);
        assert!(s.is_err());
        let s = SensorSchema::new(vec!["a".into(), "b".into()], vec!["x".into()]);
        assert!(s.is_err());
    }

    #[test]
    fn dataset_checks_records() {
        let schema = SensorSchema::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into()])
            .unwrap();
        assert!(Dataset::new(schema.clone(), vec![PatientRecord::new(vec![1.0], 0)]).is_err());
        assert!(Dataset::new(schema.clone(), vec![PatientRecord::new(vec![1.0, 2.0], 2)]).is_err());
        assert!(
            Dataset::new(schema.clone(), vec![PatientRecord::new(vec![1.0, f64::NAN], 0)])
                .is_err()
        );
        let ds = Dataset::new(schema, vec![PatientRecord::new(vec![1.0, 2.0], 1)]).unwrap();
        assert_eq!(ds.label_counts(), vec![0, 1]);
        assert_eq!(ds.sensor_bounds().unwrap(), vec![(1.0, 1.0), (2.0, 2.0)]);
    }
}
