use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, PatientRecord, SensorSchema};

/// Significant digits kept when measurements are written to CSV.
pub const CSV_SIGNIFICANT_DIGITS: usize = 6;

/// Optional JSON file stored next to a CSV (`<stem>.schema.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSidecar {
    pub version: u32,
    pub label_column: String,
    pub schema: SensorSchema,
}

impl SchemaSidecar {
    pub fn path_for(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("schema.json")
    }
}

/// Rounds to [`CSV_SIGNIFICANT_DIGITS`] significant digits.
pub(crate) fn round_significant(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", CSV_SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .unwrap_or(v)
}

/// Text form of a measurement: 6 significant digits, shortest round-trip.
pub fn format_measurement(v: f64) -> String {
    let r = round_significant(v);
    if r == 0.0 {
        return "0".to_string();
    }
    format!("{r}")
}

/// Loads a dataset from CSV. Label names come from the schema sidecar when
/// one exists next to the file, otherwise they are synthesized as `label_<id>`.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let sidecar_path = SchemaSidecar::path_for(path);
    let label_names = if sidecar_path.exists() {
        let sidecar: SchemaSidecar = serde_json::from_reader(File::open(&sidecar_path)?)?;
        Some(sidecar.schema.label_names)
    } else {
        None
    };
    load_csv_with_schema(File::open(path)?, label_column, label_names)
}

/// Reads CSV text from any reader. `label_names`, when given, fixes the label set.
pub fn load_csv_with_schema<R: Read>(
    reader: R,
    label_column: &str,
    label_names: Option<Vec<String>>,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(DataError::MissingHeader),
    };
    if header.iter().all(|h| h.is_empty()) {
        return Err(DataError::MissingHeader);
    }
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let label_idx = columns
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| DataError::UnknownLabelColumn(label_column.to_string()))?;
    let sensor_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, c)| c.clone())
        .collect();

    let mut records = Vec::new();
    let mut max_label = 0usize;
    for (i, row) in rows.enumerate() {
        let row_no = i + 1;
        let row = row?;
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != columns.len() {
            return Err(DataError::MissingField {
                row: row_no,
                expected: columns.len(),
                found: row.len(),
            });
        }
        let mut measurements = Vec::with_capacity(sensor_names.len());
        let mut label = 0usize;
        for (c, field) in row.iter().enumerate() {
            let parse_err = || DataError::ParseError {
                row: row_no,
                column: columns[c].clone(),
                value: field.to_string(),
            };
            if c == label_idx {
                label = field.parse().map_err(|_| parse_err())?;
            } else {
                let v: f64 = field.parse().map_err(|_| parse_err())?;
                if !v.is_finite() {
                    return Err(parse_err());
                }
                measurements.push(v);
            }
        }
        max_label = max_label.max(label);
        records.push(PatientRecord::new(measurements, label));
    }

    let label_names = label_names
        .unwrap_or_else(|| (0..=max_label.max(1)).map(|l| format!("label_{l}")).collect());
    let schema = SensorSchema::new(sensor_names, label_names)?;
    Dataset::new(schema, records)
}

/// Writes the dataset as CSV (sensor columns then `label_column`) and the
/// schema sidecar next to it.
pub fn save_csv(
    dataset: &Dataset,
    path: impl AsRef<Path>,
    label_column: &str,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = File::create(path)?;
    write_csv(dataset, &mut out, label_column)?;
    let sidecar = SchemaSidecar {
        version: 1,
        label_column: label_column.to_string(),
        schema: dataset.schema.clone(),
    };
    let mut f = File::create(SchemaSidecar::path_for(path))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub(crate) fn write_csv<W: Write>(
    dataset: &Dataset,
    out: W,
    label_column: &str,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = dataset.schema.sensor_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for rec in &dataset.records {
        let mut fields: Vec<String> = rec.measurements.iter().map(|&v| format_measurement(v)).collect();
        fields.push(rec.label.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset, DataError> {
        load_csv_with_schema(text.as_bytes(), "label", None)
    }

    #[test]
    fn parses_case_study_row() {
        let ds = load("hr,sys,dia,spo2,label\n122.94,75.98,153.56,93.2,2\n").unwrap();
        assert_eq!(ds.schema.sensor_names, vec!["hr", "sys", "dia", "spo2"]);
        assert_eq!(ds.records[0].measurements, vec![122.94, 75.98, 153.56, 93.2]);
        assert_eq!(ds.records[0].label, 2);
        assert_eq!(ds.n_labels(), 3);
    }

    #[test]
    fn empty_input_is_missing_header() {
        assert!(matches!(load(""), Err(DataError::MissingHeader)));
    }

    #[test]
    fn non_numeric_measurement_reports_row_and_column() {
        match load("hr,sys,dia,spo2,label\nx,75.98,153.56,93.2,2\n") {
            Err(DataError::ParseError { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "hr");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_column() {
        let r = load_csv_with_schema("a,b,c\n1,2,0\n".as_bytes(), "status", None);
        assert!(matches!(r, Err(DataError::UnknownLabelColumn(_))));
    }

    #[test]
    fn missing_field_is_rejected() {
        assert!(matches!(
            load("a,b,label\n1,0\n"),
            Err(DataError::MissingField { row: 1, .. })
        ));
    }

    #[test]
    fn label_column_may_be_anywhere() {
        let ds = load("label,a,b\n1,2.5,3.5\n").unwrap();
        assert_eq!(ds.records[0].measurements, vec![2.5, 3.5]);
        assert_eq!(ds.records[0].label, 1);
    }

    #[test]
    fn formatting_keeps_six_significant_digits() {
        assert_eq!(format_measurement(122.943512), "122.944");
        assert_eq!(format_measurement(0.0123456789), "0.0123457");
        assert_eq!(format_measurement(93.2), "93.2");
        assert_eq!(format_measurement(0.0), "0");
        assert_eq!(format_measurement(-5.5), "-5.5");
    }
}
