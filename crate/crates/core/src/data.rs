//! Measurement records and datasets, with a bit-stable CSV format.
//!
//! CSV layout: one header row, columns in schema order (options, then events,
//! then objectives) plus a trailing `provenance` column with values `obs` or
//! `do:<opt1;opt2>`. Floats are written in shortest round-trip form, so
//! save followed by load reproduces a dataset exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::space::{Configuration, ConfigurationSpace, SpaceError, Value};
use crate::stats::lower_median;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Space(#[from] SpaceError),
    #[error("header mismatch: expected column {index} to be `{expected}`, found `{found}`")]
    HeaderMismatch { index: usize, expected: String, found: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {detail}")]
    Cell { row: usize, column: String, detail: String },
    #[error("row {row}: domain violation: {detail}")]
    DomainViolation { row: usize, detail: String },
    #[error("record {index} does not validate against the dataset space: {detail}")]
    InvalidRecord { index: usize, detail: String },
}

/// How a measurement was obtained: passively observed, or forced by
/// intervening on the listed options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Observational,
    Interventional(Vec<String>),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Observational => write!(f, "obs"),
            Provenance::Interventional(opts) => write!(f, "do:{}", opts.join(";")),
        }
    }
}

impl Provenance {
    pub fn parse(text: &str) -> Result<Provenance, String> {
        if text == "obs" {
            Ok(Provenance::Observational)
        } else if let Some(rest) = text.strip_prefix("do:") {
            let opts: Vec<String> = rest
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.to_string())
                .collect();
            Ok(Provenance::Interventional(opts))
        } else {
            Err(format!("expected `obs` or `do:<opts>`, got `{text}`"))
        }
    }
}

/// One evaluated configuration with its event readings and objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub config: Configuration,
    pub events: BTreeMap<String, f64>,
    pub objectives: BTreeMap<String, f64>,
    pub provenance: Provenance,
    pub repeat_index: u32,
}

impl MeasurementRecord {
    /// Penalized records carry a +inf objective sentinel (constraint breach
    /// or failed evaluation).
    pub fn is_penalized(&self) -> bool {
        self.objectives.values().any(|v| v.is_infinite())
    }
}

/// An ordered collection of records from one environment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub space: ConfigurationSpace,
    pub records: Vec<MeasurementRecord>,
    pub environment_id: String,
}

impl Dataset {
    pub fn new(space: ConfigurationSpace, environment_id: &str) -> Self {
        Dataset { space, records: Vec::new(), environment_id: environment_id.into() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append a record after validating its configuration.
    pub fn push(&mut self, record: MeasurementRecord) -> Result<(), DataError> {
        let violations = self.space.validate(&record.config);
        if !violations.is_empty() {
            return Err(DataError::InvalidRecord {
                index: self.records.len(),
                detail: violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
            });
        }
        self.records.push(record);
        Ok(())
    }

    /// Objective values by name, in record order.
    pub fn objective_values(&self, name: &str) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.objectives.get(name).copied().unwrap_or(f64::NAN))
            .collect()
    }

    /// Records that are not penalty sentinels.
    pub fn feasible_records(&self) -> Vec<&MeasurementRecord> {
        self.records.iter().filter(|r| !r.is_penalized()).collect()
    }

    /// Collapse repeated measurements of the same configuration into one
    /// record per configuration with componentwise lower medians. Provenance
    /// is kept when uniform within a group, otherwise reset to observational.
    pub fn median_of_repeats(&self) -> Dataset {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<&MeasurementRecord>> = BTreeMap::new();
        for rec in &self.records {
            let key = rec.config.canonical_key();
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(rec);
        }
        let mut out = Dataset::new(self.space.clone(), &self.environment_id);
        for key in order {
            let group = &groups[&key];
            let first = group[0];
            let collapse = |field: fn(&MeasurementRecord) -> &BTreeMap<String, f64>| {
                let mut merged: BTreeMap<String, f64> = BTreeMap::new();
                for name in field(first).keys() {
                    let vals: Vec<f64> =
                        group.iter().filter_map(|r| field(r).get(name).copied()).collect();
                    merged.insert(name.clone(), lower_median(&vals));
                }
                merged
            };
            let provenance = if group.iter().all(|r| r.provenance == first.provenance) {
                first.provenance.clone()
            } else {
                Provenance::Observational
            };
            out.records.push(MeasurementRecord {
                config: first.config.clone(),
                events: collapse(|r| &r.events),
                objectives: collapse(|r| &r.objectives),
                provenance,
                repeat_index: 0,
            });
        }
        out
    }

    fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.space.options.iter().map(|o| o.name.clone()).collect();
        cols.extend(self.space.events.iter().cloned());
        cols.extend(self.space.objectives.iter().cloned());
        cols.push("provenance".into());
        cols
    }

    /// Write the CSV format described in the module docs.
    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for rec in &self.records {
            let mut row: Vec<String> = Vec::new();
            for opt in &self.space.options {
                row.push(rec.config.values.get(&opt.name).map(|v| v.to_string()).unwrap_or_default());
            }
            for name in &self.space.events {
                row.push(rec.events.get(name).map(|v| v.to_string()).unwrap_or_default());
            }
            for name in &self.space.objectives {
                row.push(rec.objectives.get(name).map(|v| v.to_string()).unwrap_or_default());
            }
            row.push(rec.provenance.to_string());
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a dataset from CSV plus its schema file. The header must match
    /// the schema column-for-column; the `provenance` column is optional and
    /// defaults to observational.
    pub fn load_csv(path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
        let space = ConfigurationSpace::from_schema_file(schema_path)?;
        Self::load_csv_with_space(path, space)
    }

    pub fn load_csv_with_space(path: &Path, space: ConfigurationSpace) -> Result<Dataset, DataError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header: Vec<String> =
            reader.headers()?.iter().map(|s| s.to_string()).collect();

        let mut expected: Vec<String> = space.options.iter().map(|o| o.name.clone()).collect();
        expected.extend(space.events.iter().cloned());
        expected.extend(space.objectives.iter().cloned());

        let has_provenance = header.len() == expected.len() + 1;
        if !has_provenance && header.len() != expected.len() {
            return Err(DataError::MissingColumn(
                expected.get(header.len()).cloned().unwrap_or_else(|| "provenance".into()),
            ));
        }
        for (i, want) in expected.iter().enumerate() {
            if header[i] != *want {
                return Err(DataError::HeaderMismatch {
                    index: i,
                    expected: want.clone(),
                    found: header[i].clone(),
                });
            }
        }
        if has_provenance && header[expected.len()] != "provenance" {
            return Err(DataError::HeaderMismatch {
                index: expected.len(),
                expected: "provenance".into(),
                found: header[expected.len()].clone(),
            });
        }

        let env_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
        let mut dataset = Dataset::new(space, &env_id);
        let mut repeat_counts: BTreeMap<String, u32> = BTreeMap::new();

        for (row_idx, row) in reader.records().enumerate() {
            let row = row?;
            let row_no = row_idx + 2; // 1-based, after header
            let mut col = 0usize;
            let mut cfg = Configuration::new();
            for opt in &dataset.space.options {
                let cell = row.get(col).unwrap_or("");
                let v = Value::parse_for(opt, cell).map_err(|detail| DataError::Cell {
                    row: row_no,
                    column: opt.name.clone(),
                    detail,
                })?;
                cfg.set(&opt.name, v);
                col += 1;
            }
            let violations = dataset.space.validate(&cfg);
            if !violations.is_empty() {
                return Err(DataError::DomainViolation {
                    row: row_no,
                    detail: violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
                });
            }
            let parse_f64_columns = |names: &[String], col: &mut usize| -> Result<BTreeMap<String, f64>, DataError> {
                let mut out = BTreeMap::new();
                for name in names {
                    let cell = row.get(*col).unwrap_or("");
                    let v: f64 = cell.parse().map_err(|_| DataError::Cell {
                        row: row_no,
                        column: name.clone(),
                        detail: format!("expected real, got `{cell}`"),
                    })?;
                    out.insert(name.clone(), v);
                    *col += 1;
                }
                Ok(out)
            };
            let events = parse_f64_columns(&dataset.space.events.clone(), &mut col)?;
            let objectives = parse_f64_columns(&dataset.space.objectives.clone(), &mut col)?;
            let provenance = if has_provenance {
                let cell = row.get(col).unwrap_or("");
                Provenance::parse(cell).map_err(|detail| DataError::Cell {
                    row: row_no,
                    column: "provenance".into(),
                    detail,
                })?
            } else {
                Provenance::Observational
            };
            let key = cfg.canonical_key();
            let repeat_index = *repeat_counts
                .entry(key)
                .and_modify(|c| *c += 1)
                .or_insert(0);
            dataset.records.push(MeasurementRecord {
                config: cfg,
                events,
                objectives,
                provenance,
                repeat_index,
            });
        }
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::OptionDomain;

    fn space() -> ConfigurationSpace {
        ConfigurationSpace::new(
            vec![
                OptionDomain::integer("i", 0, 4, 2).unwrap(),
                OptionDomain::real("r", 0.0, 1.0).unwrap(),
            ],
            vec!["ipc".into()],
            vec!["latency".into()],
        )
        .unwrap()
    }

    fn record(i: i64, r: f64, ipc: f64, lat: f64, rep: u32) -> MeasurementRecord {
        MeasurementRecord {
            config: Configuration::new().with("i", Value::Int(i)).with("r", Value::Real(r)),
            events: BTreeMap::from([("ipc".to_string(), ipc)]),
            objectives: BTreeMap::from([("latency".to_string(), lat)]),
            provenance: Provenance::Observational,
            repeat_index: rep,
        }
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let dir = std::env::temp_dir().join("cameo_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut ds = Dataset::new(space(), "src");
        ds.push(record(0, 0.123456789012345678, 1.5, 10.0, 0)).unwrap();
        ds.push(record(2, 1.0 / 3.0, 0.5, 20.25, 0)).unwrap();
        ds.records[1].provenance = Provenance::Interventional(vec!["i".into()]);
        let csv_path = dir.join("roundtrip.csv");
        ds.save_csv(&csv_path).unwrap();
        let back = Dataset::load_csv_with_space(&csv_path, space()).unwrap();
        assert_eq!(ds.records, back.records);
        // save again and compare bytes
        let csv_path2 = dir.join("roundtrip2.csv");
        back.save_csv(&csv_path2).unwrap();
        assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(&csv_path2).unwrap());
    }

    #[test]
    fn load_rejects_header_mismatch() {
        let dir = std::env::temp_dir().join("cameo_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad_header.csv");
        std::fs::write(&p, "i,r,ipc,wrong,provenance\n0,0.5,1.0,2.0,obs\n").unwrap();
        let err = Dataset::load_csv_with_space(&p, space()).unwrap_err();
        assert!(matches!(err, DataError::HeaderMismatch { expected, .. } if expected == "latency"));
    }

    #[test]
    fn load_rejects_bad_cell_type() {
        let dir = std::env::temp_dir().join("cameo_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad_cell.csv");
        std::fs::write(&p, "i,r,ipc,latency,provenance\n2.5,0.5,1.0,2.0,obs\n").unwrap();
        let err = Dataset::load_csv_with_space(&p, space()).unwrap_err();
        assert!(matches!(err, DataError::Cell { row: 2, ref column, .. } if column == "i"));
    }

    #[test]
    fn load_rejects_domain_violation() {
        let dir = std::env::temp_dir().join("cameo_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad_domain.csv");
        std::fs::write(&p, "i,r,ipc,latency,provenance\n3,0.5,1.0,2.0,obs\n").unwrap();
        let err = Dataset::load_csv_with_space(&p, space()).unwrap_err();
        assert!(matches!(err, DataError::DomainViolation { row: 2, .. }));
    }

    #[test]
    fn median_of_repeats_collapses_groups() {
        let mut ds = Dataset::new(space(), "src");
        for (rep, lat) in [5.0, 3.0, 9.0, 1.0, 7.0].iter().enumerate() {
            ds.push(record(0, 0.5, 1.0, *lat, rep as u32)).unwrap();
        }
        for (rep, lat) in [4.0, 2.0].iter().enumerate() {
            ds.push(record(2, 0.5, 1.0, *lat, rep as u32)).unwrap();
        }
        let collapsed = ds.median_of_repeats();
        assert_eq!(collapsed.len(), 2);
        assert_eq!(collapsed.records[0].objectives["latency"], 5.0);
        assert_eq!(collapsed.records[1].objectives["latency"], 2.0);
    }

    #[test]
    fn median_of_repeats_is_idempotent() {
        let mut ds = Dataset::new(space(), "src");
        for (rep, lat) in [5.0, 3.0, 9.0].iter().enumerate() {
            ds.push(record(0, 0.25, rep as f64, *lat, rep as u32)).unwrap();
        }
        let once = ds.median_of_repeats();
        let twice = once.median_of_repeats();
        assert_eq!(once.records, twice.records);
    }

    #[test]
    fn provenance_text_round_trip() {
        for p in [
            Provenance::Observational,
            Provenance::Interventional(vec!["a".into(), "b".into()]),
        ] {
            assert_eq!(Provenance::parse(&p.to_string()).unwrap(), p);
        }
        assert!(Provenance::parse("nonsense").is_err());
    }

    #[test]
    fn penalized_records_are_flagged() {
        let mut r = record(0, 0.5, 1.0, f64::INFINITY, 0);
        assert!(r.is_penalized());
        r.objectives.insert("latency".into(), 3.0);
        assert!(!r.is_penalized());
    }
}
