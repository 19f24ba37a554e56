//! Tabular ingestion: CSV parsing, schema inference, and KPI/driver selection.
//!
//! Columns are inferred as `numeric`, `binary` (coerced to 0/1) or
//! `categorical_text`. Rows with a missing value in any numeric or binary
//! column are dropped and counted. Text columns stay visible but are never
//! used for modeling.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    CategoricalText,
}

impl ColumnKind {
    pub fn is_modelable(self) -> bool {
        !matches!(self, ColumnKind::CategoricalText)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for fewer than two rows.
    pub std: f64,
    pub distinct_count: usize,
}

impl ColumnStats {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // clamp guards the last-ulp rounding of the sum
        let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let distinct_count = values.iter().map(|v| v.to_bits()).collect::<HashSet<_>>().len();
        Some(Self {
            min,
            max,
            mean,
            std,
            distinct_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Present for numeric and binary columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

/// A parsed, immutable table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    columns: Vec<ColumnSchema>,
    data: Vec<ColumnData>,
    row_count: usize,
    dropped_rows: usize,
}

impl Dataset {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSchema> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Numeric values of a numeric or binary column.
    pub fn numeric_column(&self, name: &str) -> Result<&[f64]> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        match &self.data[idx] {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Text(_) => Err(Error::CategoricalDriver(name.to_string())),
        }
    }

    pub fn column_data(&self, index: usize) -> &ColumnData {
        &self.data[index]
    }

    /// One row rendered as display strings.
    pub fn row_strings(&self, row: usize) -> Vec<String> {
        self.data
            .iter()
            .map(|col| match col {
                ColumnData::Numeric(v) => format_number(v[row]),
                ColumnData::Text(v) => v[row].clone(),
            })
            .collect()
    }
}

fn format_number(v: f64) -> String {
    // `{}` on f64 is the shortest representation that round-trips
    format!("{v}")
}

const MISSING_TOKENS: [&str; 5] = ["", "na", "n/a", "nan", "null"];

fn is_missing(raw: &str) -> bool {
    let t = raw.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Maps the binary vocabulary {0,1,true,false,yes,no} (case-insensitive) to 0/1.
pub fn coerce_binary(raw: &str) -> Option<f64> {
    let t = raw.trim();
    for (token, value) in [("true", 1.0), ("yes", 1.0), ("false", 0.0), ("no", 0.0)] {
        if t.eq_ignore_ascii_case(token) {
            return Some(value);
        }
    }
    match parse_number(t) {
        Some(v) if v == 0.0 || v == 1.0 => Some(v),
        _ => None,
    }
}

fn infer_kind<'a>(values: impl Iterator<Item = &'a str> + Clone) -> ColumnKind {
    let present = values.filter(|v| !is_missing(v));
    let coerced: Option<BTreeSet<u64>> = present.clone().map(|v| coerce_binary(v).map(f64::to_bits)).collect();
    if let Some(set) = coerced {
        if set.len() == 2 {
            return ColumnKind::Binary;
        }
    }
    let mut any = false;
    for v in present {
        if parse_number(v).is_none() {
            return ColumnKind::CategoricalText;
        }
        any = true;
    }
    if any {
        ColumnKind::Numeric
    } else {
        ColumnKind::CategoricalText
    }
}

fn dataset_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    format!("ds-{}", &hex::encode(digest)[..16])
}

/// Parses RFC 4180 CSV with a mandatory header row.
pub fn parse_csv(bytes: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Csv {
        row: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?,
        None => return Err(Error::EmptyInput),
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }

    let width = names.len();
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in records.enumerate() {
        // row numbers are 1-based over data rows
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
        raw_rows.push(rec.iter().map(str::to_string).collect());
    }
    if raw_rows.is_empty() {
        return Err(Error::NoDataRows);
    }

    let kinds: Vec<ColumnKind> = (0..width)
        .map(|c| infer_kind(raw_rows.iter().map(|r| r[c].as_str())))
        .collect();

    let keep: Vec<bool> = raw_rows
        .iter()
        .map(|r| kinds.iter().zip(r).all(|(k, v)| !k.is_modelable() || !is_missing(v)))
        .collect();
    let row_count = keep.iter().filter(|&&k| k).count();
    let dropped_rows = raw_rows.len() - row_count;

    let mut data = Vec::with_capacity(width);
    for (c, kind) in kinds.iter().enumerate() {
        let retained = raw_rows
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r[c].as_str());
        let col = match kind {
            ColumnKind::Numeric => ColumnData::Numeric(retained.map(|v| parse_number(v).unwrap_or(f64::NAN)).collect()),
            ColumnKind::Binary => ColumnData::Numeric(retained.map(|v| coerce_binary(v).unwrap_or(f64::NAN)).collect()),
            ColumnKind::CategoricalText => ColumnData::Text(retained.map(|v| v.trim().to_string()).collect()),
        };
        data.push(col);
    }

    let columns = names
        .into_iter()
        .zip(&kinds)
        .zip(&data)
        .map(|((name, &kind), col)| ColumnSchema {
            name,
            kind,
            stats: match col {
                ColumnData::Numeric(v) => ColumnStats::from_values(v),
                ColumnData::Text(_) => None,
            },
        })
        .collect();

    Ok(Dataset {
        id: dataset_id(bytes),
        columns,
        data,
        row_count,
        dropped_rows,
    })
}

/// Writes retained rows back out as CSV (binary columns as 0/1).
pub fn serialize_csv(dataset: &Dataset) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(dataset.columns.iter().map(|c| c.name.as_str()))
        .expect("writing to a Vec cannot fail");
    for row in 0..dataset.row_count {
        writer
            .write_record(dataset.row_strings(row))
            .expect("writing to a Vec cannot fail");
    }
    writer.into_inner().expect("flushing a Vec cannot fail")
}

/// Builds a dataset from numeric columns. Used by the synthetic generators and tests.
pub fn dataset_from_columns(columns: Vec<(String, ColumnKind, Vec<f64>)>) -> Result<Dataset> {
    let row_count = columns.first().map(|c| c.2.len()).unwrap_or(0);
    let mut seen = HashSet::new();
    for (name, kind, values) in &columns {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
        if values.len() != row_count {
            return Err(Error::RaggedRow {
                row: 0,
                expected: row_count,
                found: values.len(),
            });
        }
        if *kind == ColumnKind::CategoricalText {
            return Err(Error::Invalid(format!("column `{name}` must be numeric or binary")));
        }
    }
    if row_count == 0 {
        return Err(Error::NoDataRows);
    }
    let schemas = columns
        .iter()
        .map(|(name, kind, values)| ColumnSchema {
            name: name.clone(),
            kind: *kind,
            stats: ColumnStats::from_values(values),
        })
        .collect();
    let mut dataset = Dataset {
        id: String::new(),
        columns: schemas,
        data: columns.into_iter().map(|c| ColumnData::Numeric(c.2)).collect(),
        row_count,
        dropped_rows: 0,
    };
    dataset.id = dataset_id(&serialize_csv(&dataset));
    Ok(dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiKind {
    Continuous,
    Discrete,
}

/// Optional floor/ceiling applied to a driver's values after perturbation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
}

impl ValueLimits {
    pub fn apply(&self, v: f64) -> f64 {
        let v = self.floor.map_or(v, |f| v.max(f));
        self.ceiling.map_or(v, |c| v.min(c))
    }
}

/// A KPI column plus the ordered driver columns used to predict it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFrame {
    pub dataset_ref: String,
    pub kpi: String,
    pub kpi_kind: KpiKind,
    pub drivers: Vec<String>,
    pub driver_kinds: Vec<ColumnKind>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub limits: BTreeMap<String, ValueLimits>,
}

impl AnalysisFrame {
    pub fn driver_count(&self) -> usize {
        self.drivers.len()
    }

    pub fn driver_index(&self, name: &str) -> Result<usize> {
        self.drivers
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn is_binary(&self, driver: usize) -> bool {
        self.driver_kinds[driver] == ColumnKind::Binary
    }

    pub fn with_limits(mut self, driver: &str, limits: ValueLimits) -> Result<Self> {
        self.driver_index(driver)?;
        self.limits.insert(driver.to_string(), limits);
        Ok(self)
    }

    /// Row-major driver matrix drawn from `dataset`.
    pub fn driver_rows(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        let cols = self
            .drivers
            .iter()
            .map(|d| dataset.numeric_column(d))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..dataset.row_count())
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect())
    }

    pub fn kpi_values(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset.numeric_column(&self.kpi).map(<[f64]>::to_vec)
    }
}

/// Selects the KPI and drivers. `drivers = None` selects every numeric or
/// binary column other than the KPI.
pub fn make_frame(dataset: &Dataset, kpi: &str, drivers: Option<&[String]>) -> Result<AnalysisFrame> {
    let kpi_col = dataset.column(kpi)?;
    let kpi_kind = match kpi_col.kind {
        ColumnKind::Binary => KpiKind::Discrete,
        ColumnKind::Numeric => KpiKind::Continuous,
        ColumnKind::CategoricalText => return Err(Error::CategoricalKpi(kpi.to_string())),
    };

    let names: Vec<String> = match drivers {
        Some(list) => {
            let mut seen = HashSet::new();
            for d in list {
                if d == kpi {
                    return Err(Error::KpiAmongDrivers(kpi.to_string()));
                }
                if !seen.insert(d.as_str()) {
                    return Err(Error::DuplicateDriver(d.clone()));
                }
                if !dataset.column(d)?.kind.is_modelable() {
                    return Err(Error::CategoricalDriver(d.clone()));
                }
            }
            list.to_vec()
        }
        None => dataset
            .columns()
            .iter()
            .filter(|c| c.name != kpi && c.kind.is_modelable())
            .map(|c| c.name.clone())
            .collect(),
    };
    if names.is_empty() {
        return Err(Error::NoDrivers);
    }
    let driver_kinds = names
        .iter()
        .map(|n| dataset.column(n).map(|c| c.kind))
        .collect::<Result<Vec<_>>>()?;

    Ok(AnalysisFrame {
        dataset_ref: dataset.id().to_string(),
        kpi: kpi.to_string(),
        kpi_kind,
        drivers: names,
        driver_kinds,
        limits: BTreeMap::new(),
    })
}
