//! Wire types shared by the HTTP service and the command line, so both emit
//! the same JSON for the same inputs.

mod finite;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{make_frame, AnalysisFrame, ColumnSchema, Dataset, KpiKind};
use crate::error::{Error, Result};
use crate::goalseek::{optimize_goal_with_limits, GoalResult, GoalSpec, RunLimits};
use crate::importance::{importance_report, ImportanceReport, ShapleyOptions, DEFAULT_SHAPLEY_PERMUTATIONS};
use crate::model::{ground_truth_kpi, train, Hyperparameters, ModelKind, TrainedModel};
use crate::sensitivity::{
    comparison_sweep, row_sensitivity, run_sensitivity, ComparisonCurve, PerturbationSpec, RowSensitivity,
    SensitivityResult, SweepSpec,
};
use crate::synth::{GroundTruth, UseCase};

pub use finite::first_non_finite;

/// Pretty JSON, refusing NaN and infinities anywhere in the value.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    if let Some(path) = first_non_finite(value) {
        return Err(Error::NonFinite(path));
    }
    Ok(serde_json::to_string_pretty(value)?)
}

/// Error body: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>, details: Value) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            details,
        }
    }
}

fn finite_or_string(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        let details = match e {
            Error::RaggedRow { row, expected, found } => json!({"row": row, "expected": expected, "found": found}),
            Error::Csv { row, .. } => json!({"row": row}),
            Error::TooFewRows { needed, have } => json!({"needed": needed, "have": have}),
            Error::WidthMismatch { expected, found } => json!({"expected": expected, "found": found}),
            Error::RowOutOfRange { index, len } => json!({"index": index, "row_count": len}),
            Error::ConstraintViolation { driver, value, lo, hi } => json!({
                "driver": driver,
                "value": finite_or_string(*value),
                "lo": finite_or_string(*lo),
                "hi": finite_or_string(*hi),
            }),
            Error::DuplicateColumn(c)
            | Error::UnknownColumn(c)
            | Error::CategoricalDriver(c)
            | Error::CategoricalKpi(c)
            | Error::KpiAmongDrivers(c)
            | Error::DuplicateDriver(c)
            | Error::SingleClass(c)
            | Error::PercentageOnBinary(c) => json!({"column": c}),
            Error::NonFinite(field) => json!({"field": field}),
            _ => json!({}),
        };
        ErrorBody::new(e.code(), e.to_string(), details)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub schema: Vec<ColumnSchema>,
    pub row_count: usize,
    pub dropped_rows: usize,
}

impl From<&Dataset> for DatasetSummary {
    fn from(ds: &Dataset) -> Self {
        Self {
            dataset_id: ds.id().to_string(),
            schema: ds.columns().to_vec(),
            row_count: ds.row_count(),
            dropped_rows: ds.dropped_rows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRequest {
    pub use_case: UseCase,
    pub n_rows: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    #[serde(flatten)]
    pub dataset: DatasetSummary,
    pub ground_truth: GroundTruth,
}

/// One page of table rows, rendered as the original cell text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowsPage {
    pub dataset_id: String,
    pub columns: Vec<String>,
    pub offset: usize,
    pub total: usize,
    pub rows: Vec<Vec<String>>,
}

pub fn rows_page(ds: &Dataset, offset: usize, limit: usize) -> RowsPage {
    let end = offset.saturating_add(limit).min(ds.row_count());
    let start = offset.min(end);
    RowsPage {
        dataset_id: ds.id().to_string(),
        columns: ds.columns().iter().map(|c| c.name.clone()).collect(),
        offset: start,
        total: ds.row_count(),
        rows: (start..end).map(|i| ds.row_strings(i)).collect(),
    }
}

fn default_permutations() -> usize {
    DEFAULT_SHAPLEY_PERMUTATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub dataset_id: String,
    pub kpi: String,
    /// Omitted: every numeric or binary column except the KPI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivers: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default = "default_permutations")]
    pub shapley_permutations: usize,
}

impl SessionRequest {
    pub fn new(dataset_id: &str, kpi: &str) -> Self {
        Self {
            dataset_id: dataset_id.to_string(),
            kpi: kpi.to_string(),
            drivers: None,
            seed: 0,
            hyper: Hyperparameters::default(),
            shapley_permutations: DEFAULT_SHAPLEY_PERMUTATIONS,
        }
    }

    /// Content-derived id: identical requests name the same session.
    pub fn session_id(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        let digest = Sha256::digest(&canonical);
        format!("ss-{}", &hex::encode(digest)[..16])
    }
}

/// A trained model bound to its data: the state behind every analysis call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Analysis {
    pub dataset_id: String,
    pub frame: AnalysisFrame,
    pub model: TrainedModel,
    pub importance: ImportanceReport,
    pub baseline_kpi: f64,
    pub ground_truth_kpi: f64,
    #[serde(skip)]
    rows: Vec<Vec<f64>>,
}

impl Analysis {
    /// Trains the model for `request` and computes the importance report.
    pub fn train(dataset: &Dataset, request: &SessionRequest) -> Result<Self> {
        if request.dataset_id != dataset.id() {
            return Err(Error::FrameMismatch(format!(
                "request names dataset {}, got {}",
                request.dataset_id,
                dataset.id()
            )));
        }
        let frame = make_frame(dataset, &request.kpi, request.drivers.as_deref())?;
        let model = train(dataset, &frame, &request.hyper, request.seed)?;
        Self::from_model(dataset, model, request.shapley_permutations)
    }

    /// Binds an exported model to its dataset and recomputes the report.
    pub fn from_model(dataset: &Dataset, model: TrainedModel, shapley_permutations: usize) -> Result<Self> {
        if shapley_permutations == 0 {
            return Err(Error::Invalid("shapley_permutations must be at least 1".into()));
        }
        let frame = model.frame.clone();
        if frame.dataset_ref != dataset.id() {
            return Err(Error::FrameMismatch(format!(
                "model was trained on dataset {}, got {}",
                frame.dataset_ref,
                dataset.id()
            )));
        }
        let rows = frame.driver_rows(dataset)?;
        let y = frame.kpi_values(dataset)?;
        let options = ShapleyOptions {
            permutations: shapley_permutations,
            ..ShapleyOptions::default()
        };
        let importance = importance_report(&model, &frame, &rows, &y, &options)?;
        let baseline_kpi = model.kpi_value(&rows)?;
        Ok(Self {
            dataset_id: dataset.id().to_string(),
            ground_truth_kpi: ground_truth_kpi(frame.kpi_kind, &y),
            frame,
            model,
            importance,
            baseline_kpi,
            rows,
        })
    }

    /// Reattaches driver rows after deserialization.
    pub fn attach(&mut self, dataset: &Dataset) -> Result<()> {
        if self.dataset_id != dataset.id() {
            return Err(Error::FrameMismatch(format!(
                "analysis belongs to dataset {}, got {}",
                self.dataset_id,
                dataset.id()
            )));
        }
        self.rows = self.frame.driver_rows(dataset)?;
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn summary(&self, session_id: &str) -> SessionSummary {
        SessionSummary {
            session_id: session_id.to_string(),
            dataset_id: self.dataset_id.clone(),
            kpi: self.frame.kpi.clone(),
            kpi_kind: self.frame.kpi_kind,
            model_kind: self.model.kind,
            drivers: self.frame.drivers.clone(),
            confidence: self.model.confidence,
            baseline_kpi: self.baseline_kpi,
            ground_truth_kpi: self.ground_truth_kpi,
            importance: self.importance.clone(),
        }
    }

    pub fn sensitivity(&self, spec: &PerturbationSpec) -> Result<SensitivityResult> {
        run_sensitivity(&self.model, &self.rows, &self.frame, spec)
    }

    pub fn comparison(&self, sweep: &SweepSpec) -> Result<ComparisonResult> {
        let curves = comparison_sweep(&self.model, &self.rows, &self.frame, sweep)?;
        Ok(ComparisonResult {
            baseline_kpi: self.baseline_kpi,
            curves,
        })
    }

    pub fn row(&self, index: usize, spec: &PerturbationSpec) -> Result<RowSensitivity> {
        row_sensitivity(&self.model, &self.rows, &self.frame, index, spec)
    }

    pub fn goal(&self, spec: &GoalSpec, limits: &RunLimits) -> Result<GoalResult> {
        optimize_goal_with_limits(&self.model, &self.rows, &self.frame, spec, limits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub dataset_id: String,
    pub kpi: String,
    pub kpi_kind: KpiKind,
    pub model_kind: ModelKind,
    pub drivers: Vec<String>,
    pub confidence: f64,
    pub baseline_kpi: f64,
    pub ground_truth_kpi: f64,
    pub importance: ImportanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub baseline_kpi: f64,
    pub curves: Vec<ComparisonCurve>,
}
