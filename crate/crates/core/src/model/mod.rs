//! Driver→KPI predictors: ridge-stabilized linear regression for continuous
//! KPIs and a random-forest classifier for discrete (0/1) KPIs, with k-fold
//! cross-validated confidence.

pub mod forest;
pub mod linear;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisFrame, Dataset, KpiKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, STREAM_CV_FOLD, STREAM_CV_SHUFFLE};

pub use forest::{gini, DecisionTree, Forest, Node, NodeKind};
pub use linear::LinearModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// `None` means ⌈√d⌉.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_leaf: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestHyper {
    pub fn effective_max_features(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearHyper {
    pub ridge_lambda: f64,
}

impl Default for LinearHyper {
    fn default() -> Self {
        Self { ridge_lambda: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub forest: ForestHyper,
    pub linear: LinearHyper,
    pub cv_folds: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            forest: ForestHyper::default(),
            linear: LinearHyper::default(),
            cv_folds: 5,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.forest.n_trees < 1 {
            return Err(Error::InvalidHyperparameters("n_trees must be at least 1".into()));
        }
        if self.forest.max_depth < 1 {
            return Err(Error::InvalidHyperparameters("max_depth must be at least 1".into()));
        }
        if self.forest.max_features == Some(0) {
            return Err(Error::InvalidHyperparameters("max_features must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidHyperparameters("cv_folds must be at least 2".into()));
        }
        if !(self.linear.ridge_lambda >= 0.0 && self.linear.ridge_lambda.is_finite()) {
            return Err(Error::InvalidHyperparameters(
                "ridge_lambda must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest,
}

impl ModelKind {
    pub fn for_kpi(kind: KpiKind) -> Self {
        match kind {
            KpiKind::Continuous => ModelKind::Linear,
            KpiKind::Discrete => ModelKind::Forest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParameters {
    Linear(LinearModel),
    Forest(Forest),
}

/// A fitted predictor together with the frame it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub frame: AnalysisFrame,
    pub parameters: ModelParameters,
    pub seed: u64,
    /// Mean k-fold CV score: R² (linear) or accuracy (forest).
    pub confidence: f64,
    pub hyperparameters: Hyperparameters,
}

/// Prediction for a single row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    /// KPI value (continuous) or class-1 probability (discrete).
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<u8>,
}

impl TrainedModel {
    pub fn driver_count(&self) -> usize {
        self.frame.driver_count()
    }

    /// Linear: KPI value per row. Forest: class-1 probability per row.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.driver_count();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::WidthMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Ok(match &self.parameters {
            ModelParameters::Linear(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
            ModelParameters::Forest(f) => rows.iter().map(|r| f.proba(r)).collect(),
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<RowPrediction> {
        let value = self.predict(std::slice::from_ref(&row.to_vec()))?[0];
        Ok(RowPrediction {
            value,
            class: match self.kind {
                ModelKind::Linear => None,
                ModelKind::Forest => Some(classify(value)),
            },
        })
    }

    /// Aggregate KPI: mean prediction (continuous) or the percentage of rows
    /// predicted as class 1 (discrete).
    pub fn kpi_value(&self, rows: &[Vec<f64>]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::Invalid("KPI of an empty row set is undefined".into()));
        }
        let preds = self.predict(rows)?;
        Ok(aggregate_kpi(self.kind, &preds))
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.parameters {
            ModelParameters::Linear(m) => Some(m),
            ModelParameters::Forest(_) => None,
        }
    }

    pub fn forest(&self) -> Option<&Forest> {
        match &self.parameters {
            ModelParameters::Forest(f) => Some(f),
            ModelParameters::Linear(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a model export.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text).map_err(Error::malformed_json)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.driver_count();
        if self.frame.driver_kinds.len() != d {
            return Err(Error::Invalid("driver kinds do not match drivers".into()));
        }
        match (&self.kind, &self.parameters) {
            (ModelKind::Linear, ModelParameters::Linear(m)) => {
                if m.coefficients.len() != d {
                    return Err(Error::Invalid(format!(
                        "{} coefficients for {d} drivers",
                        m.coefficients.len()
                    )));
                }
                Ok(())
            }
            (ModelKind::Forest, ModelParameters::Forest(f)) => f.validate(d),
            _ => Err(Error::Invalid("model kind does not match its parameters".into())),
        }
    }

    /// Fails unless `frame` selects the same KPI and drivers this model was trained on.
    pub fn check_frame(&self, frame: &AnalysisFrame) -> Result<()> {
        if frame.kpi != self.frame.kpi || frame.drivers != self.frame.drivers {
            return Err(Error::FrameMismatch(format!(
                "model predicts `{}` from {:?}",
                self.frame.kpi, self.frame.drivers
            )));
        }
        Ok(())
    }
}

/// Ties at probability exactly 0.5 classify as 1.
pub fn classify(probability: f64) -> u8 {
    u8::from(probability >= 0.5)
}

pub fn aggregate_kpi(kind: ModelKind, predictions: &[f64]) -> f64 {
    let n = predictions.len() as f64;
    match kind {
        ModelKind::Linear => predictions.iter().sum::<f64>() / n,
        ModelKind::Forest => {
            let ones = predictions.iter().filter(|&&p| classify(p) == 1).count();
            100.0 * ones as f64 / n
        }
    }
}

/// KPI aggregate of observed values: mean, or percentage of ones.
pub fn ground_truth_kpi(kind: KpiKind, values: &[f64]) -> f64 {
    let n = values.len() as f64;
    match kind {
        KpiKind::Continuous => values.iter().sum::<f64>() / n,
        KpiKind::Discrete => 100.0 * values.iter().filter(|&&v| v == 1.0).count() as f64 / n,
    }
}

/// Trains on the frame's columns of `dataset`.
pub fn train(dataset: &Dataset, frame: &AnalysisFrame, hyper: &Hyperparameters, seed: u64) -> Result<TrainedModel> {
    if frame.dataset_ref != dataset.id() {
        return Err(Error::FrameMismatch(format!(
            "frame refers to dataset {}, got {}",
            frame.dataset_ref,
            dataset.id()
        )));
    }
    let rows = frame.driver_rows(dataset)?;
    let y = frame.kpi_values(dataset)?;
    train_rows(frame, &rows, &y, hyper, seed)
}

pub fn train_rows(
    frame: &AnalysisFrame,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<TrainedModel> {
    hyper.validate()?;
    let needed = 2 * hyper.cv_folds;
    if rows.len() < needed {
        return Err(Error::TooFewRows {
            needed,
            have: rows.len(),
        });
    }
    if rows.len() != y.len() {
        return Err(Error::Invalid("row and KPI counts differ".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != frame.driver_count()) {
        return Err(Error::WidthMismatch {
            expected: frame.driver_count(),
            found: bad.len(),
        });
    }
    let kind = ModelKind::for_kpi(frame.kpi_kind);
    if kind == ModelKind::Forest {
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == y.len() {
            return Err(Error::SingleClass(frame.kpi.clone()));
        }
    }
    let parameters = fit(kind, rows, y, hyper, seed)?;
    let confidence = cross_validate(kind, rows, y, hyper, seed)?;
    Ok(TrainedModel {
        kind,
        frame: frame.clone(),
        parameters,
        seed,
        confidence,
        hyperparameters: hyper.clone(),
    })
}

pub(crate) fn fit(
    kind: ModelKind,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<ModelParameters> {
    Ok(match kind {
        ModelKind::Linear => ModelParameters::Linear(linear::fit_ridge(rows, y, hyper.linear.ridge_lambda)?),
        ModelKind::Forest => {
            let labels: Vec<u8> = y.iter().map(|&v| u8::from(v == 1.0)).collect();
            ModelParameters::Forest(forest::fit_forest(rows, &labels, &hyper.forest, seed))
        }
    })
}

fn predict_params(params: &ModelParameters, rows: &[Vec<f64>]) -> Vec<f64> {
    match params {
        ModelParameters::Linear(m) => rows.iter().map(|r| m.predict_row(r)).collect(),
        ModelParameters::Forest(f) => rows.iter().map(|r| f.proba(r)).collect(),
    }
}

/// Score of held-out predictions: R² or accuracy.
pub fn score(kind: ModelKind, y: &[f64], predictions: &[f64]) -> f64 {
    match kind {
        ModelKind::Linear => linear::r_squared(y, predictions),
        ModelKind::Forest => {
            let hits = y
                .iter()
                .zip(predictions)
                .filter(|(t, p)| f64::from(classify(**p)) == **t)
                .count();
            hits as f64 / y.len() as f64
        }
    }
}

/// Fold index of each row: a seeded shuffle dealt round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed, STREAM_CV_SHUFFLE));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Mean k-fold score, each fold trained with a seed derived from `seed`.
pub fn cross_validate(
    kind: ModelKind,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<f64> {
    cross_validate_with(kind, rows, y, hyper, seed, |params, test_rows| {
        predict_params(params, test_rows)
    })
}

/// Cross-validation with a custom held-out predictor; used by the Shapley
/// mean-imputation path.
pub(crate) fn cross_validate_with<F>(
    kind: ModelKind,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    seed: u64,
    predict: F,
) -> Result<f64>
where
    F: Fn(&ModelParameters, &[Vec<f64>]) -> Vec<f64>,
{
    let k = hyper.cv_folds;
    let folds = fold_assignment(rows.len(), k, seed);
    let fold_seed = derive_seed(seed, STREAM_CV_FOLD);
    let mut total = 0.0;
    for f in 0..k {
        let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
        for (i, &fi) in folds.iter().enumerate() {
            if fi == f {
                test_x.push(rows[i].clone());
                test_y.push(y[i]);
            } else {
                train_x.push(rows[i].clone());
                train_y.push(y[i]);
            }
        }
        let params = fit(kind, &train_x, &train_y, hyper, derive_seed(fold_seed, f as u64))?;
        total += score(kind, &test_y, &predict(&params, &test_x));
    }
    Ok(total / k as f64)
}
