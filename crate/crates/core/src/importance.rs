//! Signed, normalized driver importances and their verification against
//! Pearson, Spearman and Shapley measures.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::model::{self, fold_assignment, Hyperparameters, ModelKind, ModelParameters, TrainedModel};
use crate::rng::{derive_seed, seeded, STREAM_CV_FOLD, STREAM_SHAPLEY};

/// A correlation coefficient. Constant or too-short inputs are reported as
/// `value = 0` with `defined = false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub defined: bool,
}

impl Correlation {
    const UNDEFINED: Correlation = Correlation {
        value: 0.0,
        defined: false,
    };
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Correlation {
    if x.len() != y.len() || x.len() < 2 {
        return Correlation::UNDEFINED;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation::UNDEFINED;
    }
    Correlation {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        defined: true,
    }
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Correlation {
    if x.len() != y.len() || x.len() < 2 {
        return Correlation::UNDEFINED;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub driver: String,
    /// In [−1, 1]; the leading driver has magnitude 1.
    pub importance: f64,
    /// Unnormalized signed importance (standardized coefficient or signed MDI).
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverVerification {
    pub driver: String,
    /// Correlation of the driver column with the KPI column.
    pub pearson: f64,
    pub spearman: f64,
    /// Shapley share of the model's cross-validated score.
    pub shapley: f64,
    /// False when the driver or KPI column is constant.
    pub correlation_defined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub spearman_rank_agreement: f64,
    pub flagged: bool,
}

/// Agreement below this threshold flags the report.
pub const AGREEMENT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neutralization {
    /// Refit the model on each coalition's drivers.
    Retrain,
    /// Fit once on all drivers; replace excluded drivers by their training means.
    MeanImputation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    /// One value per frame driver, in frame order.
    pub values: Vec<f64>,
    pub permutations: usize,
    pub neutralization: Neutralization,
    /// Score with every driver included.
    pub full_score: f64,
    /// Score with no drivers (majority-class accuracy or R² = 0).
    pub empty_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub kpi: String,
    pub model_kind: ModelKind,
    /// Sorted by descending importance.
    pub entries: Vec<ImportanceEntry>,
    /// In frame driver order.
    pub verification: Vec<DriverVerification>,
    pub agreement: Agreement,
    pub shapley_permutations: usize,
    pub neutralization: Neutralization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyOptions {
    pub permutations: usize,
    /// `None` derives the seed from the model's.
    pub seed: Option<u64>,
    /// `None` picks retraining at desk scale and mean imputation above it.
    pub neutralization: Option<Neutralization>,
}

pub const DEFAULT_SHAPLEY_PERMUTATIONS: usize = 16;

impl Default for ShapleyOptions {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_SHAPLEY_PERMUTATIONS,
            seed: None,
            neutralization: None,
        }
    }
}

/// Largest driver count for which coalitions are retrained.
pub const RETRAIN_MAX_DRIVERS: usize = 8;
/// Work cap for retraining, in (coalitions × folds × trees × rows) units.
pub const RETRAIN_WORK_BUDGET: f64 = 6.0e7;

/// Signed raw importances in frame order: standardized coefficients for the
/// linear model, Pearson-signed mean impurity decrease for the forest.
pub fn raw_importances(model: &TrainedModel, rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let d = model.driver_count();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::WidthMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    Ok(match &model.parameters {
        ModelParameters::Linear(m) => (0..d).map(|j| m.coefficients[j] * sample_std(&column(j))).collect(),
        ModelParameters::Forest(f) => f
            .feature_importances(d)
            .into_iter()
            .enumerate()
            .map(|(j, mdi)| {
                let sign = if pearson(&column(j), y).value < 0.0 { -1.0 } else { 1.0 };
                sign * mdi
            })
            .collect(),
    })
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Divides by the largest magnitude and sorts descending (stable on ties).
pub fn normalize_importances(drivers: &[String], raw: &[f64]) -> Vec<ImportanceEntry> {
    let max = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut entries: Vec<ImportanceEntry> = drivers
        .iter()
        .zip(raw)
        .map(|(d, &r)| ImportanceEntry {
            driver: d.clone(),
            importance: if max > 0.0 { (r / max).clamp(-1.0, 1.0) } else { 0.0 },
            raw: r,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    entries
}

pub fn driver_importance(
    model: &TrainedModel,
    frame: &AnalysisFrame,
    rows: &[Vec<f64>],
    y: &[f64],
) -> Result<Vec<ImportanceEntry>> {
    model.check_frame(frame)?;
    let raw = raw_importances(model, rows, y)?;
    Ok(normalize_importances(&frame.drivers, &raw))
}

/// Spearman agreement between |importance| and |Shapley| in frame order.
pub fn rank_agreement(importance: &[f64], shapley: &[f64]) -> Agreement {
    if importance.len() < 2 {
        return Agreement {
            spearman_rank_agreement: 1.0,
            flagged: false,
        };
    }
    let a: Vec<f64> = importance.iter().map(|v| v.abs()).collect();
    let b: Vec<f64> = shapley.iter().map(|v| v.abs()).collect();
    let rho = spearman(&a, &b).value;
    Agreement {
        spearman_rank_agreement: rho,
        flagged: rho < AGREEMENT_THRESHOLD,
    }
}

/// Recomputes the agreement record of a finished report.
pub fn verify_importances(report: &ImportanceReport) -> Agreement {
    let by_driver: HashMap<&str, f64> = report
        .entries
        .iter()
        .map(|e| (e.driver.as_str(), e.importance))
        .collect();
    let importance: Vec<f64> = report
        .verification
        .iter()
        .map(|v| by_driver.get(v.driver.as_str()).copied().unwrap_or(0.0))
        .collect();
    let shapley: Vec<f64> = report.verification.iter().map(|v| v.shapley).collect();
    rank_agreement(&importance, &shapley)
}

/// Full report: importances, per-driver correlations, Shapley values and agreement.
pub fn importance_report(
    model: &TrainedModel,
    frame: &AnalysisFrame,
    rows: &[Vec<f64>],
    y: &[f64],
    options: &ShapleyOptions,
) -> Result<ImportanceReport> {
    model.check_frame(frame)?;
    let raw = raw_importances(model, rows, y)?;
    let entries = normalize_importances(&frame.drivers, &raw);
    let seed = options.seed.unwrap_or(model.seed);
    let shapley = shapley_with(
        frame,
        rows,
        y,
        &model.hyperparameters,
        options.permutations,
        seed,
        options.neutralization,
    )?;
    let verification = frame
        .drivers
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let p = pearson(&col, y);
            let s = spearman(&col, y);
            DriverVerification {
                driver: d.clone(),
                pearson: p.value,
                spearman: s.value,
                shapley: shapley.values[j],
                correlation_defined: p.defined && s.defined,
            }
        })
        .collect();
    let agreement = rank_agreement(&raw, &shapley.values);
    Ok(ImportanceReport {
        kpi: frame.kpi.clone(),
        model_kind: model.kind,
        entries,
        verification,
        agreement,
        shapley_permutations: shapley.permutations,
        neutralization: shapley.neutralization,
    })
}

/// Monte-Carlo Shapley attribution of the cross-validated score to drivers.
pub fn shapley_performance(
    frame: &AnalysisFrame,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    permutations: usize,
    seed: u64,
) -> Result<ShapleyEstimate> {
    shapley_with(frame, rows, y, hyper, permutations, seed, None)
}

pub fn shapley_with(
    frame: &AnalysisFrame,
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &Hyperparameters,
    permutations: usize,
    seed: u64,
    neutralization: Option<Neutralization>,
) -> Result<ShapleyEstimate> {
    if permutations < 1 {
        return Err(Error::Invalid("Shapley needs at least one permutation".into()));
    }
    hyper.validate()?;
    let d = frame.driver_count();
    if d > 63 {
        return Err(Error::Invalid("Shapley supports at most 63 drivers".into()));
    }
    let kind = ModelKind::for_kpi(frame.kpi_kind);
    let perms = sample_permutations(d, permutations, seed);
    let masks = required_coalitions(&perms);
    let method = neutralization.unwrap_or_else(|| choose_neutralization(kind, d, masks.len(), rows.len(), hyper));
    let empty_score = empty_coalition_score(kind, y);

    let values: HashMap<u64, f64> = match method {
        Neutralization::Retrain => masks
            .par_iter()
            .map(|&mask| {
                let score = if mask == 0 {
                    Ok(empty_score)
                } else {
                    let projected: Vec<Vec<f64>> = rows.iter().map(|r| project(r, mask)).collect();
                    model::cross_validate(kind, &projected, y, hyper, seed)
                };
                score.map(|s| (mask, s))
            })
            .collect::<Result<_>>()?,
        Neutralization::MeanImputation => {
            let scorer = ImputationScorer::new(kind, rows, y, hyper, seed)?;
            masks
                .par_iter()
                .map(|&mask| (mask, if mask == 0 { empty_score } else { scorer.score(mask) }))
                .collect()
        }
    };

    let full_mask = if d == 0 { 0 } else { (1u64 << d) - 1 };
    Ok(ShapleyEstimate {
        values: marginal_average(d, &perms, |mask| values[&mask]),
        permutations,
        neutralization: method,
        full_score: values.get(&full_mask).copied().unwrap_or(empty_score),
        empty_score,
    })
}

fn choose_neutralization(
    kind: ModelKind,
    d: usize,
    coalitions: usize,
    n: usize,
    hyper: &Hyperparameters,
) -> Neutralization {
    let trees = match kind {
        ModelKind::Linear => 1.0,
        ModelKind::Forest => hyper.forest.n_trees as f64,
    };
    let work = coalitions as f64 * hyper.cv_folds as f64 * trees * n as f64;
    if d <= RETRAIN_MAX_DRIVERS && work <= RETRAIN_WORK_BUDGET {
        Neutralization::Retrain
    } else {
        Neutralization::MeanImputation
    }
}

/// Majority-class accuracy (discrete) or R² = 0 (continuous).
pub fn empty_coalition_score(kind: ModelKind, y: &[f64]) -> f64 {
    match kind {
        ModelKind::Linear => 0.0,
        ModelKind::Forest => {
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            ones.max(y.len() - ones) as f64 / y.len() as f64
        }
    }
}

fn project(row: &[f64], mask: u64) -> Vec<f64> {
    row.iter()
        .enumerate()
        .filter(|(j, _)| mask & (1 << j) != 0)
        .map(|(_, &v)| v)
        .collect()
}

/// `m` seeded driver orderings, each from its own stream.
pub fn sample_permutations(d: usize, m: usize, seed: u64) -> Vec<Vec<usize>> {
    let root = derive_seed(seed, STREAM_SHAPLEY);
    (0..m)
        .map(|p| {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut seeded(root, p as u64));
            perm
        })
        .collect()
}

fn required_coalitions(perms: &[Vec<usize>]) -> BTreeSet<u64> {
    let mut masks = BTreeSet::from([0u64]);
    for perm in perms {
        let mut mask = 0u64;
        for &j in perm {
            mask |= 1 << j;
            masks.insert(mask);
        }
    }
    masks
}

/// Mean marginal contribution of each driver over the given orderings.
pub fn marginal_average<V: Fn(u64) -> f64>(d: usize, perms: &[Vec<usize>], value: V) -> Vec<f64> {
    let mut sums = vec![0.0; d];
    for perm in perms {
        let mut mask = 0u64;
        let mut prev = value(0);
        for &j in perm {
            mask |= 1 << j;
            let cur = value(mask);
            sums[j] += cur - prev;
            prev = cur;
        }
    }
    let m = perms.len().max(1) as f64;
    sums.iter().map(|s| s / m).collect()
}

/// Exact Shapley values by the subset-weight formula
/// `φⱼ = Σ_{S ∌ j} |S|!(d−|S|−1)!/d! · (v(S ∪ j) − v(S))`.
pub fn exact_shapley<V: Fn(u64) -> f64>(d: usize, value: V) -> Vec<f64> {
    let fact: Vec<f64> = (0..=d)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let mut phi = vec![0.0; d];
    for mask in 0u64..(1 << d) {
        let s = mask.count_ones() as usize;
        if s == d {
            continue;
        }
        let weight = fact[s] * fact[d - s - 1] / fact[d];
        let base = value(mask);
        for (j, p) in phi.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                *p += weight * (value(mask | (1 << j)) - base);
            }
        }
    }
    phi
}

struct ImputationFold {
    params: ModelParameters,
    means: Vec<f64>,
    test_x: Vec<Vec<f64>>,
    test_y: Vec<f64>,
}

/// Per-fold models fit on all drivers, reused for every coalition.
struct ImputationScorer {
    kind: ModelKind,
    folds: Vec<ImputationFold>,
}

impl ImputationScorer {
    fn new(kind: ModelKind, rows: &[Vec<f64>], y: &[f64], hyper: &Hyperparameters, seed: u64) -> Result<Self> {
        let k = hyper.cv_folds;
        let d = rows.first().map_or(0, Vec::len);
        let assignment = fold_assignment(rows.len(), k, seed);
        let fold_seed = derive_seed(seed, STREAM_CV_FOLD);
        let folds = (0..k)
            .map(|f| {
                let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
                for (i, &fi) in assignment.iter().enumerate() {
                    if fi == f {
                        vx.push(rows[i].clone());
                        vy.push(y[i]);
                    } else {
                        tx.push(rows[i].clone());
                        ty.push(y[i]);
                    }
                }
                let means = (0..d)
                    .map(|j| tx.iter().map(|r: &Vec<f64>| r[j]).sum::<f64>() / tx.len() as f64)
                    .collect();
                let params = model::fit(kind, &tx, &ty, hyper, derive_seed(fold_seed, f as u64))?;
                Ok(ImputationFold {
                    params,
                    means,
                    test_x: vx,
                    test_y: vy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, folds })
    }

    fn score(&self, mask: u64) -> f64 {
        let total: f64 = self
            .folds
            .iter()
            .map(|fold| {
                let preds: Vec<f64> = fold
                    .test_x
                    .iter()
                    .map(|r| {
                        let row: Vec<f64> = r
                            .iter()
                            .enumerate()
                            .map(|(j, &v)| if mask & (1 << j) != 0 { v } else { fold.means[j] })
                            .collect();
                        match &fold.params {
                            ModelParameters::Linear(m) => m.predict_row(&row),
                            ModelParameters::Forest(f) => f.proba(&row),
                        }
                    })
                    .collect();
                model::score(self.kind, &fold.test_y, &preds)
            })
            .sum();
        total / self.folds.len() as f64
    }
}

/// Horizontal bar chart of the sorted importances.
pub fn render_table(report: &ImportanceReport) -> String {
    const HALF: usize = 20;
    let width = report.entries.iter().map(|e| e.driver.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>7}  {:^41}\n", "driver", "value", "importance");
    for e in &report.entries {
        let len = (e.importance.abs() * HALF as f64).round() as usize;
        let (left, right) = if e.importance < 0.0 {
            (format!("{:>HALF$}", "#".repeat(len)), String::new())
        } else {
            (" ".repeat(HALF), "#".repeat(len))
        };
        out.push_str(&format!(
            "{:<width$}  {:>+7.3}  {left}|{right}\n",
            e.driver, e.importance
        ));
    }
    out.push_str(&format!(
        "rank agreement with Shapley: {:.3}{}\n",
        report.agreement.spearman_rank_agreement,
        if report.agreement.flagged {
            "  WARNING: importances disagree with Shapley ranking"
        } else {
            ""
        }
    ));
    out
}
