//! Perturb drivers, re-predict, and report the KPI change.
//!
//! Perturbations apply uniformly to every row: `x + amount` in absolute mode,
//! `x · (1 + amount/100)` in percentage mode. The model is never retrained.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::model::{RowPrediction, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    #[serde(alias = "abs")]
    Absolute,
    #[serde(alias = "pct")]
    Percentage,
}

impl PerturbationMode {
    pub fn apply(self, value: f64, amount: f64) -> f64 {
        match self {
            PerturbationMode::Absolute => value + amount,
            PerturbationMode::Percentage => value * (1.0 + amount / 100.0),
        }
    }
}

impl fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbationMode::Absolute => "absolute",
            PerturbationMode::Percentage => "percentage",
        })
    }
}

impl FromStr for PerturbationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "abs" | "absolute" => Ok(PerturbationMode::Absolute),
            "pct" | "percent" | "percentage" => Ok(PerturbationMode::Percentage),
            other => Err(Error::InvalidPerturbation(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub driver: String,
    pub mode: PerturbationMode,
    /// Driver units (absolute) or percent (percentage).
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub items: Vec<Perturbation>,
}

impl PerturbationSpec {
    pub fn single(driver: &str, mode: PerturbationMode, amount: f64) -> Self {
        Self {
            items: vec![Perturbation {
                driver: driver.to_string(),
                mode,
                amount,
            }],
        }
    }

    /// Resolves drivers to frame indices, rejecting unknown or repeated
    /// drivers, non-finite amounts and percentage changes to binary drivers.
    pub fn resolve(&self, frame: &AnalysisFrame) -> Result<Vec<(usize, PerturbationMode, f64)>> {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .map(|p| {
                let j = frame.driver_index(&p.driver)?;
                if !seen.insert(j) {
                    return Err(Error::InvalidPerturbation(format!(
                        "driver `{}` listed twice",
                        p.driver
                    )));
                }
                if !p.amount.is_finite() {
                    return Err(Error::InvalidPerturbation(format!(
                        "amount for `{}` is not finite",
                        p.driver
                    )));
                }
                if p.mode == PerturbationMode::Percentage && frame.is_binary(j) {
                    return Err(Error::PercentageOnBinary(p.driver.clone()));
                }
                Ok((j, p.mode, p.amount))
            })
            .collect()
    }
}

fn perturb_value(frame: &AnalysisFrame, j: usize, mode: PerturbationMode, amount: f64, x: f64) -> f64 {
    let mut v = mode.apply(x, amount);
    if frame.is_binary(j) {
        v = v.round().clamp(0.0, 1.0);
    }
    match frame.limits.get(&frame.drivers[j]) {
        Some(limits) => limits.apply(v),
        None => v,
    }
}

/// Returns a perturbed copy of `rows`; the input is not modified.
pub fn apply_perturbation(rows: &[Vec<f64>], frame: &AnalysisFrame, spec: &PerturbationSpec) -> Result<Vec<Vec<f64>>> {
    let resolved = spec.resolve(frame)?;
    let d = frame.driver_count();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::WidthMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    Ok(rows
        .iter()
        .map(|row| {
            let mut out = row.clone();
            for &(j, mode, amount) in &resolved {
                out[j] = perturb_value(frame, j, mode, amount, row[j]);
            }
            out
        })
        .collect())
}

/// Two-decimal display strings whose arithmetic is exact:
/// `perturbed − baseline = uplift` holds on the rendered digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedResult {
    pub baseline_kpi: String,
    pub perturbed_kpi: String,
    pub uplift: String,
}

/// Value rounded to hundredths, as an integer count of hundredths.
pub fn to_cents(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let a = cents.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// Signed rendering: `+1.35`, `-0.40`, or `0.00`.
pub fn format_signed_cents(cents: i64) -> String {
    if cents > 0 {
        format!("+{}", format_cents(cents))
    } else {
        format_cents(cents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub baseline_kpi: f64,
    pub perturbed_kpi: f64,
    /// `perturbed_kpi − baseline_kpi`; positive is up-lift, negative is down-lift.
    pub uplift: f64,
    pub rendered: RenderedResult,
}

impl SensitivityResult {
    pub fn new(baseline_kpi: f64, perturbed_kpi: f64) -> Self {
        let (b, p) = (to_cents(baseline_kpi), to_cents(perturbed_kpi));
        Self {
            baseline_kpi,
            perturbed_kpi,
            uplift: perturbed_kpi - baseline_kpi,
            rendered: RenderedResult {
                baseline_kpi: format_cents(b),
                perturbed_kpi: format_cents(p),
                uplift: format_signed_cents(p - b),
            },
        }
    }

    /// Reconstructs a result from a reported KPI and its uplift.
    pub fn from_perturbed_and_uplift(perturbed_kpi: f64, uplift: f64) -> Self {
        let (p, u) = (to_cents(perturbed_kpi), to_cents(uplift));
        Self {
            baseline_kpi: perturbed_kpi - uplift,
            perturbed_kpi,
            uplift,
            rendered: RenderedResult {
                baseline_kpi: format_cents(p - u),
                perturbed_kpi: format_cents(p),
                uplift: format_signed_cents(u),
            },
        }
    }
}

pub fn run_sensitivity(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    spec: &PerturbationSpec,
) -> Result<SensitivityResult> {
    model.check_frame(frame)?;
    let baseline = model.kpi_value(rows)?;
    let perturbed_rows = apply_perturbation(rows, frame, spec)?;
    let perturbed = model.kpi_value(&perturbed_rows)?;
    Ok(SensitivityResult::new(baseline, perturbed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub amount: f64,
    pub kpi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCurve {
    pub driver: String,
    pub mode: PerturbationMode,
    /// Amounts strictly increasing.
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Empty selects every frame driver.
    #[serde(default)]
    pub drivers: Vec<String>,
    pub mode: PerturbationMode,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// `steps` evenly spaced amounts from `lo` to `hi` inclusive.
pub fn sweep_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidSweep(format!("steps must be at least 2, got {steps}")));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidSweep(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| if k == steps - 1 { hi } else { lo + k as f64 * step })
        .collect())
}

/// KPI across a range of single-driver perturbations, one curve per driver.
pub fn comparison_sweep(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    sweep: &SweepSpec,
) -> Result<Vec<ComparisonCurve>> {
    model.check_frame(frame)?;
    let amounts = sweep_grid(sweep.lo, sweep.hi, sweep.steps)?;
    let drivers: Vec<String> = if sweep.drivers.is_empty() {
        frame.drivers.clone()
    } else {
        sweep.drivers.clone()
    };
    for d in &drivers {
        PerturbationSpec::single(d, sweep.mode, 0.0).resolve(frame)?;
    }
    drivers
        .iter()
        .map(|driver| {
            let points = amounts
                .par_iter()
                .map(|&amount| {
                    let spec = PerturbationSpec::single(driver, sweep.mode, amount);
                    let r = run_sensitivity(model, rows, frame, &spec)?;
                    Ok(CurvePoint {
                        amount,
                        kpi: r.perturbed_kpi,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ComparisonCurve {
                driver: driver.clone(),
                mode: sweep.mode,
                points,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSensitivity {
    pub row_index: usize,
    pub baseline_prediction: RowPrediction,
    pub perturbed_prediction: RowPrediction,
    pub uplift: f64,
}

/// Perturbs one row only and returns its prediction before and after.
pub fn row_sensitivity(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    row_index: usize,
    spec: &PerturbationSpec,
) -> Result<RowSensitivity> {
    model.check_frame(frame)?;
    let row = rows.get(row_index).ok_or(Error::RowOutOfRange {
        index: row_index,
        len: rows.len(),
    })?;
    let perturbed = apply_perturbation(std::slice::from_ref(row), frame, spec)?;
    let before = model.predict_row(row)?;
    let after = model.predict_row(&perturbed[0])?;
    Ok(RowSensitivity {
        row_index,
        baseline_prediction: before,
        perturbed_prediction: after,
        uplift: after.value - before.value,
    })
}
