//! Goal inversion: search the per-driver perturbation vector that maximizes,
//! minimizes or hits a target KPI inside per-driver `[lo, hi]` boxes.
//!
//! The search is Bayesian optimization over the box: a seeded Latin
//! hypercube design, then repeated GP fits on standardized scores with the
//! next point chosen as the expected-improvement argmax over 1000 seeded
//! uniform candidates.

pub mod acquisition;
pub mod gp;
pub mod lhs;

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AnalysisFrame;
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::rng::{derive_seed, seeded, STREAM_CANDIDATES, STREAM_LHS};
use crate::sensitivity::{
    apply_perturbation, format_cents, format_signed_cents, to_cents, Perturbation, PerturbationMode, PerturbationSpec,
};

pub use acquisition::{expected_improvement, normal_cdf, normal_pdf};
pub use gp::{gp_fit, Surrogate};

pub const DEFAULT_BUDGET: usize = 60;
pub const DEFAULT_N_INIT: usize = 10;
pub const CANDIDATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[serde(alias = "max")]
    Maximize,
    #[serde(alias = "min")]
    Minimize,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConstraint {
    pub driver: String,
    pub mode: PerturbationMode,
    pub lo: f64,
    pub hi: f64,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_n_init() -> usize {
    DEFAULT_N_INIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_value: Option<f64>,
    /// Drivers without an entry default to percentage `[−100, 100]`
    /// (binary drivers: absolute `[−1, 1]`).
    #[serde(default)]
    pub constraints: Vec<DriverConstraint>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GoalSpec {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            target_value: None,
            constraints: Vec::new(),
            budget: DEFAULT_BUDGET,
            n_init: DEFAULT_N_INIT,
            seed: 0,
        }
    }

    /// Internal score to maximize: `kpi`, `−kpi`, or `−|kpi − target|`.
    pub fn score(&self, kpi: f64) -> f64 {
        match self.objective {
            Objective::Maximize => kpi,
            Objective::Minimize => -kpi,
            Objective::Target => -(kpi - self.target_value.unwrap_or(0.0)).abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.objective, self.target_value) {
            (Objective::Target, None) => return Err(Error::InvalidGoal("target objective needs target_value".into())),
            (Objective::Target, Some(t)) if !t.is_finite() => {
                return Err(Error::InvalidGoal("target_value must be finite".into()))
            }
            (Objective::Maximize | Objective::Minimize, Some(_)) => {
                return Err(Error::InvalidGoal(
                    "target_value is only allowed with the target objective".into(),
                ))
            }
            _ => {}
        }
        if self.n_init < 1 {
            return Err(Error::InvalidGoal("n_init must be at least 1".into()));
        }
        if self.budget < self.n_init + 1 {
            return Err(Error::InvalidGoal(format!(
                "budget {} must exceed n_init {}",
                self.budget, self.n_init
            )));
        }
        for c in &self.constraints {
            if !(c.lo.is_finite() && c.hi.is_finite()) {
                return Err(Error::InvalidGoal(format!("bounds for `{}` must be finite", c.driver)));
            }
            if c.lo > c.hi {
                return Err(Error::InvalidGoal(format!(
                    "infeasible bounds for `{}`: lo {} > hi {}",
                    c.driver, c.lo, c.hi
                )));
            }
        }
        Ok(())
    }

    /// One constraint per frame driver, in frame order, defaults filled in.
    pub fn resolve_constraints(&self, frame: &AnalysisFrame) -> Result<Vec<DriverConstraint>> {
        let mut out: Vec<Option<DriverConstraint>> = vec![None; frame.driver_count()];
        for c in &self.constraints {
            let j = frame.driver_index(&c.driver)?;
            if out[j].is_some() {
                return Err(Error::InvalidGoal(format!("driver `{}` constrained twice", c.driver)));
            }
            if c.mode == PerturbationMode::Percentage && frame.is_binary(j) {
                return Err(Error::PercentageOnBinary(c.driver.clone()));
            }
            out[j] = Some(c.clone());
        }
        Ok(out
            .into_iter()
            .enumerate()
            .map(|(j, c)| {
                c.unwrap_or_else(|| {
                    let driver = frame.drivers[j].clone();
                    if frame.is_binary(j) {
                        DriverConstraint {
                            driver,
                            mode: PerturbationMode::Absolute,
                            lo: -1.0,
                            hi: 1.0,
                        }
                    } else {
                        DriverConstraint {
                            driver,
                            mode: PerturbationMode::Percentage,
                            lo: -100.0,
                            hi: 100.0,
                        }
                    }
                })
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// One amount per frame driver.
    pub perturbation: Vec<f64>,
    pub kpi: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedGoal {
    pub best_kpi: String,
    pub baseline_kpi: String,
    pub uplift: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalResult {
    pub objective: Objective,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_value: Option<f64>,
    /// Best amount per driver, with the mode of its constraint.
    pub best_perturbation: Vec<Perturbation>,
    pub best_kpi: f64,
    pub baseline_kpi: f64,
    pub uplift: f64,
    /// Cross-validated score of the model being inverted.
    pub confidence: f64,
    pub constraints: Vec<DriverConstraint>,
    pub trace: Vec<TracePoint>,
    /// False when a deadline cut the run short.
    pub completed: bool,
    pub jitter_escalated: bool,
    pub rendered: RenderedGoal,
}

impl GoalResult {
    /// The trace as CSV: one column per driver amount, then the KPI.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("evaluation");
        for c in &self.constraints {
            let _ = write!(out, ",{}", csv_field(&c.driver));
        }
        out.push_str(",kpi\n");
        for (i, t) in self.trace.iter().enumerate() {
            let _ = write!(out, "{i}");
            for a in &t.perturbation {
                let _ = write!(out, ",{a}");
            }
            let _ = writeln!(out, ",{}", t.kpi);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Run limits applied on top of the spec's own budget.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunLimits {
    pub deadline: Option<Instant>,
    pub max_budget: Option<usize>,
}

fn spec_from_vector(constraints: &[DriverConstraint], p: &[f64]) -> PerturbationSpec {
    PerturbationSpec {
        items: constraints
            .iter()
            .zip(p)
            .map(|(c, &amount)| Perturbation {
                driver: c.driver.clone(),
                mode: c.mode,
                amount,
            })
            .collect(),
    }
}

/// KPI after applying perturbation vector `p` (frame driver order).
pub fn objective_eval(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    p: &[f64],
    spec: &GoalSpec,
) -> Result<f64> {
    let constraints = spec.resolve_constraints(frame)?;
    evaluate(model, rows, frame, &constraints, p)
}

fn evaluate(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    constraints: &[DriverConstraint],
    p: &[f64],
) -> Result<f64> {
    if p.len() != constraints.len() {
        return Err(Error::WidthMismatch {
            expected: constraints.len(),
            found: p.len(),
        });
    }
    for (c, &v) in constraints.iter().zip(p) {
        if !(v >= c.lo && v <= c.hi) {
            return Err(Error::ConstraintViolation {
                driver: c.driver.clone(),
                value: v,
                lo: c.lo,
                hi: c.hi,
            });
        }
    }
    let perturbed = apply_perturbation(rows, frame, &spec_from_vector(constraints, p))?;
    model.kpi_value(&perturbed)
}

fn to_box(constraints: &[DriverConstraint], u: &[f64]) -> Vec<f64> {
    constraints
        .iter()
        .zip(u)
        .map(|(c, &t)| (c.lo + t * (c.hi - c.lo)).clamp(c.lo, c.hi))
        .collect()
}

fn standardize(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = if scores.len() > 1 {
        scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    scores.iter().map(|s| (s - mean) / std).collect()
}

pub fn optimize_goal(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    spec: &GoalSpec,
) -> Result<GoalResult> {
    optimize_goal_with_limits(model, rows, frame, spec, &RunLimits::default())
}

pub fn optimize_goal_with_limits(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    frame: &AnalysisFrame,
    spec: &GoalSpec,
    limits: &RunLimits,
) -> Result<GoalResult> {
    model.check_frame(frame)?;
    spec.validate()?;
    let constraints = spec.resolve_constraints(frame)?;
    let budget = limits.max_budget.map_or(spec.budget, |cap| spec.budget.min(cap));
    if budget < spec.n_init + 1 {
        return Err(Error::InvalidGoal(format!(
            "budget {budget} (after cap) must exceed n_init {}",
            spec.n_init
        )));
    }
    let baseline = model.kpi_value(rows)?;
    let d = constraints.len();

    let mut trace: Vec<TracePoint> = Vec::new();
    let mut units: Vec<Vec<f64>> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut jitter_escalated = false;
    let mut completed = true;
    let expired =
        |trace: &Vec<TracePoint>| -> bool { !trace.is_empty() && limits.deadline.is_some_and(|t| Instant::now() >= t) };

    let record =
        |u: Vec<f64>, trace: &mut Vec<TracePoint>, units: &mut Vec<Vec<f64>>, scores: &mut Vec<f64>| -> Result<()> {
            let p = to_box(&constraints, &u);
            let kpi = evaluate(model, rows, frame, &constraints, &p)?;
            scores.push(spec.score(kpi));
            units.push(u);
            trace.push(TracePoint { perturbation: p, kpi });
            Ok(())
        };

    if constraints.iter().all(|c| c.lo == c.hi) {
        // a single feasible point
        record(vec![0.0; d], &mut trace, &mut units, &mut scores)?;
    } else {
        let mut lhs_rng = seeded(spec.seed, STREAM_LHS);
        for u in lhs::latin_hypercube(spec.n_init, d, &mut lhs_rng) {
            if expired(&trace) {
                completed = false;
                break;
            }
            record(u, &mut trace, &mut units, &mut scores)?;
        }
        let candidate_root = derive_seed(spec.seed, STREAM_CANDIDATES);
        let mut iteration = 0u64;
        while completed && trace.len() < budget {
            if expired(&trace) {
                completed = false;
                break;
            }
            let y = standardize(&scores);
            let surrogate = gp_fit(&units, &y)?;
            jitter_escalated |= surrogate.jitter_escalated;
            let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

            let mut rng = seeded(candidate_root, iteration);
            iteration += 1;
            let mut chosen: Option<(f64, Vec<f64>)> = None;
            for _ in 0..CANDIDATES {
                let u: Vec<f64> = constraints
                    .iter()
                    .map(|c| if c.lo == c.hi { 0.0 } else { rng.random::<f64>() })
                    .collect();
                let (mean, std) = surrogate.predict(&u);
                let ei = expected_improvement(mean, std, best);
                if chosen.as_ref().is_none_or(|(b, _)| ei > *b) {
                    chosen = Some((ei, u));
                }
            }
            let (_, u) = chosen.expect("at least one candidate");
            record(u, &mut trace, &mut units, &mut scores)?;
        }
    }

    let best_idx = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, &s)| if s > scores[b] { i } else { b });
    let best = &trace[best_idx];
    let best_kpi = best.kpi;
    let (bc, kc) = (to_cents(baseline), to_cents(best_kpi));
    Ok(GoalResult {
        objective: spec.objective,
        target_value: spec.target_value,
        best_perturbation: spec_from_vector(&constraints, &best.perturbation).items,
        best_kpi,
        baseline_kpi: baseline,
        uplift: best_kpi - baseline,
        confidence: model.confidence,
        constraints,
        trace,
        completed,
        jitter_escalated,
        rendered: RenderedGoal {
            best_kpi: format_cents(kc),
            baseline_kpi: format_cents(bc),
            uplift: format_signed_cents(kc - bc),
        },
    })
}
