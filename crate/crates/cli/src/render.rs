//! Aligned text output for `--table`.

use std::fmt::Write as _;

use whatif_core::api::{ComparisonResult, DatasetSummary};
use whatif_core::goalseek::GoalResult;
use whatif_core::sensitivity::{format_cents, to_cents, RowSensitivity, SensitivityResult};
use whatif_core::TrainedModel;

fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for r in rows {
        out += &line(r);
    }
    out
}

fn strings(cells: &[&str]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

pub fn dataset(summary: &DatasetSummary) -> String {
    let rows: Vec<Vec<String>> = summary
        .schema
        .iter()
        .map(|c| {
            let kind = serde_json::to_value(c.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let mut r = vec![c.name.clone(), kind];
            match &c.stats {
                Some(s) => r.extend([
                    format!("{:.4}", s.min),
                    format!("{:.4}", s.mean),
                    format!("{:.4}", s.max),
                    s.distinct_count.to_string(),
                ]),
                None => r.extend(["".into(), "".into(), "".into(), "".into()]),
            }
            r
        })
        .collect();
    let mut out = format!(
        "dataset {}: {} rows, {} dropped\n",
        summary.dataset_id, summary.row_count, summary.dropped_rows
    );
    out += &grid(&strings(&["column", "kind", "min", "mean", "max", "distinct"]), &rows);
    out
}

pub fn model(m: &TrainedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kpi {} ({:?}), {:?} model", m.frame.kpi, m.frame.kpi_kind, m.kind);
    let _ = writeln!(out, "cross-validated confidence {:.4}", m.confidence);
    if let Some(lin) = m.linear() {
        let mut rows = vec![vec!["(intercept)".to_string(), format!("{:.6}", lin.intercept)]];
        rows.extend(
            m.frame
                .drivers
                .iter()
                .zip(&lin.coefficients)
                .map(|(d, c)| vec![d.clone(), format!("{c:.6}")]),
        );
        out += &grid(&strings(&["driver", "coefficient"]), &rows);
    } else if let Some(f) = m.forest() {
        let _ = writeln!(
            out,
            "{} trees over drivers: {}",
            f.trees.len(),
            m.frame.drivers.join(", ")
        );
    }
    out
}

pub fn sensitivity(r: &SensitivityResult) -> String {
    grid(
        &strings(&["", "kpi"]),
        &[
            strings(&["baseline", &r.rendered.baseline_kpi]),
            strings(&["perturbed", &r.rendered.perturbed_kpi]),
            strings(&["uplift", &r.rendered.uplift]),
        ],
    )
}

pub fn row(r: &RowSensitivity) -> String {
    let cell = |p: &whatif_core::model::RowPrediction| match p.class {
        Some(c) => format!("{:.4} (class {c})", p.value),
        None => format!("{:.4}", p.value),
    };
    let mut out = format!("row {}\n", r.row_index);
    out += &grid(
        &strings(&["", "prediction"]),
        &[
            vec!["baseline".into(), cell(&r.baseline_prediction)],
            vec!["perturbed".into(), cell(&r.perturbed_prediction)],
            vec!["uplift".into(), format!("{:+.4}", r.uplift)],
        ],
    );
    out
}

pub fn comparison(r: &ComparisonResult) -> String {
    let Some(first) = r.curves.first() else {
        return String::new();
    };
    let mut header = vec![format!("amount ({})", first.mode)];
    header.extend(r.curves.iter().map(|c| c.driver.clone()));
    let rows: Vec<Vec<String>> = (0..first.points.len())
        .map(|k| {
            let mut row = vec![format!("{}", first.points[k].amount)];
            row.extend(r.curves.iter().map(|c| format_cents(to_cents(c.points[k].kpi))));
            row
        })
        .collect();
    format!("baseline {}\n", format_cents(to_cents(r.baseline_kpi))) + &grid(&header, &rows)
}

pub fn goal(r: &GoalResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "objective {:?}", r.objective);
    if let Some(t) = r.target_value {
        let _ = writeln!(out, "target {t}");
    }
    out += &grid(
        &strings(&["", "kpi"]),
        &[
            strings(&["baseline", &r.rendered.baseline_kpi]),
            strings(&["best", &r.rendered.best_kpi]),
            strings(&["uplift", &r.rendered.uplift]),
            vec!["confidence".into(), format!("{:.4}", r.confidence)],
        ],
    );
    let rows: Vec<Vec<String>> = r
        .best_perturbation
        .iter()
        .zip(&r.constraints)
        .map(|(p, c)| {
            vec![
                p.driver.clone(),
                p.mode.to_string(),
                format!("{:.4}", p.amount),
                format!("[{}, {}]", c.lo, c.hi),
            ]
        })
        .collect();
    out += &grid(&strings(&["driver", "mode", "change", "bounds"]), &rows);
    let _ = writeln!(
        out,
        "{} evaluations{}",
        r.trace.len(),
        if r.completed { "" } else { " (stopped early)" }
    );
    out
}
