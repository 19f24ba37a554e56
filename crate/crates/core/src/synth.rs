//! Synthetic stand-ins for the three business use cases.
//!
//! Every generator is deterministic in `(use_case, n_rows, seed)` and returns
//! the ground-truth parameters it used so tests can check recovery.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_csv, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    MarketingMix,
    Retention,
    DealClosing,
}

impl UseCase {
    pub fn kpi(self) -> &'static str {
        match self {
            UseCase::MarketingMix => "sales",
            UseCase::Retention => "Retained6mo?",
            UseCase::DealClosing => "Deal Closed?",
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UseCase::MarketingMix => "marketing_mix",
            UseCase::Retention => "retention",
            UseCase::DealClosing => "deal_closing",
        })
    }
}

impl FromStr for UseCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "marketing_mix" => Ok(UseCase::MarketingMix),
            "retention" => Ok(UseCase::Retention),
            "deal_closing" => Ok(UseCase::DealClosing),
            _ => Err(Error::UnknownUseCase(s.to_string())),
        }
    }
}

/// How the KPI was produced from the drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `kpi = intercept + Σ coef·x + N(0, noise_std²)`
    Linear,
    /// `kpi = 1` iff `sigmoid(intercept + Σ coef·x) >= 0.5`
    LogisticThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverTruth {
    pub driver: String,
    pub coefficient: f64,
    /// Coefficient times the population standard deviation of the driver.
    pub standardized: f64,
}

/// Sidecar written next to a synthetic CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub use_case: UseCase,
    pub n_rows: usize,
    pub seed: u64,
    pub kpi: String,
    pub link: Link,
    pub intercept: f64,
    pub drivers: Vec<DriverTruth>,
    pub noise_std: f64,
}

impl GroundTruth {
    /// Driver names ordered by descending |standardized coefficient|.
    pub fn ranking(&self) -> Vec<&str> {
        let mut d: Vec<&DriverTruth> = self.drivers.iter().collect();
        d.sort_by(|a, b| b.standardized.abs().total_cmp(&a.standardized.abs()));
        d.into_iter().map(|t| t.driver.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub csv: Vec<u8>,
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

/// Noise standard deviation as a fraction of the noise-free response std.
pub const DEFAULT_NOISE_RATIO: f64 = 0.1;

pub fn generate_synthetic(use_case: UseCase, n_rows: usize, seed: u64) -> Result<Synthetic> {
    generate_synthetic_with_noise(use_case, n_rows, seed, DEFAULT_NOISE_RATIO)
}

/// `noise_ratio` only affects the marketing-mix generator.
pub fn generate_synthetic_with_noise(
    use_case: UseCase,
    n_rows: usize,
    seed: u64,
    noise_ratio: f64,
) -> Result<Synthetic> {
    if n_rows < 10 {
        return Err(Error::Invalid(format!("n_rows must be at least 10, got {n_rows}")));
    }
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(Error::Invalid("noise_ratio must be finite and nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (table, truth) = match use_case {
        UseCase::MarketingMix => marketing_mix(&mut rng, n_rows, seed, noise_ratio),
        UseCase::DealClosing => activity_classifier(&mut rng, n_rows, seed, use_case, &DEAL_DRIVERS, -8.7),
        UseCase::Retention => activity_classifier(&mut rng, n_rows, seed, use_case, &RETENTION_DRIVERS, -4.3),
    };
    let csv = table.to_csv();
    let dataset = parse_csv(&csv)?;
    Ok(Synthetic { csv, dataset, truth })
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

// (name, coefficient, spend upper bound)
const CHANNELS: [(&str, f64, f64); 5] = [
    ("TV", 3.0, 100.0),
    ("Search", 2.0, 80.0),
    ("Social", 1.2, 60.0),
    ("Radio", 0.6, 50.0),
    ("Print", 0.25, 40.0),
];
const MARKETING_INTERCEPT: f64 = 50.0;

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn marketing_mix(rng: &mut ChaCha8Rng, n: usize, seed: u64, noise_ratio: f64) -> (Table, GroundTruth) {
    let drivers: Vec<DriverTruth> = CHANNELS
        .iter()
        .map(|&(name, coef, hi)| DriverTruth {
            driver: name.to_string(),
            coefficient: coef,
            standardized: coef * hi / 12f64.sqrt(),
        })
        .collect();
    let response_std = drivers.iter().map(|d| d.standardized.powi(2)).sum::<f64>().sqrt();
    let noise_std = noise_ratio * response_std;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut header: Vec<String> = CHANNELS.iter().map(|c| c.0.to_string()).collect();
    header.push("sales".into());
    let rows = (0..n)
        .map(|_| {
            let spends: Vec<f64> = CHANNELS
                .iter()
                .map(|&(_, _, hi)| round2(rng.sample(Uniform::new(0.0, hi).expect("valid range"))))
                .collect();
            let signal = CHANNELS
                .iter()
                .zip(&spends)
                .fold(MARKETING_INTERCEPT, |acc, (c, x)| acc + c.1 * x);
            let sales = signal + noise_std * noise.sample(rng);
            spends
                .iter()
                .chain(std::iter::once(&sales))
                .map(|v| format!("{v}"))
                .collect()
        })
        .collect();

    let truth = GroundTruth {
        use_case: UseCase::MarketingMix,
        n_rows: n,
        seed,
        kpi: UseCase::MarketingMix.kpi().to_string(),
        link: Link::Linear,
        intercept: MARKETING_INTERCEPT,
        drivers,
        noise_std,
    };
    (Table { header, rows }, truth)
}

// (name, logit weight, Poisson mean)
const DEAL_DRIVERS: [(&str, f64, f64); 7] = [
    ("Chat", 0.15, 3.0),
    ("Meeting", 0.05, 2.5),
    ("Open Marketing Email", 1.0, 4.0),
    ("Renewal", 0.8, 2.0),
    ("Call", 0.6, 3.0),
    ("LinkedIn Contact", 0.03, 2.0),
    ("Initiate New Contact", 0.04, 2.5),
];

const RETENTION_DRIVERS: [(&str, f64, f64); 5] = [
    ("Logins", 0.5, 6.0),
    ("Support Tickets", -0.7, 2.0),
    ("Feature Adoption", 0.9, 3.0),
    ("Training Sessions", 0.3, 2.0),
    ("Billing Issues", -0.4, 2.0),
];

fn activity_classifier(
    rng: &mut ChaCha8Rng,
    n: usize,
    seed: u64,
    use_case: UseCase,
    spec: &[(&str, f64, f64)],
    intercept: f64,
) -> (Table, GroundTruth) {
    let poissons: Vec<Poisson<f64>> = spec
        .iter()
        .map(|&(_, _, mean)| Poisson::new(mean).expect("positive mean"))
        .collect();
    let mut header = vec!["Account".to_string()];
    header.extend(spec.iter().map(|s| s.0.to_string()));
    header.push(use_case.kpi().to_string());

    let rows = (0..n)
        .map(|i| {
            let counts: Vec<f64> = poissons.iter().map(|p| p.sample(rng)).collect();
            let logit = spec.iter().zip(&counts).fold(intercept, |acc, (s, x)| acc + s.1 * x);
            let label = u8::from(logistic(logit) >= 0.5);
            let mut row = vec![format!("Account {:04}", i + 1)];
            row.extend(counts.iter().map(|c| format!("{c}")));
            row.push(label.to_string());
            row
        })
        .collect();

    let drivers = spec
        .iter()
        .map(|&(name, w, mean)| DriverTruth {
            driver: name.to_string(),
            coefficient: w,
            standardized: w * mean.sqrt(),
        })
        .collect();
    let truth = GroundTruth {
        use_case,
        n_rows: n,
        seed,
        kpi: use_case.kpi().to_string(),
        link: Link::LogisticThreshold,
        intercept,
        drivers,
        noise_std: 0.0,
    };
    (Table { header, rows }, truth)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnKind;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(UseCase::MarketingMix, 1000, 7).unwrap();
        let b = generate_synthetic(UseCase::MarketingMix, 1000, 7).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.dataset.id(), b.dataset.id());
        let c = generate_synthetic(UseCase::MarketingMix, 1000, 8).unwrap();
        assert_ne!(a.csv, c.csv);
    }

    #[test]
    fn deal_closing_has_binary_kpi_and_text_account() {
        let s = generate_synthetic(UseCase::DealClosing, 500, 1).unwrap();
        assert_eq!(s.dataset.column("Deal Closed?").unwrap().kind, ColumnKind::Binary);
        assert_eq!(s.dataset.column("Account").unwrap().kind, ColumnKind::CategoricalText);
        for (name, _, _) in DEAL_DRIVERS {
            assert_eq!(s.dataset.column(name).unwrap().kind, ColumnKind::Numeric, "{name}");
        }
        let rate = s.dataset.column("Deal Closed?").unwrap().stats.as_ref().unwrap().mean;
        assert!(rate > 0.2 && rate < 0.8, "class balance {rate}");
    }

    #[test]
    fn retention_has_binary_kpi() {
        let s = generate_synthetic(UseCase::Retention, 300, 4).unwrap();
        assert_eq!(s.dataset.column("Retained6mo?").unwrap().kind, ColumnKind::Binary);
        let rate = s.dataset.column("Retained6mo?").unwrap().stats.as_ref().unwrap().mean;
        assert!(rate > 0.2 && rate < 0.8, "class balance {rate}");
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(generate_synthetic(UseCase::Retention, 9, 0).is_err());
    }

    #[test]
    fn use_case_parsing() {
        assert_eq!("deal-closing".parse::<UseCase>().unwrap(), UseCase::DealClosing);
        assert_eq!(
            "churn".parse::<UseCase>().unwrap_err(),
            Error::UnknownUseCase("churn".into())
        );
    }

    #[test]
    fn ranking_orders_by_standardized_magnitude() {
        let s = generate_synthetic(UseCase::MarketingMix, 20, 0).unwrap();
        assert_eq!(s.truth.ranking(), vec!["TV", "Search", "Social", "Radio", "Print"]);
    }
}
