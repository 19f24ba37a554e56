//! `driver:mode:amount[:hi]` arguments, with `mode` one of `pct` or `abs`.
//! Driver names may themselves contain colons; the mode token is located
//! from the right.

use std::str::FromStr;

use whatif_core::goalseek::DriverConstraint;
use whatif_core::sensitivity::{Perturbation, PerturbationMode};
use whatif_core::{Error, Result};

fn number(token: &str, what: &str, arg: &str) -> Result<f64> {
    match token.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::InvalidPerturbation(format!("bad {what} `{token}` in `{arg}`"))),
    }
}

fn split(arg: &str) -> Result<(String, PerturbationMode, Vec<&str>)> {
    let parts: Vec<&str> = arg.split(':').collect();
    for tail in [1, 2] {
        if parts.len() < tail + 2 {
            continue;
        }
        let m = parts.len() - tail - 1;
        if let Ok(mode) = PerturbationMode::from_str(parts[m]) {
            let driver = parts[..m].join(":");
            if driver.is_empty() {
                break;
            }
            return Ok((driver, mode, parts[m + 1..].to_vec()));
        }
    }
    Err(Error::InvalidPerturbation(format!(
        "expected driver:pct|abs:amount[:hi], got `{arg}`"
    )))
}

/// `driver:mode:amount`
pub fn perturbation(arg: &str) -> Result<Perturbation> {
    let (driver, mode, nums) = split(arg)?;
    if nums.len() != 1 {
        return Err(Error::InvalidPerturbation(format!(
            "expected driver:mode:amount, got `{arg}`"
        )));
    }
    Ok(Perturbation {
        driver,
        mode,
        amount: number(nums[0], "amount", arg)?,
    })
}

/// `driver:mode:lo:hi`, or `driver:mode:amount` for a fixed amount.
pub fn constraint(arg: &str) -> Result<DriverConstraint> {
    let (driver, mode, nums) = split(arg)?;
    let lo = number(nums[0], "lower bound", arg)?;
    let hi = match nums.get(1) {
        Some(t) => number(t, "upper bound", arg)?,
        None => lo,
    };
    Ok(DriverConstraint { driver, mode, lo, hi })
}
