use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step sizes `gamma_k` for the streaming iteration, capped at one.
///
/// Both families are square summable but not summable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `c / (k + 1)`.
    Harmonic { c: f64 },
    /// `c / (k + 1)^p` with `p` in `(1/2, 1]`.
    PowerLaw { c: f64, p: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic { c: 1.0 }
    }
}

impl StepSchedule {
    pub fn harmonic(c: f64) -> Result<Self> {
        check_scale(c)?;
        Ok(StepSchedule::Harmonic { c })
    }

    pub fn power_law(c: f64, p: f64) -> Result<Self> {
        check_scale(c)?;
        if !(p > 0.5 && p <= 1.0) {
            return Err(Error::InvalidScheduleParameter(format!(
                "exponent {p} outside (1/2, 1]"
            )));
        }
        Ok(StepSchedule::PowerLaw { c, p })
    }

    /// Step size at step `k >= 0`.
    pub fn gamma(&self, k: usize) -> f64 {
        let t = (k + 1) as f64;
        let g = match *self {
            StepSchedule::Harmonic { c } => c / t,
            StepSchedule::PowerLaw { c, p } => c / t.powf(p),
        };
        g.min(1.0)
    }

    /// Exponent of the decay, used for the summability facts.
    pub fn exponent(&self) -> f64 {
        match *self {
            StepSchedule::Harmonic { .. } => 1.0,
            StepSchedule::PowerLaw { p, .. } => p,
        }
    }
}

fn check_scale(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidScheduleParameter(format!(
            "scale {c} must be positive and finite"
        )));
    }
    Ok(())
}

/// Builds a schedule from a kind name (`harmonic` or `power`) and its
/// parameters (`[c]` or `[c, p]`).
pub fn make_schedule(kind: &str, params: &[f64]) -> Result<StepSchedule> {
    match (kind, params) {
        ("harmonic", [c]) => StepSchedule::harmonic(*c),
        ("harmonic", []) => StepSchedule::harmonic(1.0),
        ("power", [c, p]) => StepSchedule::power_law(*c, *p),
        _ => Err(Error::InvalidScheduleParameter(format!(
            "unknown schedule {kind} with {} parameters",
            params.len()
        ))),
    }
}

/// Parses `harmonic:c` or `power:c,p`.
impl FromStr for StepSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = rest
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidScheduleParameter(format!("cannot parse {t:?} as a number"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        make_schedule(kind.trim(), &params)
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Harmonic { c } => write!(f, "harmonic:{c}"),
            StepSchedule::PowerLaw { c, p } => write!(f, "power:{c},{p}"),
        }
    }
}
