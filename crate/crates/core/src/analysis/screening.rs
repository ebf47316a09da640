use serde::{Deserialize, Serialize};

use super::regression::ScreeningFit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningThresholds {
    /// Predicted capacity at or above `pass_fraction * nominal` passes.
    pub pass_fraction: f64,
    /// Below `reject_fraction * nominal` the cell is rejected; in between it
    /// goes to review.
    pub reject_fraction: f64,
    pub nominal_capacity_ah: f64,
}

impl ScreeningThresholds {
    pub fn new(pass_fraction: f64, nominal_capacity_ah: f64) -> Self {
        Self {
            pass_fraction,
            reject_fraction: pass_fraction - 0.1,
            nominal_capacity_ah,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pass_fraction.is_finite()
            && self.reject_fraction.is_finite()
            && self.reject_fraction <= self.pass_fraction
            && self.nominal_capacity_ah.is_finite()
            && self.nominal_capacity_ah > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid screening thresholds {self:?}")))
        }
    }
}

impl Default for ScreeningThresholds {
    fn default() -> Self {
        Self::new(0.8, crate::ecm::NOMINAL_PACK_CAPACITY_AH)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningClass {
    Pass,
    Review,
    Reject,
}

impl ScreeningClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ScreeningClass::Pass => "pass",
            ScreeningClass::Review => "review",
            ScreeningClass::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningDecision {
    pub r_s: f64,
    pub predicted_capacity_ah: f64,
    pub predicted_fraction: f64,
    pub class: ScreeningClass,
    pub thresholds: ScreeningThresholds,
    /// `r_s` lies outside the resistance range the fit was built on.
    pub extrapolated: bool,
}

pub fn screen_cell(r_s: f64, fit: &ScreeningFit, thresholds: &ScreeningThresholds) -> Result<ScreeningDecision> {
    thresholds.validate()?;
    if !r_s.is_finite() {
        return Err(Error::Numeric(format!("resistance {r_s} is not finite")));
    }
    let predicted = fit.predict(r_s);
    let nominal = thresholds.nominal_capacity_ah;
    let class = if predicted >= thresholds.pass_fraction * nominal {
        ScreeningClass::Pass
    } else if predicted < thresholds.reject_fraction * nominal {
        ScreeningClass::Reject
    } else {
        ScreeningClass::Review
    };
    let extrapolated = r_s < fit.r_min || r_s > fit.r_max;
    if extrapolated {
        log::warn!(
            "r_s = {r_s} outside fitted range {}..{}; prediction extrapolated",
            fit.r_min,
            fit.r_max
        );
    }
    Ok(ScreeningDecision {
        r_s,
        predicted_capacity_ah: predicted,
        predicted_fraction: predicted / nominal,
        class,
        thresholds: thresholds.clone(),
        extrapolated,
    })
}
