//! Estimators that run on a [`TimeSeriesLog`](crate::log::TimeSeriesLog),
//! simulated or recorded.
//!
//! Ohmic resistance is read from a single pair of consecutive samples
//! straddling a current step, `r_s = (v_after - v_before) / (i_after -
//! i_before)`. The sampling interval is therefore part of what is measured
//! and travels with every estimate.

mod capacity;
mod profile;
mod regression;
mod screening;
mod steps;

use serde::{Deserialize, Serialize};

pub use capacity::{coulomb_count_capacity, CapacityEstimate};
pub use profile::{
    compare_methods, nearest_to_voltage, rs_voltage_profile, soc_independence_check,
    FlatnessReport, PackMethodSummary, TrendReport, DEFAULT_FLATNESS_TOLERANCE,
};
pub use regression::{fit_capacity_resistance, ScreeningFit};
pub use screening::{screen_cell, ScreeningClass, ScreeningDecision, ScreeningThresholds};
pub use steps::{detect_current_steps, estimate_rs, CurrentStepEvent, ResistanceEstimate};

/// Upper coulomb-counting set point.
pub const CAPACITY_V_MAX: f64 = 4.1;
/// Lower coulomb-counting set point.
pub const CAPACITY_V_MIN: f64 = 2.95;
/// Above this terminal voltage `r_s` is treated as SOC independent.
pub const FLAT_REGION_V: f64 = 3.6;
/// Screening reads the charge interrupt closest to this terminal voltage.
pub const SCREEN_VOLTAGE_V: f64 = 4.0;
/// Cells whose voltage taps carry no load current.
pub const INTERIOR_CELLS: [usize; 3] = [2, 3, 4];

/// Which test an interrupt came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Discharge interrupt.
    #[serde(rename = "DI")]
    Di,
    /// Charge interrupt.
    #[serde(rename = "CI")]
    Ci,
    #[serde(rename = "HPPC")]
    Hppc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Di => "DI",
            Method::Ci => "CI",
            Method::Hppc => "HPPC",
        }
    }

    /// True if the method interrupts a charging current.
    pub fn interrupts_charge(self) -> bool {
        matches!(self, Method::Ci)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A quarter of the C/10 current: ignores sensor noise, still sees C/20 steps.
pub fn default_min_delta_i(nominal_capacity_ah: f64) -> f64 {
    0.25 * nominal_capacity_ah / 10.0
}

pub(crate) fn check_cell(cell_index: usize) -> crate::Result<()> {
    if (1..=crate::ecm::GROUPS_PER_PACK).contains(&cell_index) {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!(
            "cell index {cell_index} outside 1..=5"
        )))
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
