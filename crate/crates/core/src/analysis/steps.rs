use serde::{Deserialize, Serialize};

use super::{check_cell, Method};
use crate::ecm::GROUPS_PER_PACK;
use crate::error::{Error, Result};
use crate::log::TimeSeriesLog;

/// A current change between two consecutive samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentStepEvent {
    /// Index of the last sample before the step; the first sample after it
    /// is `sample_index + 1`.
    pub sample_index: usize,
    /// Time of the first sample after the step.
    pub t: f64,
    pub i_before: f64,
    pub i_after: f64,
    pub v_before: [f64; GROUPS_PER_PACK],
    pub v_after: [f64; GROUPS_PER_PACK],
    pub dt_sample: f64,
}

impl CurrentStepEvent {
    pub fn delta_i(&self) -> f64 {
        self.i_after - self.i_before
    }

    /// The same step read backwards.
    pub fn reversed(&self) -> Self {
        Self {
            i_before: self.i_after,
            i_after: self.i_before,
            v_before: self.v_after,
            v_after: self.v_before,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceEstimate {
    pub cell_index: usize,
    pub r_s: f64,
    pub method: Method,
    /// Voltage of the sample just before the step.
    pub v_terminal: f64,
    pub dt_sample: f64,
    pub delta_i: f64,
    pub t: f64,
}

pub fn detect_current_steps(log: &TimeSeriesLog, min_delta_i: f64) -> Vec<CurrentStepEvent> {
    log.samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1].i_pack - w[0].i_pack).abs() >= min_delta_i)
        .map(|(k, w)| CurrentStepEvent {
            sample_index: k,
            t: w[1].t,
            i_before: w[0].i_pack,
            i_after: w[1].i_pack,
            v_before: w[0].v,
            v_after: w[1].v,
            dt_sample: w[1].t - w[0].t,
        })
        .collect()
}

/// `r_s = (v_after - v_before) / (i_after - i_before)` on one cell channel.
pub fn estimate_rs(event: &CurrentStepEvent, cell_index: usize, method: Method) -> Result<ResistanceEstimate> {
    check_cell(cell_index)?;
    let delta_i = event.delta_i();
    if delta_i == 0.0 || !delta_i.is_finite() {
        return Err(Error::Domain(format!(
            "current step at t = {} s has delta_i = {delta_i}; event misdetected",
            event.t
        )));
    }
    let c = cell_index - 1;
    Ok(ResistanceEstimate {
        cell_index,
        r_s: (event.v_after[c] - event.v_before[c]) / delta_i,
        method,
        v_terminal: event.v_before[c],
        dt_sample: event.dt_sample,
        delta_i,
        t: event.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::{LogMetadata, Sample};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn event(v0: f64, v1: f64, i0: f64, i1: f64) -> CurrentStepEvent {
        CurrentStepEvent {
            sample_index: 0,
            t: 1.0,
            i_before: i0,
            i_after: i1,
            v_before: [v0; 5],
            v_after: [v1; 5],
            dt_sample: 0.1,
        }
    }

    #[test]
    fn interrupt_arithmetic() {
        let e = estimate_rs(&event(3.900, 3.960, -2.0, 0.0), 3, Method::Di).unwrap();
        assert_abs_diff_eq!(e.r_s, 0.030, epsilon = 1e-12);
        assert_eq!(e.v_terminal, 3.9);
        assert_eq!(e.dt_sample, 0.1);
        assert_eq!(e.delta_i, 2.0);
    }

    #[test]
    fn flat_voltage_gives_zero() {
        let e = estimate_rs(&event(3.9, 3.9, 1.0, 0.0), 1, Method::Ci).unwrap();
        assert_eq!(e.r_s, 0.0);
    }

    #[test]
    fn zero_delta_i_is_an_error() {
        assert!(matches!(
            estimate_rs(&event(3.9, 3.95, 1.0, 1.0), 1, Method::Ci),
            Err(Error::Domain(_))
        ));
        assert!(estimate_rs(&event(3.9, 3.95, 1.0, 0.0), 6, Method::Ci).is_err());
    }

    #[test]
    fn constant_current_has_no_steps() {
        let log = TimeSeriesLog {
            metadata: LogMetadata { pack_id: "A".into(), sequence_name: "cc".into(), nominal_capacity_ah: 5.0 },
            samples: (0..100)
                .map(|k| Sample { t: k as f64, i_pack: -1.0, v: [3.8; 5], step_index: 0 })
                .collect(),
        };
        assert!(detect_current_steps(&log, 0.125).is_empty());
    }

    proptest! {
        #[test]
        fn reversal_and_scaling_leave_rs_unchanged(
            v0 in 3.0f64..4.2, dv in -0.2f64..0.2,
            i0 in -5.0f64..5.0, di in prop_oneof![-5.0f64..-0.05, 0.05f64..5.0],
            k in 0.01f64..100.0,
        ) {
            let e = event(v0, v0 + dv, i0, i0 + di);
            let r = estimate_rs(&e, 2, Method::Ci).unwrap().r_s;
            let back = estimate_rs(&e.reversed(), 2, Method::Ci).unwrap().r_s;
            prop_assert!((r - back).abs() <= 1e-12 * r.abs().max(1.0));
            let scaled = event(k * v0, k * (v0 + dv), k * i0, k * (i0 + di));
            let rk = estimate_rs(&scaled, 2, Method::Ci).unwrap().r_s;
            prop_assert!((r - rk).abs() <= 1e-9 * r.abs().max(1e-3));
        }
    }
}
