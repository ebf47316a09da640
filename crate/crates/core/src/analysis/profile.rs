use serde::{Deserialize, Serialize};

use super::steps::{detect_current_steps, estimate_rs, ResistanceEstimate};
use super::{check_cell, median, Method};
use crate::error::{Error, Result};
use crate::log::TimeSeriesLog;

/// Default relative spread allowed by [`soc_independence_check`].
pub const DEFAULT_FLATNESS_TOLERANCE: f64 = 0.10;

/// One estimate per interrupt of the method's current direction, ordered by
/// terminal voltage. An interrupt is a step from a load current to (near)
/// zero after which a load of the same sign resumes. The end of a charge or
/// discharge, where the current never comes back, is not an interrupt.
pub fn rs_voltage_profile(
    log: &TimeSeriesLog,
    cell_index: usize,
    method: Method,
    min_delta_i: f64,
) -> Result<Vec<ResistanceEstimate>> {
    check_cell(cell_index)?;
    let events = detect_current_steps(log, min_delta_i);
    let mut out = Vec::new();
    for (k, event) in events.iter().enumerate() {
        let interrupted = event.i_after.abs() < min_delta_i;
        let direction_ok = if method.interrupts_charge() {
            event.i_before > 0.0
        } else {
            event.i_before < 0.0
        };
        if !(interrupted && direction_ok) {
            continue;
        }
        let resumed = events[k + 1..]
            .iter()
            .find(|e| e.i_after.abs() >= min_delta_i)
            .is_some_and(|e| e.i_after.signum() == event.i_before.signum());
        if resumed {
            out.push(estimate_rs(event, cell_index, method)?);
        }
    }
    if out.is_empty() {
        log::debug!(
            "{}/{}: no {method} interrupts for cell {cell_index}",
            log.metadata.pack_id,
            log.metadata.sequence_name
        );
    }
    out.sort_by(|a, b| a.v_terminal.total_cmp(&b.v_terminal));
    Ok(out)
}

/// The estimate whose terminal voltage is closest to `target_v`.
pub fn nearest_to_voltage(profile: &[ResistanceEstimate], target_v: f64) -> Option<&ResistanceEstimate> {
    profile
        .iter()
        .min_by(|a, b| (a.v_terminal - target_v).abs().total_cmp(&(b.v_terminal - target_v).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub v_threshold: f64,
    pub n_points: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    /// `(max - min) / median` over points at or above the threshold.
    pub spread: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn soc_independence_check(
    profile: &[ResistanceEstimate],
    v_threshold: f64,
    tolerance: f64,
) -> Result<FlatnessReport> {
    let mut r: Vec<f64> = profile
        .iter()
        .filter(|p| p.v_terminal >= v_threshold)
        .map(|p| p.r_s)
        .collect();
    if r.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} profile point(s) at or above {v_threshold} V; need 2",
            r.len()
        )));
    }
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(&mut r);
    let spread = if max == min { 0.0 } else { (max - min) / med };
    Ok(FlatnessReport {
        v_threshold,
        n_points: r.len(),
        min,
        max,
        median: med,
        spread,
        tolerance,
        pass: spread <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackMethodSummary {
    pub pack_id: String,
    pub median_first: f64,
    pub median_second: f64,
    pub dt_first: f64,
    pub dt_second: f64,
}

/// Cross-pack agreement of two resistance methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub first: Method,
    pub second: Method,
    pub packs: Vec<PackMethodSummary>,
    /// Every profile of both methods was taken at the same sampling interval.
    pub comparable: bool,
    /// Packs sort into the same order by median r_s under both methods.
    pub rank_agreement: bool,
}

/// `packs` holds `(pack id, first-method profile, second-method profile)`,
/// all for the same cell.
pub fn compare_methods(packs: &[(&str, &[ResistanceEstimate], &[ResistanceEstimate])]) -> Result<TrendReport> {
    let Some((_, a0, b0)) = packs.first() else {
        return Err(Error::Insufficient("no packs to compare".into()));
    };
    let (Some(fa), Some(fb)) = (a0.first(), b0.first()) else {
        return Err(Error::Insufficient("empty profile".into()));
    };
    let (first, second) = (fa.method, fb.method);
    let reference_dt = fa.dt_sample;

    let mut comparable = true;
    let mut summaries = Vec::with_capacity(packs.len());
    for &(id, a, b) in packs {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Insufficient(format!("pack {id}: empty profile")));
        }
        for p in a.iter().chain(b.iter()) {
            if (p.dt_sample - reference_dt).abs() > 1e-9 {
                comparable = false;
            }
        }
        let mut ra: Vec<f64> = a.iter().map(|p| p.r_s).collect();
        let mut rb: Vec<f64> = b.iter().map(|p| p.r_s).collect();
        summaries.push(PackMethodSummary {
            pack_id: id.to_string(),
            median_first: median(&mut ra),
            median_second: median(&mut rb),
            dt_first: a[0].dt_sample,
            dt_second: b[0].dt_sample,
        });
    }
    if !comparable {
        log::warn!("method comparison mixes sampling intervals; ranks are not comparable");
    }
    let order = |key: fn(&PackMethodSummary) -> f64| {
        let mut idx: Vec<usize> = (0..summaries.len()).collect();
        idx.sort_by(|&i, &j| key(&summaries[i]).total_cmp(&key(&summaries[j])).then(i.cmp(&j)));
        idx
    };
    let rank_agreement = order(|s| s.median_first) == order(|s| s.median_second);
    Ok(TrendReport {
        first,
        second,
        packs: summaries,
        comparable,
        rank_agreement,
    })
}
