use serde::{Deserialize, Serialize};

use super::check_cell;
use crate::error::{Error, Result};
use crate::log::TimeSeriesLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub cell_index: usize,
    pub capacity_ah: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Mean discharge current over the window divided by nominal capacity.
    pub c_rate: f64,
    pub t_start: f64,
    pub t_end: f64,
}

/// Charge passed between the first sample at or below `v_max` and the next
/// sample at or below `v_min` within one uninterrupted discharge (trapezoidal
/// rule). The cell must sit at or above `v_max` just before that discharge
/// begins; a voltage that falls below `v_max` as soon as current flows still
/// counts as crossing it.
pub fn coulomb_count_capacity(
    log: &TimeSeriesLog,
    cell_index: usize,
    v_max: f64,
    v_min: f64,
) -> Result<CapacityEstimate> {
    check_cell(cell_index)?;
    if !(v_max > v_min) {
        return Err(Error::Domain(format!("set points need v_max > v_min, got {v_max} / {v_min}")));
    }
    let c = cell_index - 1;
    let s = &log.samples;

    let mut seen_hi = f64::NEG_INFINITY;
    let mut seen_lo = f64::INFINITY;
    let mut k = 0;
    while k < s.len() {
        if s[k].i_pack >= 0.0 {
            k += 1;
            continue;
        }
        let start = k;
        while k < s.len() && s[k].i_pack < 0.0 {
            k += 1;
        }
        let end = k; // exclusive
        let onset_v = if start > 0 { s[start - 1].v[c] } else { s[start].v[c] };
        for x in &s[start..end] {
            seen_hi = seen_hi.max(x.v[c]);
            seen_lo = seen_lo.min(x.v[c]);
        }
        seen_hi = seen_hi.max(onset_v);
        if onset_v < v_max {
            continue;
        }
        let Some(a) = (start..end).find(|&j| s[j].v[c] <= v_max) else {
            continue;
        };
        let Some(b) = (a + 1..end).find(|&j| s[j].v[c] <= v_min) else {
            continue;
        };
        let mut amp_s = 0.0;
        for j in a..b {
            amp_s += 0.5 * (s[j].i_pack.abs() + s[j + 1].i_pack.abs()) * (s[j + 1].t - s[j].t);
        }
        let duration = s[b].t - s[a].t;
        let capacity_ah = amp_s / 3600.0;
        let mean_i = if duration > 0.0 { amp_s / duration } else { s[a].i_pack.abs() };
        return Ok(CapacityEstimate {
            cell_index,
            capacity_ah,
            v_max,
            v_min,
            c_rate: mean_i / log.metadata.nominal_capacity_ah,
            t_start: s[a].t,
            t_end: s[b].t,
        });
    }
    if seen_hi == f64::NEG_INFINITY {
        return Err(Error::Range(format!(
            "cell {cell_index}: log contains no discharge"
        )));
    }
    Err(Error::Range(format!(
        "cell {cell_index}: no discharge crosses {v_max} V then {v_min} V \
         (discharge voltages spanned {seen_lo:.4}..{seen_hi:.4} V)"
    )))
}
