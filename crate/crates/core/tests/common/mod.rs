#![allow(dead_code)]

use cellscreen::ecm::{CellGroupParams, OcvCurve, PackModel};
use cellscreen::protocol::{ProtocolStep, TestSequence};

/// Inverts a piecewise-linear OCV table by scanning its segments.
pub fn soc_at_ocv(curve: &OcvCurve, v: f64) -> f64 {
    let pts: Vec<(f64, f64)> = curve.points().collect();
    assert!(v >= pts[0].1 && v <= pts[pts.len() - 1].1, "{v} V outside the table");
    for w in pts.windows(2) {
        let ((s0, v0), (s1, v1)) = (w[0], w[1]);
        if v <= v1 {
            return s0 + (s1 - s0) * (v - v0) / (v1 - v0);
        }
    }
    unreachable!()
}

pub fn single_step(name: &str, step: ProtocolStep) -> TestSequence {
    TestSequence {
        name: name.into(),
        steps: vec![step],
        inter_step_rest_s: 1800.0,
    }
}

pub fn pack(group: &CellGroupParams, end_tab_ohm: f64, soc: f64) -> PackModel {
    PackModel::uniform("T", group, end_tab_ohm, soc).unwrap()
}

/// Zero-current windows that follow a load: (first zero index, length).
pub fn zero_windows(currents: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut k = 1;
    while k < currents.len() {
        if currents[k] == 0.0 && currents[k - 1] != 0.0 {
            let start = k;
            while k < currents.len() && currents[k] == 0.0 {
                k += 1;
            }
            out.push((start, k - start));
        } else {
            k += 1;
        }
    }
    out
}
