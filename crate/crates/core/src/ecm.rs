//! Thevenin equivalent-circuit model of a lumped parallel cell group and of
//! the five-group series pack.
//!
//! A group is an OCV source in series with an ohmic resistance `r_s`, one
//! `r_1 || c_1` diffusion branch and, for the two end groups only, the
//! resistance `r_tab` of the current-carrying terminal tabs that sits inside
//! the voltage tap. Current is positive when charging.
//!
//! The RC branch is advanced with the exact zero-order-hold solution, which
//! is exact for the piecewise-constant currents every protocol produces.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const GROUPS_PER_PACK: usize = 5;

/// Default integration step, matching the fastest (10 Hz) logging rate.
pub const DEFAULT_DT_S: f64 = 0.1;

/// Largest integration step accepted by [`step_group`].
pub const MAX_DT_S: f64 = 1.0;

/// Nominal capacity of the 2P5S pack and of each lumped parallel pair.
pub const NOMINAL_PACK_CAPACITY_AH: f64 = 5.0;

const OCV_VOLTAGE_BOUNDS: (f64, f64) = (2.0, 4.5);

/// NMC-like open-circuit voltage, 21 knots at 5 % SOC spacing. Steep knee
/// below 3.4 V, floor low enough that a C/20 discharge crosses 2.95 V.
const DEFAULT_OCV_KNOTS: [(f64, f64); 21] = [
    (0.00, 2.80),
    (0.05, 3.20),
    (0.10, 3.40),
    (0.15, 3.50),
    (0.20, 3.56),
    (0.25, 3.60),
    (0.30, 3.63),
    (0.35, 3.66),
    (0.40, 3.69),
    (0.45, 3.72),
    (0.50, 3.75),
    (0.55, 3.79),
    (0.60, 3.83),
    (0.65, 3.87),
    (0.70, 3.92),
    (0.75, 3.97),
    (0.80, 4.01),
    (0.85, 4.05),
    (0.90, 4.09),
    (0.95, 4.14),
    (1.00, 4.20),
];

/// Monotone piecewise-linear OCV table. Serializes as `[[soc, volts], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct OcvCurve {
    soc: Vec<f64>,
    volts: Vec<f64>,
}

impl OcvCurve {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "OCV curve needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (k, &(s, v)) in points.iter().enumerate() {
            ensure_finite("OCV soc", s)?;
            ensure_finite("OCV voltage", v)?;
            if !(OCV_VOLTAGE_BOUNDS.0..=OCV_VOLTAGE_BOUNDS.1).contains(&v) {
                return Err(Error::InvalidParams(format!(
                    "OCV knot {k}: {v} V outside [{}, {}] V",
                    OCV_VOLTAGE_BOUNDS.0, OCV_VOLTAGE_BOUNDS.1
                )));
            }
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(Error::InvalidParams(
                "OCV curve must start at soc 0 and end at soc 1".into(),
            ));
        }
        for (k, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParams(format!(
                    "OCV soc not strictly increasing at knot {}",
                    k + 1
                )));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::InvalidParams(format!(
                    "OCV voltage not strictly increasing at knot {}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            soc: points.iter().map(|p| p.0).collect(),
            volts: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn default_nmc() -> Self {
        Self::new(&DEFAULT_OCV_KNOTS).expect("built-in OCV table is valid")
    }

    /// Piecewise-linear lookup, exact at knots.
    pub fn voltage_at(&self, soc: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::Domain(format!("soc {soc} outside [0, 1]")));
        }
        Ok(self.interpolate(soc))
    }

    // Caller guarantees soc in [0, 1].
    #[inline]
    fn interpolate(&self, soc: f64) -> f64 {
        let hi = self.soc.partition_point(|&s| s < soc);
        if hi == 0 {
            return self.volts[0];
        }
        if hi == self.soc.len() {
            return self.volts[hi - 1];
        }
        let (s0, s1) = (self.soc[hi - 1], self.soc[hi]);
        let (v0, v1) = (self.volts[hi - 1], self.volts[hi]);
        v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.soc.iter().copied().zip(self.volts.iter().copied())
    }

    pub fn min_voltage(&self) -> f64 {
        self.volts[0]
    }

    pub fn max_voltage(&self) -> f64 {
        self.volts[self.volts.len() - 1]
    }
}

impl Default for OcvCurve {
    fn default() -> Self {
        Self::default_nmc()
    }
}

impl TryFrom<Vec<[f64; 2]>> for OcvCurve {
    type Error = Error;

    fn try_from(points: Vec<[f64; 2]>) -> Result<Self> {
        let points: Vec<(f64, f64)> = points.into_iter().map(|[s, v]| (s, v)).collect();
        Self::new(&points)
    }
}

impl From<OcvCurve> for Vec<[f64; 2]> {
    fn from(curve: OcvCurve) -> Self {
        curve.points().map(|(s, v)| [s, v]).collect()
    }
}

pub fn ocv_lookup(curve: &OcvCurve, soc: f64) -> Result<f64> {
    curve.voltage_at(soc)
}

/// Electrical parameters of one lumped parallel pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGroupParams {
    pub capacity_ah: f64,
    pub r_s: f64,
    pub r_1: f64,
    pub c_1: f64,
    /// External current-path resistance inside the voltage tap.
    #[serde(default)]
    pub r_tab: f64,
    #[serde(default)]
    pub ocv: OcvCurve,
}

impl CellGroupParams {
    /// A fresh pair of 2.5 A·h cells lumped into one 5 A·h group.
    pub fn fresh() -> Self {
        Self {
            capacity_ah: NOMINAL_PACK_CAPACITY_AH,
            r_s: 0.020,
            r_1: 0.010,
            c_1: 5000.0,
            r_tab: 0.0,
            ocv: OcvCurve::default_nmc(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("capacity_ah", self.capacity_ah),
            ("r_s", self.r_s),
            ("r_1", self.r_1),
            ("c_1", self.c_1),
            ("r_tab", self.r_tab),
        ] {
            ensure_finite(name, value)?;
        }
        if self.capacity_ah <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "capacity_ah must be > 0, got {}",
                self.capacity_ah
            )));
        }
        if self.r_s < 0.0 || self.r_1 < 0.0 || self.r_tab < 0.0 {
            return Err(Error::InvalidParams(
                "r_s, r_1 and r_tab must be >= 0".into(),
            ));
        }
        if self.c_1 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "c_1 must be > 0, got {}",
                self.c_1
            )));
        }
        Ok(())
    }

    pub fn time_constant_s(&self) -> f64 {
        self.r_1 * self.c_1
    }

    /// Resistance seen by an instantaneous current step at the voltage tap.
    pub fn ohmic_resistance(&self) -> f64 {
        self.r_s + self.r_tab
    }

    /// Fraction of the RC branch gap that survives one step of length `dt`.
    #[inline]
    fn rc_decay(&self, dt: f64) -> f64 {
        if self.r_1 == 0.0 {
            0.0
        } else {
            (-dt / self.time_constant_s()).exp()
        }
    }
}

impl Default for CellGroupParams {
    fn default() -> Self {
        Self::fresh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellGroupState {
    pub soc: f64,
    pub v_rc: f64,
}

impl CellGroupState {
    pub fn at_rest(soc: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::Domain(format!("initial soc {soc} outside [0, 1]")));
        }
        Ok(Self { soc, v_rc: 0.0 })
    }
}

/// Advances one group by `dt` seconds under a constant `current` (A, positive
/// charging). Returns the new state and the voltage measured at the group tap.
pub fn step_group(
    state: CellGroupState,
    params: &CellGroupParams,
    current: f64,
    dt: f64,
) -> Result<(CellGroupState, f64)> {
    check_step_inputs(current, dt)?;
    ensure_finite("soc", state.soc)?;
    ensure_finite("v_rc", state.v_rc)?;
    Ok(advance(state, params, current, dt, params.rc_decay(dt)))
}

fn check_step_inputs(current: f64, dt: f64) -> Result<()> {
    ensure_finite("current", current)?;
    ensure_finite("dt", dt)?;
    if dt <= 0.0 || dt > MAX_DT_S {
        return Err(Error::Domain(format!(
            "dt {dt} s outside (0, {MAX_DT_S}] s"
        )));
    }
    Ok(())
}

#[inline]
fn advance(
    state: CellGroupState,
    params: &CellGroupParams,
    current: f64,
    dt: f64,
    decay: f64,
) -> (CellGroupState, f64) {
    let soc = (state.soc + current * dt / 3600.0 / params.capacity_ah).clamp(0.0, 1.0);
    let v_rc = state.v_rc * decay + current * params.r_1 * (1.0 - decay);
    let voltage = params.ocv.interpolate(soc) + current * params.ohmic_resistance() + v_rc;
    (CellGroupState { soc, v_rc }, voltage)
}

/// Terminal voltage of a group for a given state with `current` flowing now.
pub fn group_voltage(state: &CellGroupState, params: &CellGroupParams, current: f64) -> f64 {
    params.ocv.interpolate(state.soc.clamp(0.0, 1.0))
        + current * params.ohmic_resistance()
        + state.v_rc
}

/// Five lumped groups in series. Group `k` (1-based) is `groups[k - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackModel {
    pub id: String,
    pub nominal_capacity_ah: f64,
    groups: [CellGroupParams; GROUPS_PER_PACK],
    states: [CellGroupState; GROUPS_PER_PACK],
    decay_cache: Option<(f64, [f64; GROUPS_PER_PACK])>,
}

impl PackModel {
    pub fn new(
        id: impl Into<String>,
        nominal_capacity_ah: f64,
        groups: [CellGroupParams; GROUPS_PER_PACK],
        states: [CellGroupState; GROUPS_PER_PACK],
    ) -> Result<Self> {
        ensure_finite("nominal_capacity_ah", nominal_capacity_ah)?;
        if nominal_capacity_ah <= 0.0 {
            return Err(Error::InvalidParams(
                "nominal_capacity_ah must be > 0".into(),
            ));
        }
        for (k, g) in groups.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::InvalidParams(format!("group {}: {e}", k + 1)))?;
            if g.r_tab > 0.0 && k != 0 && k != GROUPS_PER_PACK - 1 {
                return Err(Error::InvalidParams(format!(
                    "group {} is interior and cannot carry tab resistance",
                    k + 1
                )));
            }
        }
        for (k, s) in states.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.soc) || !s.v_rc.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "group {} state out of range: {s:?}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            nominal_capacity_ah,
            groups,
            states,
            decay_cache: None,
        })
    }

    /// Five copies of `group` at rest at `soc`; the end groups get
    /// `end_tab_ohm`, the interior ones none (whatever `group.r_tab` says).
    pub fn uniform(
        id: impl Into<String>,
        group: &CellGroupParams,
        end_tab_ohm: f64,
        soc: f64,
    ) -> Result<Self> {
        let groups = std::array::from_fn(|k| {
            let mut g = group.clone();
            g.r_tab = if k == 0 || k == GROUPS_PER_PACK - 1 {
                end_tab_ohm
            } else {
                0.0
            };
            g
        });
        let state = CellGroupState::at_rest(soc)?;
        Self::new(id, NOMINAL_PACK_CAPACITY_AH, groups, [state; GROUPS_PER_PACK])
    }

    pub fn groups(&self) -> &[CellGroupParams; GROUPS_PER_PACK] {
        &self.groups
    }

    pub fn states(&self) -> &[CellGroupState; GROUPS_PER_PACK] {
        &self.states
    }

    pub fn set_states(&mut self, states: [CellGroupState; GROUPS_PER_PACK]) {
        self.states = states;
    }

    /// Measured tap voltages with `current` flowing at the present state.
    pub fn voltages(&self, current: f64) -> [f64; GROUPS_PER_PACK] {
        std::array::from_fn(|k| group_voltage(&self.states[k], &self.groups[k], current))
    }

    /// Series step: the same current through every group.
    pub fn step(&mut self, current: f64, dt: f64) -> Result<[f64; GROUPS_PER_PACK]> {
        check_step_inputs(current, dt)?;
        let decay = match self.decay_cache {
            Some((cached_dt, decay)) if cached_dt == dt => decay,
            _ => {
                let decay = std::array::from_fn(|k| self.groups[k].rc_decay(dt));
                self.decay_cache = Some((dt, decay));
                decay
            }
        };
        let mut out = [0.0; GROUPS_PER_PACK];
        for k in 0..GROUPS_PER_PACK {
            let (state, v) = advance(self.states[k], &self.groups[k], current, dt, decay[k]);
            self.states[k] = state;
            out[k] = v;
        }
        Ok(out)
    }
}

/// Functional form of [`PackModel::step`].
pub fn step_pack(
    pack: &PackModel,
    current: f64,
    dt: f64,
) -> Result<(PackModel, [f64; GROUPS_PER_PACK])> {
    let mut next = pack.clone();
    let v = next.step(current, dt)?;
    Ok((next, v))
}

/// File form of a pack: groups as a JSON array of five [`CellGroupParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackParams {
    pub id: String,
    #[serde(default = "default_nominal")]
    pub nominal_capacity_ah: f64,
    #[serde(default = "default_initial_soc")]
    pub initial_soc: f64,
    pub groups: Vec<CellGroupParams>,
}

fn default_nominal() -> f64 {
    NOMINAL_PACK_CAPACITY_AH
}

fn default_initial_soc() -> f64 {
    0.5
}

impl PackParams {
    pub fn into_model(self) -> Result<PackModel> {
        let n = self.groups.len();
        let groups: [CellGroupParams; GROUPS_PER_PACK] = self.groups.try_into().map_err(|_| {
            Error::InvalidParams(format!("pack needs exactly {GROUPS_PER_PACK} groups, got {n}"))
        })?;
        let state = CellGroupState::at_rest(self.initial_soc)?;
        PackModel::new(self.id, self.nominal_capacity_ah, groups, [state; GROUPS_PER_PACK])
    }

    pub fn from_model(pack: &PackModel) -> Self {
        Self {
            id: pack.id.clone(),
            nominal_capacity_ah: pack.nominal_capacity_ah,
            initial_soc: pack.states[0].soc,
            groups: pack.groups.to_vec(),
        }
    }
}
