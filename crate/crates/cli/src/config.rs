use std::path::{Path, PathBuf};

use cellscreen::analysis::{
    ScreeningThresholds, CAPACITY_V_MAX, CAPACITY_V_MIN, DEFAULT_FLATNESS_TOLERANCE, FLAT_REGION_V,
    SCREEN_VOLTAGE_V,
};
use cellscreen::ecm::{CellGroupParams, PackModel, PackParams, NOMINAL_PACK_CAPACITY_AH};
use cellscreen::fleet::{generate_fleet, manifest, AgingSpec, FleetManifest};
use cellscreen::protocol::StandardSequence;
use cellscreen::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT_DIR: &str = "cellscreen-out";
pub const DEFAULT_FLEET_SIZE: usize = 13;
/// End-tab resistance given to the default fleet's outer groups.
pub const DEFAULT_END_TAB_OHM: f64 = 0.005;

/// One campaign: what to simulate, where to write it, how to analyze it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Pack or fleet parameter file. Relative paths resolve against the
    /// directory of the config file. Absent means the default 13-pack fleet.
    pub params: Option<PathBuf>,
    /// `TS1`..`TS7` or `full`.
    pub sequence: String,
    pub out_dir: PathBuf,
    /// Fleet seed; overrides any seed inside the aging spec.
    pub seed: u64,
    pub dt_s: f64,
    pub analysis: AnalysisOptions,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            params: None,
            sequence: "full".into(),
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            seed: 4,
            dt_s: cellscreen::ecm::DEFAULT_DT_S,
            analysis: AnalysisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub v_max: f64,
    pub v_min: f64,
    /// Flatness is judged on profile points at or above this voltage.
    pub v_threshold: f64,
    pub flatness_tolerance: f64,
    /// Step detection threshold in amps; defaults to a quarter of C/10.
    pub min_delta_i: Option<f64>,
    /// Cells feeding the fit and the screen.
    pub cells: Vec<usize>,
    pub screen_voltage: f64,
    pub pass_fraction: f64,
    pub reject_fraction: Option<f64>,
    pub nominal_capacity_ah: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            v_max: CAPACITY_V_MAX,
            v_min: CAPACITY_V_MIN,
            v_threshold: FLAT_REGION_V,
            flatness_tolerance: DEFAULT_FLATNESS_TOLERANCE,
            min_delta_i: None,
            cells: cellscreen::analysis::INTERIOR_CELLS.to_vec(),
            screen_voltage: SCREEN_VOLTAGE_V,
            pass_fraction: 0.8,
            reject_fraction: None,
            nominal_capacity_ah: NOMINAL_PACK_CAPACITY_AH,
        }
    }
}

impl AnalysisOptions {
    pub fn thresholds(&self) -> ScreeningThresholds {
        let mut t = ScreeningThresholds::new(self.pass_fraction, self.nominal_capacity_ah);
        if let Some(r) = self.reject_fraction {
            t.reject_fraction = r;
        }
        t
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sequence: Option<String>,
    pub v_max: Option<f64>,
    pub v_min: Option<f64>,
    pub v_threshold: Option<f64>,
    pub cells: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut CampaignConfig) {
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.sequence {
            cfg.sequence = v.clone();
        }
        if let Some(v) = self.v_max {
            cfg.analysis.v_max = v;
        }
        if let Some(v) = self.v_min {
            cfg.analysis.v_min = v;
        }
        if let Some(v) = self.v_threshold {
            cfg.analysis.v_threshold = v;
        }
        if let Some(v) = &self.cells {
            cfg.analysis.cells = v.clone();
        }
    }
}

fn usage(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Usage(format!("{field}: {msg}"))
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))?;
        if let Some(p) = &cfg.params {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.params = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    /// Loads `path` if given, applies overrides and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sequence_kind(&self) -> Result<StandardSequence> {
        self.sequence.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.sequence_kind()
            .map_err(|_| usage("sequence", format!("unknown sequence {:?}; expected TS1..TS7 or full", self.sequence)))?;
        if !(self.dt_s > 0.0 && self.dt_s <= cellscreen::ecm::MAX_DT_S) {
            return Err(usage("dt_s", format!("{} outside (0, 1] s", self.dt_s)));
        }
        let a = &self.analysis;
        if !(a.v_max.is_finite() && a.v_min.is_finite() && a.v_max > a.v_min) {
            return Err(usage("v_max/v_min", format!("need v_max > v_min, got {} / {}", a.v_max, a.v_min)));
        }
        if !a.v_threshold.is_finite() {
            return Err(usage("v_threshold", "must be finite"));
        }
        if !(a.flatness_tolerance >= 0.0) {
            return Err(usage("flatness_tolerance", "must be >= 0"));
        }
        if let Some(d) = a.min_delta_i {
            if !(d > 0.0 && d.is_finite()) {
                return Err(usage("min_delta_i", format!("{d} must be > 0")));
            }
        }
        if a.cells.is_empty() {
            return Err(usage("cells", "empty cell list"));
        }
        for (k, &c) in a.cells.iter().enumerate() {
            if !(1..=5).contains(&c) || a.cells[..k].contains(&c) {
                return Err(usage("cells", format!("cell {c} out of 1..=5 or repeated")));
            }
        }
        if !(a.pass_fraction > 0.0 && a.pass_fraction <= 1.0) {
            return Err(usage("pass_fraction", format!("{} outside (0, 1]", a.pass_fraction)));
        }
        if !(a.nominal_capacity_ah > 0.0 && a.nominal_capacity_ah.is_finite()) {
            return Err(usage("nominal_capacity_ah", "must be > 0"));
        }
        a.thresholds()
            .validate()
            .map_err(|e| usage("reject_fraction", e))?;
        Ok(())
    }
}

/// Contents of a parameter file: one pack, a list of packs, or a fleet to
/// generate.
#[derive(Debug, Clone, PartialEq)]
pub enum PackSource {
    Pack(PackParams),
    Packs(Vec<PackParams>),
    Fleet(FleetSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub n: usize,
    #[serde(default = "CellGroupParams::fresh")]
    pub base: CellGroupParams,
    #[serde(default = "default_aging")]
    pub aging: AgingSpec,
    #[serde(default = "default_fleet_soc")]
    pub initial_soc: f64,
}

fn default_aging() -> AgingSpec {
    AgingSpec::screening_study(0)
}

fn default_fleet_soc() -> f64 {
    0.5
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            n: DEFAULT_FLEET_SIZE,
            base: CellGroupParams {
                r_tab: DEFAULT_END_TAB_OHM,
                ..CellGroupParams::fresh()
            },
            aging: default_aging(),
            initial_soc: default_fleet_soc(),
        }
    }
}

impl PackSource {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_format(path, e))?;
        let parsed = if value.is_array() {
            serde_json::from_value(value).map(PackSource::Packs)
        } else if value.get("n").is_some() {
            serde_json::from_value(value).map(PackSource::Fleet)
        } else {
            serde_json::from_value(value).map(PackSource::Pack)
        };
        parsed.map_err(|e| Error::Usage(format!("params {}: {e}", path.display())))
    }

    /// Builds the packs to simulate. The fleet variant also yields its
    /// ground-truth manifest.
    pub fn build(self, seed: u64) -> Result<(Vec<PackModel>, Option<FleetManifest>)> {
        match self {
            PackSource::Pack(p) => Ok((vec![p.into_model()?], None)),
            PackSource::Packs(ps) => {
                if ps.is_empty() {
                    return Err(Error::Usage("params: empty pack list".into()));
                }
                let models = ps.into_iter().map(PackParams::into_model).collect::<Result<Vec<_>>>()?;
                for (k, m) in models.iter().enumerate() {
                    if models[..k].iter().any(|o| o.id == m.id) {
                        return Err(Error::Usage(format!("params: duplicate pack id {:?}", m.id)));
                    }
                }
                Ok((models, None))
            }
            PackSource::Fleet(f) => {
                let aging = AgingSpec { seed, ..f.aging };
                let fleet = generate_fleet(f.n, &f.base, &aging, f.initial_soc)?;
                let m = manifest(&fleet, &f.base, &aging);
                Ok((fleet.into_iter().map(|p| p.model).collect(), Some(m)))
            }
        }
    }
}

pub(crate) fn json_format(path: &Path, e: serde_json::Error) -> Error {
    Error::Format {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    }
}

/// Packs named by the config, or the default fleet.
pub fn campaign_packs(cfg: &CampaignConfig) -> Result<(Vec<PackModel>, Option<FleetManifest>)> {
    let source = match &cfg.params {
        Some(p) => PackSource::load(p)?,
        None => PackSource::Fleet(FleetSpec::default()),
    };
    source.build(cfg.seed)
}
