use std::collections::BTreeMap;
use std::path::Path;

use cellscreen::analysis::{
    compare_methods, coulomb_count_capacity, default_min_delta_i, nearest_to_voltage, rs_voltage_profile,
    soc_independence_check, Method, ResistanceEstimate, TrendReport,
};
use cellscreen::ecm::GROUPS_PER_PACK;
use cellscreen::ingest::{read_log, validate_log};
use cellscreen::log::TimeSeriesLog;
use cellscreen::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisOptions, CampaignConfig};
use crate::files::{create_dir, csv_files, write_csv, write_json, Layout};

pub const PROFILE_HEADER: &[&str] = &[
    "pack_id", "sequence", "method", "cell_index", "v_terminal", "r_s", "dt_sample", "delta_i", "t",
];
pub const CAPACITY_HEADER: &[&str] = &[
    "pack_id", "sequence", "cell_index", "capacity_ah", "c_rate", "v_max", "v_min", "t_start", "t_end",
];
pub const FLATNESS_HEADER: &[&str] = &[
    "pack_id", "sequence", "method", "cell_index", "v_threshold", "n_points", "min", "max", "median", "spread",
    "tolerance", "pass",
];
pub const FINDING_HEADER: &[&str] = &["pack_id", "sequence", "row", "severity", "kind", "interrupt", "message"];
pub const SUMMARY_HEADER: &[&str] = &[
    "pack_id", "cell_index", "r_s_ci", "v_terminal_ci", "capacity_ah", "capacity_c_rate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub pack_id: String,
    pub sequence: String,
    pub method: Method,
    pub cell_index: usize,
    pub v_terminal: f64,
    pub r_s: f64,
    pub dt_sample: f64,
    pub delta_i: f64,
    pub t: f64,
}

impl ProfileRow {
    fn estimate(&self) -> ResistanceEstimate {
        ResistanceEstimate {
            cell_index: self.cell_index,
            r_s: self.r_s,
            method: self.method,
            v_terminal: self.v_terminal,
            dt_sample: self.dt_sample,
            delta_i: self.delta_i,
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub pack_id: String,
    pub sequence: String,
    pub cell_index: usize,
    pub capacity_ah: f64,
    pub c_rate: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessRow {
    pub pack_id: String,
    pub sequence: String,
    pub method: Method,
    pub cell_index: usize,
    pub v_threshold: f64,
    pub n_points: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub spread: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FindingRow {
    pub pack_id: String,
    pub sequence: String,
    pub row: usize,
    pub severity: &'static str,
    pub kind: &'static str,
    pub interrupt: Option<usize>,
    pub message: String,
}

/// Per pack and cell: the screening resistance and the reference capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pack_id: String,
    pub cell_index: usize,
    /// Charge-interrupt estimate nearest the screening voltage.
    pub r_s_ci: Option<f64>,
    pub v_terminal_ci: Option<f64>,
    /// Capacity measured at the lowest discharge rate available.
    pub capacity_ah: Option<f64>,
    pub capacity_c_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellComparison {
    pub cell_index: usize,
    pub report: TrendReport,
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOutput {
    pub profiles: Vec<ProfileRow>,
    pub capacities: Vec<CapacityRow>,
    pub flatness: Vec<FlatnessRow>,
    pub findings: Vec<FindingRow>,
    pub summary: Vec<SummaryRow>,
    pub comparisons: Vec<CellComparison>,
}

/// The discharge-side method a log's interrupts belong to.
pub fn discharge_method(sequence_name: &str) -> Method {
    if sequence_name.eq_ignore_ascii_case("TS7") {
        Method::Hppc
    } else {
        Method::Di
    }
}

/// Profiles, capacities and flatness for one log, appended to `out`.
pub fn analyze_log(log: &TimeSeriesLog, opts: &AnalysisOptions, out: &mut AnalysisOutput) -> Result<()> {
    let meta = &log.metadata;
    let min_delta_i = opts
        .min_delta_i
        .unwrap_or_else(|| default_min_delta_i(meta.nominal_capacity_ah));

    for f in validate_log(log) {
        out.findings.push(FindingRow {
            pack_id: meta.pack_id.clone(),
            sequence: meta.sequence_name.clone(),
            row: f.row,
            severity: f.severity.as_str(),
            kind: f.kind.name(),
            interrupt: f.interrupt,
            message: f.message,
        });
    }

    for method in [Method::Ci, discharge_method(&meta.sequence_name)] {
        for cell in 1..=GROUPS_PER_PACK {
            let profile = rs_voltage_profile(log, cell, method, min_delta_i)?;
            if profile.is_empty() {
                continue;
            }
            match soc_independence_check(&profile, opts.v_threshold, opts.flatness_tolerance) {
                Ok(r) => out.flatness.push(FlatnessRow {
                    pack_id: meta.pack_id.clone(),
                    sequence: meta.sequence_name.clone(),
                    method,
                    cell_index: cell,
                    v_threshold: r.v_threshold,
                    n_points: r.n_points,
                    min: r.min,
                    max: r.max,
                    median: r.median,
                    spread: r.spread,
                    tolerance: r.tolerance,
                    pass: r.pass,
                }),
                Err(Error::Insufficient(m)) => log::debug!("{} {} {method} cell {cell}: {m}", meta.pack_id, meta.sequence_name),
                Err(e) => return Err(e),
            }
            out.profiles.extend(profile.into_iter().map(|e| ProfileRow {
                pack_id: meta.pack_id.clone(),
                sequence: meta.sequence_name.clone(),
                method: e.method,
                cell_index: e.cell_index,
                v_terminal: e.v_terminal,
                r_s: e.r_s,
                dt_sample: e.dt_sample,
                delta_i: e.delta_i,
                t: e.t,
            }));
        }
    }

    if !log.samples.iter().any(|s| s.i_pack < 0.0) {
        return Ok(());
    }
    // Only a log in which some cell spans the window is treated as a
    // capacity test; its other cells are reported as missing.
    let results: Vec<_> = (1..=GROUPS_PER_PACK)
        .map(|cell| (cell, coulomb_count_capacity(log, cell, opts.v_max, opts.v_min)))
        .collect();
    let capacity_test = results.iter().any(|(_, r)| r.is_ok());
    for (cell, result) in results {
        match result {
            Ok(c) => out.capacities.push(CapacityRow {
                pack_id: meta.pack_id.clone(),
                sequence: meta.sequence_name.clone(),
                cell_index: cell,
                capacity_ah: c.capacity_ah,
                c_rate: c.c_rate,
                v_max: c.v_max,
                v_min: c.v_min,
                t_start: c.t_start,
                t_end: c.t_end,
            }),
            Err(Error::Range(m)) if capacity_test => log::warn!("{} {}: {m}", meta.pack_id, meta.sequence_name),
            Err(Error::Range(m)) => log::debug!("{} {}: {m}", meta.pack_id, meta.sequence_name),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Pack-level summary and cross-pack method comparison, computed once all
/// logs have been analyzed.
pub fn summarize(out: &mut AnalysisOutput, opts: &AnalysisOptions) -> Result<()> {
    let mut packs: BTreeMap<&str, ()> = BTreeMap::new();
    for p in &out.profiles {
        packs.insert(&p.pack_id, ());
    }
    for c in &out.capacities {
        packs.insert(&c.pack_id, ());
    }

    let mut summary = Vec::new();
    for &pack in packs.keys() {
        for cell in 1..=GROUPS_PER_PACK {
            let ci: Vec<ResistanceEstimate> = out
                .profiles
                .iter()
                .filter(|p| p.pack_id == pack && p.cell_index == cell && p.method == Method::Ci)
                .map(ProfileRow::estimate)
                .collect();
            let near = nearest_to_voltage(&ci, opts.screen_voltage);
            let cap = out
                .capacities
                .iter()
                .filter(|c| c.pack_id == pack && c.cell_index == cell)
                .min_by(|a, b| a.c_rate.total_cmp(&b.c_rate));
            summary.push(SummaryRow {
                pack_id: pack.to_string(),
                cell_index: cell,
                r_s_ci: near.map(|e| e.r_s),
                v_terminal_ci: near.map(|e| e.v_terminal),
                capacity_ah: cap.map(|c| c.capacity_ah),
                capacity_c_rate: cap.map(|c| c.c_rate),
            });
        }
    }

    let mut comparisons = Vec::new();
    for &cell in &opts.cells {
        let mut per_pack = Vec::new();
        for &pack in packs.keys() {
            let pick = |m: Method| -> Vec<ResistanceEstimate> {
                out.profiles
                    .iter()
                    .filter(|p| p.pack_id == pack && p.cell_index == cell && p.method == m)
                    .map(ProfileRow::estimate)
                    .collect()
            };
            let (ci, hppc) = (pick(Method::Ci), pick(Method::Hppc));
            if !ci.is_empty() && !hppc.is_empty() {
                per_pack.push((pack, ci, hppc));
            }
        }
        if per_pack.is_empty() {
            continue;
        }
        let borrowed: Vec<(&str, &[ResistanceEstimate], &[ResistanceEstimate])> =
            per_pack.iter().map(|(p, a, b)| (*p, a.as_slice(), b.as_slice())).collect();
        comparisons.push(CellComparison {
            cell_index: cell,
            report: compare_methods(&borrowed)?,
        });
    }
    out.summary = summary;
    out.comparisons = comparisons;
    Ok(())
}

/// Analyzes every log below `logs` (default: the campaign's `logs/`) and
/// writes the result tables under `results/`.
pub fn analyze(cfg: &CampaignConfig, logs: Option<&Path>) -> Result<AnalysisOutput> {
    let layout = Layout::new(&cfg.out_dir);
    let root = logs.map_or_else(|| layout.logs(), Path::to_path_buf);
    let files = csv_files(&root)?;
    let mut out = AnalysisOutput::default();
    let mut analyzed = 0;
    for path in &files {
        if path.to_string_lossy().ends_with(".partial.csv") {
            log::warn!("skipping partial log {}", path.display());
            continue;
        }
        let log = read_log(path)?;
        analyze_log(&log, &cfg.analysis, &mut out)?;
        analyzed += 1;
    }
    if analyzed == 0 {
        return Err(Error::Usage(format!("no logs found under {}", root.display())));
    }
    summarize(&mut out, &cfg.analysis)?;
    write_results(&layout.results(), &out)?;
    Ok(out)
}

pub fn write_results(dir: &Path, out: &AnalysisOutput) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join("profiles.csv"), PROFILE_HEADER, &out.profiles)?;
    write_csv(&dir.join("capacity.csv"), CAPACITY_HEADER, &out.capacities)?;
    write_csv(&dir.join("flatness.csv"), FLATNESS_HEADER, &out.flatness)?;
    write_csv(&dir.join("findings.csv"), FINDING_HEADER, &out.findings)?;
    write_csv(&dir.join("summary.csv"), SUMMARY_HEADER, &out.summary)?;
    write_json(&dir.join("method_comparison.json"), &out.comparisons)
}
