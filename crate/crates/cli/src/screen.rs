use std::path::Path;

use cellscreen::analysis::{
    default_min_delta_i, fit_capacity_resistance, nearest_to_voltage, rs_voltage_profile, screen_cell, Method,
    ScreeningDecision, ScreeningFit,
};
use cellscreen::ingest::read_log;
use cellscreen::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::analyze::SummaryRow;
use crate::config::CampaignConfig;
use crate::files::{create_dir, read_csv, read_json, write_csv, write_json, Layout};

pub const FIT_POINT_HEADER: &[&str] = &["pack_id", "cell_index", "r_s", "capacity_ah", "fitted", "residual"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub pack_id: String,
    pub cell_index: usize,
    pub r_s: f64,
    pub capacity_ah: f64,
    pub fitted: f64,
    pub residual: f64,
}

/// Points for the configured cells, in summary order. Rows missing either
/// value are skipped.
pub fn fit_points(summary: &[SummaryRow], cells: &[usize]) -> Vec<(String, usize, f64, f64)> {
    summary
        .iter()
        .filter(|r| cells.contains(&r.cell_index))
        .filter_map(|r| Some((r.pack_id.clone(), r.cell_index, r.r_s_ci?, r.capacity_ah?)))
        .collect()
}

/// Fits capacity against charge-interrupt resistance from
/// `results/summary.csv` and writes `fit/fit.json` and `fit/fit_points.csv`.
pub fn fit(cfg: &CampaignConfig, results: Option<&Path>) -> Result<(ScreeningFit, Vec<FitPoint>)> {
    let layout = Layout::new(&cfg.out_dir);
    let dir = results.map_or_else(|| layout.results(), Path::to_path_buf);
    let summary: Vec<SummaryRow> = read_csv(&dir.join("summary.csv"))?;
    let points = fit_points(&summary, &cfg.analysis.cells);
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.2, p.3)).collect();
    let fit = fit_capacity_resistance(&pairs)?;
    let rows: Vec<FitPoint> = points
        .into_iter()
        .zip(&fit.residuals)
        .map(|((pack_id, cell_index, r_s, capacity_ah), &residual)| FitPoint {
            pack_id,
            cell_index,
            r_s,
            capacity_ah,
            fitted: capacity_ah - residual,
            residual,
        })
        .collect();
    create_dir(&layout.fit_dir())?;
    write_json(&layout.fit(), &fit)?;
    write_csv(&layout.fit_dir().join("fit_points.csv"), FIT_POINT_HEADER, &rows)?;
    Ok((fit, rows))
}

pub enum ScreenInput<'a> {
    Resistance(f64),
    /// A charge log; the interrupt nearest the screening voltage is used.
    Log(&'a Path),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRecord {
    pub pack_id: Option<String>,
    pub cell_index: Option<usize>,
    pub source: &'static str,
    pub v_terminal: Option<f64>,
    pub decision: ScreeningDecision,
}

/// Screens a resistance, or each configured cell of a charge log, against a
/// saved fit. Writes `screen/decision.json`.
pub fn screen(cfg: &CampaignConfig, fit_path: Option<&Path>, input: ScreenInput) -> Result<Vec<ScreenRecord>> {
    let layout = Layout::new(&cfg.out_dir);
    let fit_file = fit_path.map_or_else(|| layout.fit(), Path::to_path_buf);
    let fit: ScreeningFit = read_json(&fit_file)?;
    let thresholds = cfg.analysis.thresholds();

    let mut records = Vec::new();
    match input {
        ScreenInput::Resistance(r) => records.push(ScreenRecord {
            pack_id: None,
            cell_index: None,
            source: "r_s",
            v_terminal: None,
            decision: screen_cell(r, &fit, &thresholds)?,
        }),
        ScreenInput::Log(path) => {
            let log = read_log(path)?;
            let min_delta_i = cfg
                .analysis
                .min_delta_i
                .unwrap_or_else(|| default_min_delta_i(log.metadata.nominal_capacity_ah));
            for &cell in &cfg.analysis.cells {
                let profile = rs_voltage_profile(&log, cell, Method::Ci, min_delta_i)?;
                let Some(e) = nearest_to_voltage(&profile, cfg.analysis.screen_voltage) else {
                    log::warn!("{}: no charge interrupt for cell {cell}", path.display());
                    continue;
                };
                records.push(ScreenRecord {
                    pack_id: Some(log.metadata.pack_id.clone()),
                    cell_index: Some(cell),
                    source: "log",
                    v_terminal: Some(e.v_terminal),
                    decision: screen_cell(e.r_s, &fit, &thresholds)?,
                });
            }
            if records.is_empty() {
                return Err(Error::Insufficient(format!(
                    "{}: no charge interrupts on cells {:?}",
                    path.display(),
                    cfg.analysis.cells
                )));
            }
        }
    }
    create_dir(&layout.screen())?;
    write_json(&layout.screen().join("decision.json"), &records)?;
    Ok(records)
}
