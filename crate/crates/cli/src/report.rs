//! Plot-ready tables assembled from analysis results.

use cellscreen::analysis::{Method, ScreeningFit};
use cellscreen::Result;
use serde::Serialize;

use crate::analyze::{CapacityRow, ProfileRow, SummaryRow};
use crate::config::CampaignConfig;
use crate::files::{create_dir, read_csv, read_json, write_csv, Layout};

#[derive(Serialize)]
struct RateRow<'a> {
    pack_id: &'a str,
    sequence: &'a str,
    cell_index: usize,
    c_rate: f64,
    capacity_ah: f64,
}

#[derive(Serialize)]
struct ProfilePoint<'a> {
    pack_id: &'a str,
    cell_index: usize,
    method: Method,
    v_terminal: f64,
    r_s: f64,
    dt_sample: f64,
}

#[derive(Serialize)]
struct CellRow<'a> {
    pack_id: &'a str,
    cell_index: usize,
    r_s_ci: Option<f64>,
    v_terminal_ci: Option<f64>,
}

#[derive(Serialize)]
struct CapacityResistanceRow<'a> {
    pack_id: &'a str,
    cell_index: usize,
    r_s: f64,
    capacity_ah: f64,
    fitted: Option<f64>,
}

/// Writes under `report/`:
/// - `capacity_vs_rate.csv`: windowed capacity against discharge rate;
/// - `rs_profiles.csv`: CI and HPPC resistance against terminal voltage;
/// - `rs_by_cell.csv`: screening resistance of every cell position;
/// - `capacity_vs_rs.csv`: fit cells' capacity against resistance, with the
///   fitted line when `fit/fit.json` exists.
pub fn report(cfg: &CampaignConfig) -> Result<Vec<std::path::PathBuf>> {
    let layout = Layout::new(&cfg.out_dir);
    let results = layout.results();
    let capacities: Vec<CapacityRow> = read_csv(&results.join("capacity.csv"))?;
    let profiles: Vec<ProfileRow> = read_csv(&results.join("profiles.csv"))?;
    let summary: Vec<SummaryRow> = read_csv(&results.join("summary.csv"))?;
    let fit: Option<ScreeningFit> = if layout.fit().exists() {
        Some(read_json(&layout.fit())?)
    } else {
        None
    };

    let dir = layout.report();
    create_dir(&dir)?;
    let mut written = Vec::new();

    let mut rate: Vec<RateRow> = capacities
        .iter()
        .map(|c| RateRow {
            pack_id: &c.pack_id,
            sequence: &c.sequence,
            cell_index: c.cell_index,
            c_rate: c.c_rate,
            capacity_ah: c.capacity_ah,
        })
        .collect();
    rate.sort_by(|a, b| {
        (a.pack_id, a.cell_index)
            .cmp(&(b.pack_id, b.cell_index))
            .then(a.c_rate.total_cmp(&b.c_rate))
    });
    let p = dir.join("capacity_vs_rate.csv");
    write_csv(&p, &["pack_id", "sequence", "cell_index", "c_rate", "capacity_ah"], &rate)?;
    written.push(p);

    let prof: Vec<ProfilePoint> = profiles
        .iter()
        .filter(|r| matches!(r.method, Method::Ci | Method::Hppc))
        .map(|r| ProfilePoint {
            pack_id: &r.pack_id,
            cell_index: r.cell_index,
            method: r.method,
            v_terminal: r.v_terminal,
            r_s: r.r_s,
            dt_sample: r.dt_sample,
        })
        .collect();
    let p = dir.join("rs_profiles.csv");
    write_csv(&p, &["pack_id", "cell_index", "method", "v_terminal", "r_s", "dt_sample"], &prof)?;
    written.push(p);

    let cells: Vec<CellRow> = summary
        .iter()
        .map(|s| CellRow {
            pack_id: &s.pack_id,
            cell_index: s.cell_index,
            r_s_ci: s.r_s_ci,
            v_terminal_ci: s.v_terminal_ci,
        })
        .collect();
    let p = dir.join("rs_by_cell.csv");
    write_csv(&p, &["pack_id", "cell_index", "r_s_ci", "v_terminal_ci"], &cells)?;
    written.push(p);

    let cr: Vec<CapacityResistanceRow> = summary
        .iter()
        .filter(|s| cfg.analysis.cells.contains(&s.cell_index))
        .filter_map(|s| {
            let (r_s, capacity_ah) = (s.r_s_ci?, s.capacity_ah?);
            Some(CapacityResistanceRow {
                pack_id: &s.pack_id,
                cell_index: s.cell_index,
                r_s,
                capacity_ah,
                fitted: fit.as_ref().map(|f| f.predict(r_s)),
            })
        })
        .collect();
    let p = dir.join("capacity_vs_rs.csv");
    write_csv(&p, &["pack_id", "cell_index", "r_s", "capacity_ah", "fitted"], &cr)?;
    written.push(p);
    Ok(written)
}
