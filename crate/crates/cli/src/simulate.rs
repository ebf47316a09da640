use std::path::PathBuf;

use cellscreen::ecm::PackParams;
use cellscreen::ingest::write_log;
use cellscreen::protocol::{
    build_standard_sequence, campaign_sequences, run_protocol, RunConfig, StandardSequence, TestSequence,
};
use cellscreen::{Error, Result};

use crate::config::{campaign_packs, CampaignConfig};
use crate::files::{create_dir, write_json, Layout};

pub fn sequences_for(kind: StandardSequence) -> Vec<TestSequence> {
    match kind {
        StandardSequence::FullCampaign => campaign_sequences(),
        k => vec![build_standard_sequence(k)],
    }
}

/// Runs the configured sequence on every pack and writes one log per pack
/// per test under `logs/<pack>/`. Any earlier `logs/` tree is replaced.
/// On a safety abort the partial log is kept as `<test>.partial.csv`.
pub fn simulate(cfg: &CampaignConfig) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(&cfg.out_dir);
    let sequences = sequences_for(cfg.sequence_kind()?);
    let (packs, manifest) = campaign_packs(cfg)?;

    create_dir(&layout.root)?;
    let logs = layout.logs();
    if logs.exists() {
        std::fs::remove_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    }
    let params: Vec<PackParams> = packs.iter().map(PackParams::from_model).collect();
    write_json(&layout.packs(), &params)?;
    if let Some(m) = &manifest {
        write_json(&layout.fleet_manifest(), m)?;
    }

    let run = RunConfig {
        dt: cfg.dt_s,
        ..RunConfig::default()
    };
    let mut written = Vec::new();
    for mut pack in packs {
        let dir = layout.pack_logs(&pack.id);
        create_dir(&dir)?;
        for seq in &sequences {
            log::info!("simulating {} {}", pack.id, seq.name);
            match run_protocol(&mut pack, seq, &run) {
                Ok(log) => {
                    let path = dir.join(format!("{}.csv", seq.name));
                    write_log(&log, &path)?;
                    written.push(path);
                }
                Err(e @ Error::SafetyAbort { .. }) => {
                    if let Error::SafetyAbort { partial, .. } = &e {
                        let path = dir.join(format!("{}.partial.csv", seq.name));
                        write_log(partial, &path)?;
                        log::error!("{} {}: partial log kept at {}", pack.id, seq.name, path.display());
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(written)
}
