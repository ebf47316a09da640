//! A full simulated TS4 log through the CSV format, and fault injection.

use cellscreen::ecm::{CellGroupParams, PackModel};
use cellscreen::ingest::{read_log, read_log_from, validate_log, write_log, write_log_to, FindingKind};
use cellscreen::log::TimeSeriesLog;
use cellscreen::protocol::{build_standard_sequence, run_protocol, RunConfig, StandardSequence};

fn ts4_log() -> TimeSeriesLog {
    let mut p = PackModel::uniform("P07", &CellGroupParams::fresh(), 0.004, 0.05).unwrap();
    run_protocol(&mut p, &build_standard_sequence(StandardSequence::Ts4), &RunConfig::default()).unwrap()
}

#[test]
fn ts4_log_round_trips_losslessly() {
    let log = ts4_log();
    // about three hours at 10 Hz
    assert!(log.len() > 100_000, "{} rows", log.len());
    assert!(validate_log(&log).is_empty());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ts4.csv");
    write_log(&log, &path).unwrap();
    let back = read_log(&path).unwrap();
    assert_eq!(back.metadata, log.metadata);
    assert_eq!(back.len(), log.len());
    for (a, b) in log.samples.iter().zip(&back.samples) {
        assert!((a.t - b.t).abs() <= 1e-9);
        assert!((a.i_pack - b.i_pack).abs() <= 1e-9);
        for c in 0..5 {
            assert!((a.v[c] - b.v[c]).abs() <= 1e-9);
        }
        assert_eq!(a.step_index, b.step_index);
    }
}

#[test]
fn gap_inside_an_interrupt_is_reported_with_its_index() {
    let mut log = ts4_log();
    // third zero-current window that follows a load
    let mut seen = 0;
    let mut target = None;
    for k in 1..log.samples.len() {
        if log.samples[k].i_pack == 0.0 && log.samples[k - 1].i_pack != 0.0 {
            seen += 1;
            if seen == 3 {
                target = Some(k + 50);
                break;
            }
        }
    }
    let k = target.unwrap();
    log.samples.drain(k..k + 2);

    let findings = validate_log(&log);
    assert_eq!(findings.len(), 1, "{findings:?}");
    let f = &findings[0];
    assert_eq!(f.row, k);
    assert_eq!(f.interrupt, Some(3));
    match f.kind {
        FindingKind::IrregularSpacing { expected_s, actual_s } => {
            assert!((expected_s - 0.1).abs() < 1e-9);
            assert!((actual_s - 0.3).abs() < 1e-6);
        }
        ref other => panic!("{other:?}"),
    }

    // the reader accepts the gapped file but validation still flags it
    let mut buf = Vec::new();
    write_log_to(&log, &mut buf).unwrap();
    let back = read_log_from(buf.as_slice(), "mem").unwrap();
    assert_eq!(validate_log(&back).len(), 1);
}
