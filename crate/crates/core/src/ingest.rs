//! Cycler log CSV: `#`-prefixed `key: value` metadata lines followed by a
//! fixed header and one sample per row.
//!
//! ```text
//! # pack_id: A
//! # sequence_name: TS4
//! # nominal_capacity_ah: 5
//! # sign_convention: charge_positive
//! time_s,i_pack_a,v_cell1,v_cell2,v_cell3,v_cell4,v_cell5,step_index
//! 0,0,3.75,3.75,3.75,3.75,3.75,0
//! ```
//!
//! Numbers are written in shortest round-trip form, so a write/read cycle is
//! exact. Files declaring `discharge_positive` are flipped to the internal
//! charge-positive convention on read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::ecm::{NOMINAL_PACK_CAPACITY_AH, GROUPS_PER_PACK};
use crate::error::{Error, Result};
use crate::log::{LogMetadata, Sample, SignConvention, TimeSeriesLog};

pub const COLUMNS: [&str; 8] = [
    "time_s", "i_pack_a", "v_cell1", "v_cell2", "v_cell3", "v_cell4", "v_cell5", "step_index",
];

/// Spacing tolerance inside one step.
pub const SPACING_TOLERANCE_S: f64 = 1e-6;

const UNKNOWN: &str = "unknown";

pub fn write_log(log: &TimeSeriesLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    write_log_to(log, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_log_to<W: Write>(log: &TimeSeriesLog, w: &mut W) -> std::io::Result<()> {
    let m = &log.metadata;
    writeln!(w, "# pack_id: {}", m.pack_id)?;
    writeln!(w, "# sequence_name: {}", m.sequence_name)?;
    writeln!(w, "# nominal_capacity_ah: {}", m.nominal_capacity_ah)?;
    writeln!(w, "# sign_convention: {}", SignConvention::ChargePositive.as_str())?;
    writeln!(w, "{}", COLUMNS.join(","))?;
    for s in &log.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.t, s.i_pack, s.v[0], s.v[1], s.v[2], s.v[3], s.v[4], s.step_index
        )?;
    }
    Ok(())
}

pub fn read_log(path: impl AsRef<Path>) -> Result<TimeSeriesLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_log_from(file, &path.display().to_string())
}

/// `source` only labels warnings.
pub fn read_log_from<R: Read>(mut reader: R, source: &str) -> Result<TimeSeriesLog> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io(source, e))?;

    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let Some(body) = line.strip_prefix('#') else {
            break;
        };
        match body.split_once(':') {
            Some((key, value)) => {
                meta.insert(key.trim().to_string(), value.trim().to_string());
            }
            None => {
                return Err(Error::Format {
                    line: k + 1,
                    message: format!("metadata line is not `key: value`: {line:?}"),
                })
            }
        }
    }
    let mut take = |key: &str, default: &str| -> String {
        meta.remove(key).unwrap_or_else(|| {
            log::warn!("{source}: missing metadata `{key}`, using {default:?}");
            default.to_string()
        })
    };
    let pack_id = take("pack_id", UNKNOWN);
    let sequence_name = take("sequence_name", UNKNOWN);
    let capacity_text = take("nominal_capacity_ah", &NOMINAL_PACK_CAPACITY_AH.to_string());
    let sign_text = take("sign_convention", SignConvention::ChargePositive.as_str());
    for key in meta.keys() {
        log::debug!("{source}: ignoring metadata `{key}`");
    }
    let nominal_capacity_ah: f64 = capacity_text.parse().map_err(|_| Error::Format {
        line: 0,
        message: format!("nominal_capacity_ah {capacity_text:?} is not a number"),
    })?;
    let sign = SignConvention::parse(&sign_text).ok_or_else(|| Error::Format {
        line: 0,
        message: format!("unknown sign_convention {sign_text:?}"),
    })?;

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(e, 0))?.clone();
    let header_line = header.position().map_or(0, |p| p.line() as usize);
    if header.iter().map(str::trim).ne(COLUMNS.iter().copied()) {
        return Err(Error::Format {
            line: header_line,
            message: format!(
                "expected columns {}, found {}",
                COLUMNS.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut samples: Vec<Sample> = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| csv_error(e, header_line))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = samples.len();
        if record.len() != COLUMNS.len() {
            return Err(Error::Format {
                line,
                message: format!(
                    "data row {row}: expected {} columns, found {}",
                    COLUMNS.len(),
                    record.len()
                ),
            });
        }
        let num = |k: usize| -> Result<f64> {
            let field = record[k].trim();
            match field.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Format {
                    line,
                    message: format!("data row {row}: {} = {field:?} is not a finite number", COLUMNS[k]),
                }),
            }
        };
        let t = num(0)?;
        let mut i_pack = num(1)?;
        if sign == SignConvention::DischargePositive {
            i_pack = -i_pack;
        }
        let mut v = [0.0; GROUPS_PER_PACK];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = num(2 + c)?;
        }
        let step_field = record[7].trim();
        let step_index: usize = step_field.parse().map_err(|_| Error::Format {
            line,
            message: format!("data row {row}: step_index {step_field:?} is not a non-negative integer"),
        })?;
        if let Some(prev) = samples.last() {
            if !(t > prev.t) {
                return Err(Error::Format {
                    line,
                    message: format!(
                        "data row {row}: time not strictly increasing ({} s after {} s)",
                        t, prev.t
                    ),
                });
            }
        }
        samples.push(Sample {
            t,
            i_pack,
            v,
            step_index,
        });
    }

    Ok(TimeSeriesLog {
        metadata: LogMetadata {
            pack_id,
            sequence_name,
            nominal_capacity_ah,
        },
        samples,
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Format {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    NonMonotoneTime,
    DuplicateTime,
    /// Spacing inside a step differs from the step's nominal period.
    IrregularSpacing { expected_s: f64, actual_s: f64 },
    NonFiniteValue,
    StepIndexDecreased,
    Metadata,
}

impl FindingKind {
    pub fn name(&self) -> &'static str {
        match self {
            FindingKind::NonMonotoneTime => "non_monotone_time",
            FindingKind::DuplicateTime => "duplicate_time",
            FindingKind::IrregularSpacing { .. } => "irregular_spacing",
            FindingKind::NonFiniteValue => "non_finite_value",
            FindingKind::StepIndexDecreased => "step_index_decreased",
            FindingKind::Metadata => "metadata",
        }
    }
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    /// Sample index (0-based) where the anomaly is observed.
    pub row: usize,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: FindingKind,
    /// 1-based index of the zero-current window the row falls in, if any.
    pub interrupt: Option<usize>,
    pub message: String,
}

/// Lists every violated log invariant. Empty iff the log is valid.
pub fn validate_log(log: &TimeSeriesLog) -> Vec<Finding> {
    let mut findings = Vec::new();
    let cap = log.metadata.nominal_capacity_ah;
    if !(cap.is_finite() && cap > 0.0) {
        findings.push(Finding {
            row: 0,
            severity: Severity::Error,
            kind: FindingKind::Metadata,
            interrupt: None,
            message: format!("nominal_capacity_ah {cap} must be > 0"),
        });
    }

    let samples = &log.samples;
    let interrupts = interrupt_labels(samples);
    let nominal = nominal_spacings(samples);

    for (k, s) in samples.iter().enumerate() {
        if !s.t.is_finite() || !s.i_pack.is_finite() || s.v.iter().any(|v| !v.is_finite()) {
            findings.push(Finding {
                row: k,
                severity: Severity::Error,
                kind: FindingKind::NonFiniteValue,
                interrupt: interrupts[k],
                message: format!("row {k}: non-finite value"),
            });
        }
        if k == 0 {
            continue;
        }
        let prev = &samples[k - 1];
        let dt = s.t - prev.t;
        if s.step_index < prev.step_index {
            findings.push(Finding {
                row: k,
                severity: Severity::Error,
                kind: FindingKind::StepIndexDecreased,
                interrupt: interrupts[k],
                message: format!("row {k}: step index {} after {}", s.step_index, prev.step_index),
            });
        }
        if dt == 0.0 {
            findings.push(Finding {
                row: k,
                severity: Severity::Error,
                kind: FindingKind::DuplicateTime,
                interrupt: interrupts[k],
                message: format!("row {k}: duplicated timestamp {} s", s.t),
            });
            continue;
        }
        if dt < 0.0 || !dt.is_finite() {
            findings.push(Finding {
                row: k,
                severity: Severity::Error,
                kind: FindingKind::NonMonotoneTime,
                interrupt: interrupts[k],
                message: format!("row {k}: time goes from {} s to {} s", prev.t, s.t),
            });
            continue;
        }
        if let Some(&expected) = nominal.get(&s.step_index) {
            if (dt - expected).abs() > SPACING_TOLERANCE_S {
                let where_ = match interrupts[k] {
                    Some(n) => format!(" inside interrupt {n}"),
                    None => String::new(),
                };
                findings.push(Finding {
                    row: k,
                    severity: Severity::Warning,
                    kind: FindingKind::IrregularSpacing {
                        expected_s: expected,
                        actual_s: dt,
                    },
                    interrupt: interrupts[k],
                    message: format!(
                        "row {k}: spacing {dt} s in step {} where {expected} s expected{where_}",
                        s.step_index
                    ),
                });
            }
        }
    }
    findings
}

/// Numbers each zero-current window that follows a non-zero current.
fn interrupt_labels(samples: &[Sample]) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut count = 0;
    let mut inside = false;
    let mut seen_current = false;
    for s in samples {
        if s.i_pack == 0.0 {
            if seen_current && !inside {
                count += 1;
                inside = true;
            }
        } else {
            inside = false;
            seen_current = true;
        }
        out.push(if inside { Some(count) } else { None });
    }
    out
}

/// Median sample spacing of each step; a spacing belongs to the later sample.
fn nominal_spacings(samples: &[Sample]) -> BTreeMap<usize, f64> {
    let mut per_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt.is_finite() && dt > 0.0 {
            per_step.entry(w[1].step_index).or_default().push(dt);
        }
    }
    per_step
        .into_iter()
        .map(|(k, mut d)| {
            d.sort_by(f64::total_cmp);
            (k, d[d.len() / 2])
        })
        .collect()
}
