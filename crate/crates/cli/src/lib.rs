//! Campaign driver behind the `cellscreen` binary: simulate packs, analyze
//! their logs, fit capacity against resistance and screen new cells.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod config;
pub mod files;
pub mod report;
pub mod screen;
pub mod simulate;

use cellscreen::analysis::ScreeningFit;
use cellscreen::{Error, Result};

pub use analyze::analyze;
pub use config::{CampaignConfig, Overrides};
pub use report::report;
pub use screen::{fit, screen, ScreenInput};
pub use simulate::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_SAFETY_ABORT: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::InvalidParams(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Io { .. } => EXIT_FORMAT,
        Error::SafetyAbort { .. } => EXIT_SAFETY_ABORT,
        Error::Domain(_)
        | Error::Numeric(_)
        | Error::Range(_)
        | Error::Insufficient(_)
        | Error::Degenerate(_) => EXIT_NUMERIC,
    }
}

/// simulate, analyze, fit and report in one go.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<ScreeningFit> {
    simulate(cfg)?;
    analyze(cfg, None)?;
    let (fit, _) = fit(cfg, None)?;
    report(cfg)?;
    Ok(fit)
}
