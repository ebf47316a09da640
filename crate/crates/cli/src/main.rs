use std::path::PathBuf;
use std::process::ExitCode;

use cellscreen::Result;
use cellscreen_cli::{exit_code, CampaignConfig, Overrides, ScreenInput};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellscreen", version, about = "Simulate, analyze and screen 2P5S battery packs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Campaign config (JSON). Flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Fleet generator seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// TS1..TS7 or full.
    #[arg(long, value_name = "TSk|full")]
    sequence: Option<String>,
    /// Upper capacity set point, volts.
    #[arg(long)]
    vmax: Option<f64>,
    /// Lower capacity set point, volts.
    #[arg(long)]
    vmin: Option<f64>,
    /// Flatness threshold, volts.
    #[arg(long = "v-threshold")]
    v_threshold: Option<f64>,
    /// Cells used for fitting and screening, e.g. 2,3,4.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<usize>>,
}

impl Common {
    fn config(&self) -> Result<CampaignConfig> {
        let o = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            sequence: self.sequence.clone(),
            v_max: self.vmax,
            v_min: self.vmin,
            v_threshold: self.v_threshold,
            cells: self.cells.clone(),
        };
        CampaignConfig::resolve(self.config.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the test sequence on every pack and write logs.
    Simulate(Common),
    /// Extract resistance profiles and capacities from logs.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Log file or directory (default: <out>/logs).
        #[arg(long, value_name = "PATH")]
        logs: Option<PathBuf>,
    },
    /// Fit capacity against charge-interrupt resistance.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Results directory (default: <out>/results).
        #[arg(long, value_name = "DIR")]
        results: Option<PathBuf>,
    },
    /// Classify a cell from a resistance value or a charge log.
    Screen {
        #[command(flatten)]
        common: Common,
        /// Fit document (default: <out>/fit/fit.json).
        #[arg(long, value_name = "PATH")]
        fit: Option<PathBuf>,
        /// Ohmic resistance to classify
        #[arg(long, value_name = "OHM", conflicts_with = "log", required_unless_present = "log")]
        rs: Option<f64>,
        /// Charge log with at least one interrupt
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
    },
    /// Write plot-ready tables from analysis results.
    Report(Common),
    /// simulate, analyze, fit and report.
    Run(Common),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let written = cellscreen_cli::simulate(&c.config()?)?;
            println!("wrote {} logs", written.len());
        }
        Command::Analyze { common, logs } => {
            let out = cellscreen_cli::analyze(&common.config()?, logs.as_deref())?;
            println!(
                "{} resistance points, {} capacity estimates, {} findings",
                out.profiles.len(),
                out.capacities.len(),
                out.findings.len()
            );
        }
        Command::Fit { common, results } => {
            let (fit, _) = cellscreen_cli::fit(&common.config()?, results.as_deref())?;
            println!(
                "capacity = {} * r_s + {}  (R^2 = {:.4}, n = {})",
                fit.slope, fit.intercept, fit.r_squared, fit.n
            );
        }
        Command::Screen { common, fit, rs, log } => {
            let cfg = common.config()?;
            let input = match (&rs, &log) {
                (Some(r), _) => ScreenInput::Resistance(*r),
                (None, Some(p)) => ScreenInput::Log(p),
                (None, None) => unreachable!("clap requires --rs or --log"),
            };
            for r in cellscreen_cli::screen(&cfg, fit.as_deref(), input)? {
                let d = &r.decision;
                println!(
                    "{}cell {}: r_s = {:.6} ohm -> {:.4} A·h ({:.1} %) {}{}",
                    r.pack_id.map(|p| format!("{p} ")).unwrap_or_default(),
                    r.cell_index.map_or("-".to_string(), |c| c.to_string()),
                    d.r_s,
                    d.predicted_capacity_ah,
                    100.0 * d.predicted_fraction,
                    d.class.as_str(),
                    if d.extrapolated { " (extrapolated)" } else { "" }
                );
            }
        }
        Command::Report(c) => {
            for p in cellscreen_cli::report(&c.config()?)? {
                println!("{}", p.display());
            }
        }
        Command::Run(c) => {
            let fit = cellscreen_cli::run_campaign(&c.config()?)?;
            println!(
                "capacity = {} * r_s + {}  (R^2 = {:.4}, n = {})",
                fit.slope, fit.intercept, fit.r_squared, fit.n
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CELLSCREEN_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
