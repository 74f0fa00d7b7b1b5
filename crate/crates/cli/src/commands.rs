//! Subcommand pipelines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use cflow_core::container::save_field;
use cflow_core::energy::energy_report;
use cflow_core::flow::{run_flow_with, write_csv, ExitReason};
use cflow_core::geometry::{q_total, yamabe_quotient};

use crate::checks::run_checks;
use crate::config::RunConfig;
use crate::error::{exit, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Invariants,
    Energy,
    Flow,
    Check,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Invariants {
    pub kappa: f64,
    pub yamabe_quotient: f64,
    pub scalar_min: f64,
    pub scalar_max: f64,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_FIELD_FILE: &str = "final.cfld";

pub fn snapshot_file(step: usize) -> String {
    format!("snapshot_{step:08}.cfld")
}

/// Runs `cmd`; JSON results and the check table go to `stdout`, files under
/// `output_dir` (flow only). Returns the process exit code.
pub fn dispatch(
    cmd: Command,
    cfg: &RunConfig,
    output_dir: Option<&Path>,
    stdout: &mut impl Write,
) -> Result<i32, CliError> {
    let sc = cfg.scenario()?;
    match cmd {
        Command::Invariants => {
            let scal = sc.background.curvature().scal.values();
            let inv = Invariants {
                kappa: q_total(&sc.background),
                yamabe_quotient: yamabe_quotient(&sc.background),
                scalar_min: scal.iter().cloned().fold(f64::INFINITY, f64::min),
                scalar_max: scal.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            };
            writeln!(stdout, "{}", serde_json::to_string_pretty(&inv)?)?;
            Ok(exit::SUCCESS)
        }
        Command::Energy => {
            let report = energy_report(&sc.initial_map, &sc.background)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(exit::SUCCESS)
        }
        Command::Flow => {
            let dir = cfg.output_dir(output_dir);
            fs::create_dir_all(&dir)?;
            let outcome = run_flow_with(sc.initial_map.clone(), &sc.background, &sc.flow, |state| {
                save_field(dir.join(snapshot_file(state.step)), state.u.disp())
            })?;
            write_csv(BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?), &outcome.state.history)?;
            save_field(dir.join(FINAL_FIELD_FILE), outcome.state.u.disp())?;
            let summary = outcome.summary();
            let text = serde_json::to_string_pretty(&summary)?;
            fs::write(dir.join(SUMMARY_FILE), format!("{text}\n"))?;
            writeln!(stdout, "{text}")?;
            if let Some(why) = &outcome.divergence {
                eprintln!("flow diverged: {why}");
            }
            Ok(match summary.exit_reason {
                ExitReason::Converged => exit::SUCCESS,
                ExitReason::Diverged => exit::DIVERGED,
                ExitReason::TimeUp => exit::TIME_UP,
            })
        }
        Command::Check => {
            let report = run_checks(&sc)?;
            write!(stdout, "{}", report.table())?;
            Ok(if report.all_passed() { exit::SUCCESS } else { exit::CHECK_FAILED })
        }
    }
}
