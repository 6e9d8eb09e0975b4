//! Seeded Monte Carlo experiments and their CSV summaries.
//!
//! Every trial derives its signal, graph, matrix and noise seeds from the
//! master seed and the trial index, so results do not depend on scheduling.

mod config;
mod csv;
mod run;

pub use self::config::ExperimentConfig;
pub(crate) use self::config::snr_list;
pub use self::csv::{read_summary_csv, summary_csv_string, write_summary_csv, SUMMARY_HEADER};
pub use self::run::{
    draw_instance, run_experiment, run_trial, summarize, sweep, CellSummary, ExperimentOutput, SweepGrid, TrialInstance,
    TrialRecord,
};

/// Parse one SNR token: a number in dB or `inf`.
pub fn parse_snr(text: &str) -> Option<f64> {
    snr_list::parse(text)
}
