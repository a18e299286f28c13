//! Configuration, experiment driver, figure sweeps and theory checks behind
//! the `danl` CLI.

mod config;
mod experiment;
mod sweep;
mod theory;

pub use config::{normalize_key, parse_pairs, ExperimentConfig, KEYS, SEED_ENV};
pub use experiment::{
    load_dataset, prepare, run_experiment, run_prepared, write_records, Instance, RoundRecord, CSV_HEADER,
    GAP_SLACK,
};
pub use sweep::{
    fig1_scenarios, fig2_scenarios, no_slower, rounds_to, run_sweep, settled_at, strictly_slower, sweep_fig1,
    sweep_fig2, write_sweep_csv, CellResult, Scenario, SweepResult, SWEEP_HEADER, THRESHOLDS,
};
pub use theory::{
    check_theory, contraction_battery, contraction_ratios, lemma1_battery, lemma1_trial, ContractionReport, Lemma1Report,
    Lemma1Trial, TheoryReport, BASIN_GAP, DIST_FLOOR, LEMMA1_SLACK,
};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::data::DataError;
use crate::linalg::LinalgError;
use crate::loss::LossError;
use crate::protocol::ProtocolError;
use crate::pruning::PruningError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Pruning(#[from] PruningError),
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    /// 1 for usage and input problems, 2 for numerical or constraint failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Io(_) | HarnessError::Data(_) => 1,
            HarnessError::Protocol(_)
            | HarnessError::Baseline(_)
            | HarnessError::Linalg(_)
            | HarnessError::Loss(_)
            | HarnessError::Pruning(_) => 2,
            HarnessError::Numerical(_) => 2,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
