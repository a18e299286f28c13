use std::io::Write;

use super::experiment::{prepare, run_prepared, Instance, RoundRecord};
use super::{ExperimentConfig, HarnessError};
use crate::pruning::{coverage_stats, Budget};

/// Gap thresholds reported by every sweep.
pub const THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

pub const SWEEP_HEADER: &str = "scenario,psi_min,s_min,gamma_max,psi_star,s_star,max_gamma,rounds,final_gap,\
first_1e-2,first_1e-4,first_1e-6,settled_1e-2,settled_1e-4,settled_1e-6";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub budget: Budget,
}

impl Scenario {
    fn new(psi_min: usize, s_min: usize, gamma_max: Option<usize>) -> Self {
        let label = match gamma_max {
            Some(g) => format!("psi{psi_min}_s{s_min}_g{g}"),
            None => format!("psi{psi_min}_s{s_min}"),
        };
        Self { label, budget: Budget { psi_min, s_min, gamma_max } }
    }
}

/// `(ψ*, S*) ∈ {(1, 4), (3, 4), (10, 1)}` with unbounded staleness.
pub fn fig1_scenarios() -> Vec<Scenario> {
    vec![Scenario::new(1, 4, None), Scenario::new(3, 4, None), Scenario::new(10, 1, None)]
}

/// `(ψ*, γ_max) ∈ {1, 2} × {2, 4}` at `S* = 4`.
pub fn fig2_scenarios() -> Vec<Scenario> {
    vec![Scenario::new(1, 4, Some(2)), Scenario::new(1, 4, Some(4)), Scenario::new(2, 4, Some(2)), Scenario::new(2, 4, Some(4))]
}

/// First round whose gap is at most `threshold`.
pub fn rounds_to(records: &[RoundRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.gap <= threshold).map(|r| r.round)
}

/// First round from which the gap stays at most `threshold` through the end of the run.
pub fn settled_at(records: &[RoundRecord], threshold: f64) -> Option<usize> {
    match records.iter().rposition(|r| r.gap > threshold) {
        None => records.first().map(|r| r.round),
        Some(k) => records.get(k + 1).map(|r| r.round),
    }
}

/// `a` reached the threshold, and no later than `b` (which may never reach it).
pub fn no_slower(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a <= b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// `b` reached the threshold and `a` either never did or did so later.
pub fn strictly_slower(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(a), Some(b)) => a > b,
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub scenario: Scenario,
    pub psi_star: usize,
    pub s_star: usize,
    pub max_gamma: usize,
    pub records: Vec<RoundRecord>,
    /// [`rounds_to`] for each of [`THRESHOLDS`].
    pub first: [Option<usize>; 3],
    /// [`settled_at`] for each of [`THRESHOLDS`].
    pub settled: [Option<usize>; 3],
}

impl CellResult {
    pub fn first_to(&self, threshold: f64) -> Option<usize> {
        rounds_to(&self.records, threshold)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub instance: Instance,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, label: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.scenario.label == label)
    }
}

fn run_cell(inst: &Instance, base: &ExperimentConfig, scenario: &Scenario) -> Result<CellResult, HarnessError> {
    let cfg = ExperimentConfig { timing: false, ..base.with_budget(scenario.budget) };
    let (records, traj) = run_prepared(inst, &cfg)?;
    let (psi_star, s_star, max_gamma) = if traj.masks.is_empty() {
        (cfg.workers, cfg.regions, 0)
    } else {
        let stats = coverage_stats(&traj.final_state.ledger)?;
        (stats.psi_star, stats.s_star, stats.max_gamma())
    };
    Ok(CellResult {
        scenario: scenario.clone(),
        psi_star,
        s_star,
        max_gamma,
        first: THRESHOLDS.map(|t| rounds_to(&records, t)),
        settled: THRESHOLDS.map(|t| settled_at(&records, t)),
        records,
    })
}

/// One run per scenario on a shared instance (same data, warm start, reference
/// and seed). Timing is disabled so the output is reproducible.
pub fn run_sweep(base: &ExperimentConfig, scenarios: &[Scenario]) -> Result<SweepResult, HarnessError> {
    base.validate()?;
    for s in scenarios {
        base.with_budget(s.budget).validate()?;
    }
    let instance = prepare(base)?;
    let cells: Result<Vec<CellResult>, HarnessError> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            scenarios.par_iter().map(|s| run_cell(&instance, base, s)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            scenarios.iter().map(|s| run_cell(&instance, base, s)).collect()
        }
    };
    Ok(SweepResult { cells: cells?, instance })
}

pub fn sweep_fig1(base: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    run_sweep(base, &fig1_scenarios())
}

pub fn sweep_fig2(base: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    run_sweep(base, &fig2_scenarios())
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "NA".to_string(), |r| r.to_string())
}

/// One row per scenario; `NA` marks a threshold never reached.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for c in &result.cells {
        let b = c.scenario.budget;
        let last = c.records.last().map_or(f64::NAN, |r| r.gap);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:e},{},{},{},{},{},{}",
            c.scenario.label,
            b.psi_min,
            b.s_min,
            b.gamma_max.map_or_else(|| "inf".to_string(), |g| g.to_string()),
            c.psi_star,
            c.s_star,
            c.max_gamma,
            c.records.len().saturating_sub(1),
            last,
            opt(c.first[0]),
            opt(c.first[1]),
            opt(c.first[2]),
            opt(c.settled[0]),
            opt(c.settled[1]),
            opt(c.settled[2]),
        )?;
    }
    Ok(())
}
