use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{
    phase1_from_reports, hessian_report, server_aggregate, server_update, worker_round, Aggregation, GradientReport,
    HessianReport, ProtocolError, ServerConfig, ServerState,
};
use crate::loss::{LocalObjective, ModelVector};
use crate::pruning::{generate_masks, round_rng, Budget, MaskAssignment};

/// Offset separating data-draw streams from mask streams.
const DRAW_SEED_SALT: u64 = 0x5eed_d4a1_0000_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct DanlConfig {
    pub mu: f64,
    pub regions: usize,
    /// Phase II rounds `T`.
    pub rounds: usize,
    pub budget: Budget,
    pub aggregation: Aggregation,
    pub seed: u64,
    /// Per-round fraction of each shard a worker samples; `None` uses the full shard.
    pub subsample: Option<f64>,
    /// Record wall-clock time per round. Disable for byte-reproducible output.
    pub timing: bool,
}

impl DanlConfig {
    pub fn full_coverage(workers: usize, regions: usize, rounds: usize, mu: f64) -> Self {
        Self {
            mu,
            regions,
            rounds,
            budget: Budget::full(workers, regions),
            aggregation: Aggregation::AllWorkers,
            seed: 0,
            subsample: None,
            timing: false,
        }
    }
}

/// Coverage and timing of one round; round 0 is Phase I.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub regions_trained: usize,
    pub min_coverage: usize,
    pub gamma: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `ω⁰, ω¹, …, ω^{T+1}`; `iterates[t + 1]` is the model produced by round `t`.
    pub iterates: Vec<ModelVector>,
    pub rounds: Vec<RoundLog>,
    pub masks: Vec<MaskAssignment>,
    pub final_state: ServerState,
}

fn draw_rng(seed: u64, round: usize, workers: usize, worker: usize) -> ChaCha8Rng {
    round_rng(seed ^ DRAW_SEED_SALT, round * workers + worker)
}

fn worker_objective<L: LocalObjective + Clone>(obj: &L, cfg: &DanlConfig, round: usize, workers: usize, i: usize) -> L {
    match cfg.subsample {
        Some(f) if f < 1.0 => {
            obj.draw(f, &mut draw_rng(cfg.seed, round, workers, i)).unwrap_or_else(|| obj.clone())
        }
        _ => obj.clone(),
    }
}

fn phase1_reports<L>(objectives: &[L], cfg: &DanlConfig, w0: &[f64]) -> Result<Vec<HessianReport>, ProtocolError>
where
    L: LocalObjective + Clone + Sync,
{
    let n = objectives.len();
    let one = |(i, obj): (usize, &L)| hessian_report(&worker_objective(obj, cfg, 0, n, i), i, w0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        objectives.par_iter().enumerate().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        objectives.iter().enumerate().map(one).collect()
    }
}

fn phase2_reports<L>(
    objectives: &[L],
    cfg: &DanlConfig,
    state: &ServerState,
    masks: &MaskAssignment,
) -> Result<Vec<GradientReport>, ProtocolError>
where
    L: LocalObjective + Clone + Sync,
{
    let n = objectives.len();
    let round = state.round;
    let one = |(i, obj): (usize, &L)| {
        let regions = &masks.subsets[i];
        if regions.is_empty() {
            return Ok(GradientReport { worker: i, round, fragments: Vec::new() });
        }
        worker_round(&worker_objective(obj, cfg, round, n, i), i, round, &state.model, regions, &state.partition)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        objectives.par_iter().enumerate().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        objectives.iter().enumerate().map(one).collect()
    }
}

/// Phase I followed by `cfg.rounds` Phase II rounds. Deterministic given
/// `cfg.seed`; worker computations may run in parallel.
pub fn run<L>(objectives: &[L], w0: &[f64], cfg: &DanlConfig) -> Result<Trajectory, ProtocolError>
where
    L: LocalObjective + Clone + Sync,
{
    let n = objectives.len();
    if n == 0 {
        return Err(ProtocolError::NoWorkers);
    }
    cfg.budget.validate(n, cfg.regions)?;
    let clock = |start: Option<Instant>| start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
    let now = || cfg.timing.then(Instant::now);

    let start = now();
    let reports = phase1_reports(objectives, cfg, w0)?;
    let server_cfg = ServerConfig { mu: cfg.mu, regions: cfg.regions, aggregation: cfg.aggregation };
    let mut state = phase1_from_reports(&reports, &server_cfg, w0)?;
    let mut iterates = vec![w0.to_vec(), state.model.clone()];
    let mut rounds =
        vec![RoundLog { round: 0, regions_trained: cfg.regions, min_coverage: n, gamma: 0, elapsed_ms: clock(start) }];
    let mut masks = Vec::with_capacity(cfg.rounds);

    for _ in 0..cfg.rounds {
        let start = now();
        let assignment = generate_masks(n, cfg.regions, &cfg.budget, &state.ledger, cfg.seed)?;
        debug_assert_eq!(assignment.round, state.round);
        let reports = phase2_reports(objectives, cfg, &state, &assignment)?;
        let grad = server_aggregate(&mut state, &reports)?;
        state.ledger.update(&assignment)?;
        server_update(&mut state, &grad)?;

        let cov = state.ledger.history().last().expect("just recorded");
        rounds.push(RoundLog {
            round: assignment.round,
            regions_trained: cov.regions_trained(),
            min_coverage: cov.min_coverage(),
            gamma: cov.gamma,
            elapsed_ms: clock(start),
        });
        iterates.push(state.model.clone());
        masks.push(assignment);
    }

    Ok(Trajectory { iterates, rounds, masks, final_state: state })
}
