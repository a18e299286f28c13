use std::io::Write;

use super::{ExperimentConfig, HarnessError};
use crate::baselines::{fedavg_warmstart, newton_reference, NewtonReference, ReferenceSidecar};
use crate::data::{load_libsvm, shard_dataset, synth_logistic, DataError, Dataset};
use crate::linalg::norm;
use crate::loss::{global_grad, global_value, LogisticObjective, LossConfig, ModelVector};
use crate::protocol::{run, DanlConfig, Trajectory};

pub const CSV_HEADER: &str = "round,gap,grad_norm,regions_trained,min_coverage,gamma_t,elapsed_ms";

/// Most negative gap tolerated before the reference is declared inexact.
pub const GAP_SLACK: f64 = 1e-9;

/// One CSV row. Round 0 is Phase I; `gap` and `grad_norm` are taken at the
/// model the round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub gap: f64,
    pub grad_norm: f64,
    pub regions_trained: usize,
    pub min_coverage: usize,
    pub gamma_t: usize,
    pub elapsed_ms: f64,
}

/// Sharded objectives with their warm start and reference optimum.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub objectives: Vec<LogisticObjective>,
    pub w0: ModelVector,
    pub reference: NewtonReference,
    pub mu: f64,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    match &cfg.dataset {
        Some(path) => load_libsvm(path, cfg.dim).map_err(|e| match e {
            DataError::Io(io) => HarnessError::Io(format!("{}: {io}", path.display())),
            other => HarnessError::Data(other),
        }),
        None => Ok(synth_logistic(cfg.synth_d, cfg.synth_m, cfg.seed)?.0),
    }
}

fn reference(cfg: &ExperimentConfig, name: &str, objs: &[LogisticObjective]) -> Result<NewtonReference, HarnessError> {
    let Some(path) = &cfg.reference_cache else {
        return Ok(newton_reference(objs, cfg.newton_iters)?);
    };
    if let Some(side) = ReferenceSidecar::load(path)? {
        if side.matches(name, cfg.lambda, cfg.newton_iters, cfg.workers, cfg.seed) {
            return Ok(side.reference);
        }
    }
    let reference = newton_reference(objs, cfg.newton_iters)?;
    let side = ReferenceSidecar {
        dataset: name.to_string(),
        lambda: cfg.lambda,
        iters: cfg.newton_iters,
        workers: cfg.workers,
        seed: cfg.seed,
        reference,
    };
    side.save(path)?;
    Ok(side.reference)
}

/// Loads and shards the data, then runs the FedAvg warm start and the Newton reference.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Instance, HarnessError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let loss = LossConfig::new(cfg.lambda).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let objectives: Vec<LogisticObjective> =
        shard_dataset(&ds, cfg.workers, cfg.seed)?.into_iter().map(|s| LogisticObjective::new(s, loss)).collect();
    let w0 = fedavg_warmstart(&objectives, cfg.fedavg_rounds, cfg.fedavg_lr)?;
    let reference = reference(cfg, &ds.source_name, &objectives)?;
    let mean_shard = ds.len() as f64 / cfg.workers as f64;
    let mu = cfg.mu.unwrap_or(cfg.lambda / mean_shard);
    Ok(Instance { name: ds.source_name, objectives, w0, reference, mu })
}

pub fn danl_config(cfg: &ExperimentConfig, mu: f64) -> DanlConfig {
    DanlConfig {
        mu,
        regions: cfg.regions,
        rounds: cfg.rounds,
        budget: cfg.budget(),
        aggregation: cfg.aggregation,
        seed: cfg.seed,
        subsample: cfg.subsample,
        timing: cfg.timing,
    }
}

/// Runs DANL on a prepared instance using the protocol settings of `cfg`.
pub fn run_prepared(inst: &Instance, cfg: &ExperimentConfig) -> Result<(Vec<RoundRecord>, Trajectory), HarnessError> {
    cfg.validate()?;
    let traj = run(&inst.objectives, &inst.w0, &danl_config(cfg, inst.mu))?;
    let f_star = inst.reference.f_star;
    let mut records = Vec::with_capacity(traj.rounds.len());
    for (log, w) in traj.rounds.iter().zip(&traj.iterates[1..]) {
        let gap = global_value(&inst.objectives, w)? - f_star;
        let grad_norm = norm(&global_grad(&inst.objectives, w)?);
        if !gap.is_finite() || gap < -GAP_SLACK {
            return Err(HarnessError::Numerical(format!("round {}: optimality gap {gap:e} is invalid", log.round)));
        }
        records.push(RoundRecord {
            round: log.round,
            gap,
            grad_norm,
            regions_trained: log.regions_trained,
            min_coverage: log.min_coverage,
            gamma_t: log.gamma,
            elapsed_ms: log.elapsed_ms,
        });
    }
    Ok((records, traj))
}

/// FedAvg warm start, Newton reference, then DANL.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>, HarnessError> {
    let inst = prepare(cfg)?;
    Ok(run_prepared(&inst, cfg)?.0)
}

pub fn write_records<W: Write>(records: &[RoundRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{:e},{:e},{},{},{},{:.3}",
            r.round, r.gap, r.grad_norm, r.regions_trained, r.min_coverage, r.gamma_t, r.elapsed_ms
        )?;
    }
    Ok(())
}
