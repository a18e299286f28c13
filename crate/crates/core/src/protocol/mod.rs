//! The two-phase DANL protocol.
//!
//! Phase I aggregates every worker's Hessian at ω⁰ once, projects it onto
//! `{H ⪰ μI}` and factors it. Phase II rounds collect pruned gradient
//! fragments, merge them into the server's stale-fragment store and take a
//! preconditioned step with the stored factor.

pub mod messages;
mod sim;

pub use sim::{run, DanlConfig, RoundLog, Trajectory};

use thiserror::Error;

use crate::linalg::{factor_spd, project_psd, LinalgError, SpdFactorization, SymMatrix};
use crate::loss::{LocalObjective, LossError, ModelVector};
use crate::pruning::{CoverageLedger, PruningError, RegionPartition};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Pruning(#[from] PruningError),
    #[error("factorizing the projected Hessian failed with mu = {mu:e}: {source}")]
    Factorization { mu: f64, source: LinalgError },
    #[error("projection floor mu must be positive, got {0}")]
    InvalidMu(f64),
    #[error("protocol needs at least one worker")]
    NoWorkers,
    #[error("worker {0} reported more than once")]
    DuplicateReport(usize),
    #[error("report from worker {worker} is stamped round {got}, server is at round {expected}")]
    WrongRound { worker: usize, expected: usize, got: usize },
    #[error("report from unknown worker {0}")]
    UnknownWorker(usize),
    #[error("worker {worker} sent region {region} with {got} values, region has {expected}")]
    FragmentShape { worker: usize, region: usize, expected: usize, got: usize },
    #[error("worker {worker} sent unknown region {region}")]
    UnknownRegion { worker: usize, region: usize },
    #[error("worker {worker} sent region {region} twice")]
    DuplicateRegion { worker: usize, region: usize },
    #[error("malformed message: {0}")]
    Decode(String),
}

/// How the server combines the Θ-store into `∇Fᵗ'ᑫ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// `(1/N) Σᵢ Θᵢᵗ'ᑫ` over all workers, fresh or stale.
    #[default]
    AllWorkers,
    /// `(1/|𝒞ᵗ'ᑫ|) Σ_{i∈𝒞ᵗ'ᑫ} Θᵢᵗ'ᑫ` over this round's contributors only; a region
    /// nobody trained falls back to the all-worker average of stored fragments.
    Covering,
}

/// A worker's latest gradient fragment for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub values: Vec<f64>,
    pub stamp: usize,
}

/// Θᵢᵗ'ᑫ: the newest fragment per (worker, region).
#[derive(Debug, Clone, PartialEq)]
pub struct StaleFragmentStore {
    workers: usize,
    regions: usize,
    fragments: Vec<Fragment>,
}

impl StaleFragmentStore {
    fn from_full_gradients(partition: &RegionPartition, grads: &[&[f64]]) -> Self {
        let regions = partition.len();
        let mut fragments = Vec::with_capacity(grads.len() * regions);
        for g in grads {
            for r in partition.ranges() {
                fragments.push(Fragment { values: g[r.clone()].to_vec(), stamp: 0 });
            }
        }
        Self { workers: grads.len(), regions, fragments }
    }

    pub fn get(&self, worker: usize, region: usize) -> &Fragment {
        &self.fragments[worker * self.regions + region]
    }

    fn set(&mut self, worker: usize, region: usize, values: Vec<f64>, stamp: usize) {
        self.fragments[worker * self.regions + region] = Fragment { values, stamp };
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn regions(&self) -> usize {
        self.regions
    }
}

/// Phase I upload: gradient and Hessian at ω⁰.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianReport {
    pub worker: usize,
    pub grad: ModelVector,
    pub hessian: SymMatrix,
}

/// Phase II upload: one fragment per region in `τᵢᵗ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub worker: usize,
    pub round: usize,
    /// `(region, values)` sorted by region.
    pub fragments: Vec<(usize, Vec<f64>)>,
}

impl GradientReport {
    pub fn regions(&self) -> Vec<usize> {
        self.fragments.iter().map(|(q, _)| *q).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub mu: f64,
    pub regions: usize,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub round: usize,
    pub model: ModelVector,
    /// Π, the averaged Phase I Hessian.
    pub pi: SymMatrix,
    /// `[Π]_μ`.
    pub pi_projected: SymMatrix,
    pub factor: SpdFactorization,
    pub theta: StaleFragmentStore,
    pub partition: RegionPartition,
    pub ledger: CoverageLedger,
    pub mu: f64,
    pub aggregation: Aggregation,
}

impl ServerState {
    pub fn workers(&self) -> usize {
        self.theta.workers()
    }
}

pub fn hessian_report<L: LocalObjective>(objective: &L, worker: usize, w0: &[f64]) -> Result<HessianReport, ProtocolError> {
    Ok(HessianReport { worker, grad: objective.grad(w0)?, hessian: objective.hess(w0)? })
}

/// Server side of Phase I. Reports must be indexed by worker id `0..N`.
pub fn phase1_from_reports(
    reports: &[HessianReport],
    cfg: &ServerConfig,
    w0: &[f64],
) -> Result<ServerState, ProtocolError> {
    if !(cfg.mu > 0.0 && cfg.mu.is_finite()) {
        return Err(ProtocolError::InvalidMu(cfg.mu));
    }
    if reports.is_empty() {
        return Err(ProtocolError::NoWorkers);
    }
    for (i, r) in reports.iter().enumerate() {
        if r.worker != i {
            return Err(ProtocolError::UnknownWorker(r.worker));
        }
        if r.grad.len() != w0.len() || r.hessian.dim() != w0.len() {
            return Err(LossError::DimensionMismatch { expected: w0.len(), got: r.grad.len() }.into());
        }
    }
    let n = reports.len();
    let partition = crate::pruning::partition_regions(w0.len(), cfg.regions)?;

    let pi = SymMatrix::mean(reports.iter().map(|r| &r.hessian))?;
    let pi_projected = project_psd(&pi, cfg.mu)?;
    let factor = factor_spd(&pi_projected).map_err(|source| ProtocolError::Factorization { mu: cfg.mu, source })?;

    let grads: Vec<&[f64]> = reports.iter().map(|r| r.grad.as_slice()).collect();
    let theta = StaleFragmentStore::from_full_gradients(&partition, &grads);
    let mut mean_grad = vec![0.0; w0.len()];
    for g in &grads {
        for (a, b) in mean_grad.iter_mut().zip(g.iter()) {
            *a += b;
        }
    }
    mean_grad.iter_mut().for_each(|a| *a /= n as f64);
    let step = factor.solve(&mean_grad)?;
    let model = w0.iter().zip(&step).map(|(w, s)| w - s).collect();

    Ok(ServerState {
        round: 1,
        model,
        pi,
        pi_projected,
        factor,
        theta,
        ledger: CoverageLedger::new(n, partition.len()),
        partition,
        mu: cfg.mu,
        aggregation: cfg.aggregation,
    })
}

/// Phase I: every worker reports `∇Fᵢ(ω⁰)` and `∇²Fᵢ(ω⁰)`; the server builds
/// Π, factors `[Π]_μ`, seeds Θ⁰ and steps to ω¹.
pub fn phase1_init<L: LocalObjective>(
    objectives: &[L],
    cfg: &ServerConfig,
    w0: &[f64],
) -> Result<ServerState, ProtocolError> {
    let reports =
        objectives.iter().enumerate().map(|(i, obj)| hessian_report(obj, i, w0)).collect::<Result<Vec<_>, _>>()?;
    phase1_from_reports(&reports, cfg, w0)
}

/// A worker's Phase II computation: the pruned gradient, cut into fragments.
pub fn worker_round<L: LocalObjective>(
    objective: &L,
    worker: usize,
    round: usize,
    model: &[f64],
    regions: &[usize],
    partition: &RegionPartition,
) -> Result<GradientReport, ProtocolError> {
    if regions.is_empty() {
        return Ok(GradientReport { worker, round, fragments: Vec::new() });
    }
    let mask = partition.expand_mask(regions);
    let g = objective.pruned_grad(model, &mask)?;
    let fragments = regions.iter().map(|&q| (q, g[partition.range(q)].to_vec())).collect();
    Ok(GradientReport { worker, round, fragments })
}

/// Merges this round's reports into Θ and returns the assembled `∇Fᵗ`.
///
/// Sums run over workers in ascending id order, so the result does not
/// depend on the order reports arrive in.
pub fn server_aggregate(state: &mut ServerState, reports: &[GradientReport]) -> Result<ModelVector, ProtocolError> {
    let n = state.workers();
    let regions = state.partition.len();
    let mut seen = vec![false; n];
    for r in reports {
        if r.worker >= n {
            return Err(ProtocolError::UnknownWorker(r.worker));
        }
        if seen[r.worker] {
            return Err(ProtocolError::DuplicateReport(r.worker));
        }
        seen[r.worker] = true;
        if r.round != state.round {
            return Err(ProtocolError::WrongRound { worker: r.worker, expected: state.round, got: r.round });
        }
        let mut region_seen = vec![false; regions];
        for (q, values) in &r.fragments {
            let q = *q;
            if q >= regions {
                return Err(ProtocolError::UnknownRegion { worker: r.worker, region: q });
            }
            if region_seen[q] {
                return Err(ProtocolError::DuplicateRegion { worker: r.worker, region: q });
            }
            region_seen[q] = true;
            let expected = state.partition.range(q).len();
            if values.len() != expected {
                return Err(ProtocolError::FragmentShape { worker: r.worker, region: q, expected, got: values.len() });
            }
        }
    }

    let round = state.round;
    let mut fresh = vec![vec![false; n]; regions];
    for r in reports {
        for (q, values) in &r.fragments {
            state.theta.set(r.worker, *q, values.clone(), round);
            fresh[*q][r.worker] = true;
        }
    }

    let mut grad = vec![0.0; state.partition.dim()];
    for (q, range) in state.partition.ranges().iter().enumerate() {
        let block = &mut grad[range.clone()];
        let contributors: Vec<usize> = match state.aggregation {
            Aggregation::Covering if fresh[q].iter().any(|&f| f) => (0..n).filter(|&i| fresh[q][i]).collect(),
            _ => (0..n).collect(),
        };
        for &i in &contributors {
            for (b, v) in block.iter_mut().zip(&state.theta.get(i, q).values) {
                *b += v;
            }
        }
        let count = contributors.len() as f64;
        block.iter_mut().for_each(|b| *b /= count);
    }
    Ok(grad)
}

/// `ω^{t+1} = ωᵗ − [Π]_μ⁻¹ ∇Fᵗ` with the stored factor; no refactorization.
pub fn server_update(state: &mut ServerState, grad: &[f64]) -> Result<(), ProtocolError> {
    let step = state.factor.solve(grad)?;
    for (w, s) in state.model.iter_mut().zip(&step) {
        *w -= s;
    }
    state.round += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{LogisticObjective, LossConfig, QuadraticObjective, Sample, Shard};
    use crate::pruning::partition_regions;

    fn shard(seed: u64, m: usize, d: usize, worker: usize) -> LogisticObjective {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..m)
            .map(|_| Sample {
                features: (0..d).map(|j| (j, rng.random_range(-1.0..1.0))).collect(),
                label: f64::from(rng.random_bool(0.5) as u8),
            })
            .collect();
        LogisticObjective::new(Shard::new(worker, d, samples).unwrap(), LossConfig::new(0.01).unwrap())
    }

    fn cfg(regions: usize) -> ServerConfig {
        ServerConfig { mu: 1e-6, regions, aggregation: Aggregation::AllWorkers }
    }

    #[test]
    fn quadratic_single_worker_is_exact_newton() {
        let h = SymMatrix::from_row_major(2, vec![3.0, 1.0, 1.0, 2.0]).unwrap();
        let objs = vec![QuadraticObjective::centered(h)];
        let state = phase1_init(&objs, &ServerConfig { mu: 0.5, regions: 1, aggregation: Aggregation::AllWorkers }, &[
            1.5, -2.0,
        ])
        .unwrap();
        assert!(state.model.iter().all(|x| x.abs() <= 1e-15), "{:?}", state.model);
        assert_eq!(state.round, 1);
    }

    #[test]
    fn identical_shards_give_their_hessian() {
        let a = shard(1, 20, 3, 0);
        let mut b = a.clone();
        b.shard.worker_id = 1;
        let w0 = [0.1, -0.2, 0.3];
        let state = phase1_init(&[a.clone(), b], &cfg(1), &w0).unwrap();
        assert!(state.pi.max_abs_diff(&a.hess(&w0).unwrap()) <= 1e-15);
    }

    #[test]
    fn pi_is_mean_of_worker_hessians() {
        let objs: Vec<_> = (0..3).map(|i| shard(10 + i as u64, 15, 4, i)).collect();
        let w0 = [0.2, 0.0, -0.1, 0.4];
        let state = phase1_init(&objs, &cfg(2), &w0).unwrap();
        let hs: Vec<SymMatrix> = objs.iter().map(|o| o.hess(&w0).unwrap()).collect();
        for i in 0..4 {
            for j in 0..4 {
                let brute = (hs[0].get(i, j) + hs[1].get(i, j) + hs[2].get(i, j)) / 3.0;
                assert!((state.pi.get(i, j) - brute).abs() <= 1e-12);
            }
        }
        for (i, obj) in objs.iter().enumerate() {
            let g = obj.grad(&w0).unwrap();
            assert_eq!(state.theta.get(i, 0).values, g[0..2].to_vec());
            assert_eq!(state.theta.get(i, 1).values, g[2..4].to_vec());
            assert_eq!(state.theta.get(i, 1).stamp, 0);
        }
    }

    #[test]
    fn phase1_rejects_bad_mu_and_reports_factorization_failure() {
        let objs = vec![shard(1, 5, 2, 0)];
        assert!(matches!(
            phase1_init(&objs, &ServerConfig { mu: 0.0, ..cfg(1) }, &[0.0, 0.0]),
            Err(ProtocolError::InvalidMu(_))
        ));
        let empty: Vec<LogisticObjective> = Vec::new();
        assert!(matches!(phase1_init(&empty, &cfg(1), &[0.0, 0.0]), Err(ProtocolError::NoWorkers)));
    }

    #[test]
    fn worker_round_fragments() {
        let obj = shard(3, 10, 4, 0);
        let p = partition_regions(4, 2).unwrap();
        let w = [0.3, -0.4, 0.5, 0.1];
        let full = worker_round(&obj, 0, 1, &w, &[0, 1], &p).unwrap();
        let joined: Vec<f64> = full.fragments.iter().flat_map(|(_, v)| v.clone()).collect();
        assert_eq!(joined, obj.grad(&w).unwrap());
        assert!(worker_round(&obj, 0, 1, &w, &[], &p).unwrap().fragments.is_empty());
        let first = worker_round(&obj, 0, 1, &w, &[0], &p).unwrap();
        let pg = obj.pruned_grad(&w, &[true, true, false, false]).unwrap();
        assert_eq!(first.fragments, vec![(0, pg[0..2].to_vec())]);
    }

    fn hand_state() -> ServerState {
        // N=2, Q=2, d=2, Π = I
        let reports = vec![
            HessianReport { worker: 0, grad: vec![1.0, 2.0], hessian: SymMatrix::identity(2) },
            HessianReport { worker: 1, grad: vec![3.0, 4.0], hessian: SymMatrix::identity(2) },
        ];
        phase1_from_reports(&reports, &ServerConfig { mu: 0.5, regions: 2, aggregation: Aggregation::AllWorkers }, &[
            0.0, 0.0,
        ])
        .unwrap()
    }

    #[test]
    fn aggregate_mixed_staleness_by_hand() {
        let mut s = hand_state();
        assert_eq!(s.model, vec![-2.0, -3.0]);
        // worker 0 refreshes region 1 only; worker 1 refreshes both.
        let reports = vec![
            GradientReport { worker: 1, round: 1, fragments: vec![(0, vec![10.0]), (1, vec![20.0])] },
            GradientReport { worker: 0, round: 1, fragments: vec![(1, vec![6.0])] },
        ];
        let g = server_aggregate(&mut s, &reports).unwrap();
        // region 0: (stale 1 + fresh 10)/2, region 1: (6 + 20)/2
        assert_eq!(g, vec![5.5, 13.0]);
        assert_eq!(s.theta.get(0, 0).stamp, 0);
        assert_eq!(s.theta.get(0, 1).stamp, 1);
        assert_eq!(s.theta.get(1, 0).stamp, 1);
    }

    #[test]
    fn aggregate_covering_variant() {
        let mut s = hand_state();
        s.aggregation = Aggregation::Covering;
        let reports = vec![GradientReport { worker: 1, round: 1, fragments: vec![(0, vec![10.0])] }];
        let g = server_aggregate(&mut s, &reports).unwrap();
        // region 0: only worker 1 fresh → 10; region 1 untrained → (2 + 4)/2
        assert_eq!(g, vec![10.0, 3.0]);
    }

    #[test]
    fn untrained_region_carries_previous_block() {
        let mut s = hand_state();
        let g1 = server_aggregate(&mut s, &[
            GradientReport { worker: 0, round: 1, fragments: vec![(0, vec![7.0])] },
        ])
        .unwrap();
        assert_eq!(g1[1], 3.0);
        server_update(&mut s, &g1).unwrap();
        let g2 = server_aggregate(&mut s, &[]).unwrap();
        assert_eq!(g2, g1);
    }

    #[test]
    fn aggregate_rejects_malformed_reports() {
        let mut s = hand_state();
        let ok = |w| GradientReport { worker: w, round: 1, fragments: vec![] };
        assert!(matches!(server_aggregate(&mut s, &[ok(0), ok(0)]), Err(ProtocolError::DuplicateReport(0))));
        assert!(matches!(server_aggregate(&mut s, &[ok(5)]), Err(ProtocolError::UnknownWorker(5))));
        let late = GradientReport { worker: 0, round: 3, fragments: vec![] };
        assert!(matches!(server_aggregate(&mut s, &[late]), Err(ProtocolError::WrongRound { .. })));
        let bad = GradientReport { worker: 0, round: 1, fragments: vec![(0, vec![1.0, 2.0])] };
        assert!(matches!(server_aggregate(&mut s, &[bad]), Err(ProtocolError::FragmentShape { .. })));
        let bad = GradientReport { worker: 0, round: 1, fragments: vec![(2, vec![1.0])] };
        assert!(matches!(server_aggregate(&mut s, &[bad]), Err(ProtocolError::UnknownRegion { .. })));
        let bad = GradientReport { worker: 0, round: 1, fragments: vec![(0, vec![1.0]), (0, vec![1.0])] };
        assert!(matches!(server_aggregate(&mut s, &[bad]), Err(ProtocolError::DuplicateRegion { .. })));
    }

    #[test]
    fn update_examples() {
        let mut s = hand_state();
        let before = s.model.clone();
        server_update(&mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.model, before);
        assert_eq!(s.round, 2);
        // [Π]_μ = I
        server_update(&mut s, &[1.0, -1.0]).unwrap();
        assert_eq!(s.model, vec![before[0] - 1.0, before[1] + 1.0]);
    }
}
