//! Region partitioning, per-round mask generation under coverage budgets, and
//! the coverage ledger that tracks who trained what and when.

use std::io::{self, Write};
use std::ops::Range;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PruningError {
    #[error("cannot split dimension {dim} into {regions} regions")]
    BadPartition { dim: usize, regions: usize },
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("ledger is at round {ledger}, assignment is for round {assignment}")]
    RoundMismatch { ledger: usize, assignment: usize },
    #[error("assignment shape {workers}x{regions} does not match ledger {ledger_workers}x{ledger_regions}")]
    ShapeMismatch { workers: usize, regions: usize, ledger_workers: usize, ledger_regions: usize },
    #[error("coverage history is empty")]
    EmptyHistory,
}

/// `Q` contiguous, disjoint, non-empty index blocks covering `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    dim: usize,
    ranges: Vec<Range<usize>>,
}

/// The first `d mod Q` regions get `⌈d/Q⌉` indices, the rest `⌊d/Q⌋`.
pub fn partition_regions(dim: usize, regions: usize) -> Result<RegionPartition, PruningError> {
    if regions == 0 || regions > dim {
        return Err(PruningError::BadPartition { dim, regions });
    }
    let base = dim / regions;
    let extra = dim % regions;
    let mut ranges = Vec::with_capacity(regions);
    let mut start = 0;
    for q in 0..regions {
        let len = base + usize::from(q < extra);
        ranges.push(start..start + len);
        start += len;
    }
    Ok(RegionPartition { dim, ranges })
}

impl RegionPartition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn range(&self, q: usize) -> Range<usize> {
        self.ranges[q].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Binary d-vector selecting exactly the union of `regions`.
    pub fn expand_mask(&self, regions: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.dim];
        for &q in regions {
            mask[self.ranges[q].clone()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

/// Per-round training budget. `gamma_max = None` means unbounded staleness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub psi_min: usize,
    pub s_min: usize,
    pub gamma_max: Option<usize>,
}

impl Budget {
    pub fn full(workers: usize, regions: usize) -> Self {
        Self { psi_min: workers, s_min: regions, gamma_max: None }
    }

    pub fn validate(&self, workers: usize, regions: usize) -> Result<(), PruningError> {
        if self.psi_min == 0 || self.psi_min > workers {
            return Err(PruningError::Infeasible(format!(
                "psi_min = {} must lie in [1, N = {workers}]",
                self.psi_min
            )));
        }
        if self.s_min == 0 || self.s_min > regions {
            return Err(PruningError::Infeasible(format!("s_min = {} must lie in [1, Q = {regions}]", self.s_min)));
        }
        if self.gamma_max == Some(0) {
            return Err(PruningError::Infeasible("gamma_max must be at least 1 (or unbounded)".into()));
        }
        Ok(())
    }
}

/// Region subsets `τᵢᵗ` for every worker in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskAssignment {
    pub round: usize,
    pub regions: usize,
    /// `subsets[i]` is worker `i`'s sorted region list.
    pub subsets: Vec<Vec<usize>>,
}

impl MaskAssignment {
    pub fn full(round: usize, workers: usize, regions: usize) -> Self {
        Self { round, regions, subsets: vec![(0..regions).collect(); workers] }
    }

    pub fn workers(&self) -> usize {
        self.subsets.len()
    }

    /// `𝒞ᵗ'ᑫ` for every region, worker ids ascending.
    pub fn coverage(&self) -> Vec<Vec<usize>> {
        let mut cov = vec![Vec::new(); self.regions];
        for (i, subset) in self.subsets.iter().enumerate() {
            for &q in subset {
                cov[q].push(i);
            }
        }
        cov
    }

    /// `𝒜ᵗ`: regions trained by at least one worker.
    pub fn trained_regions(&self) -> Vec<usize> {
        self.coverage().iter().enumerate().filter(|(_, c)| !c.is_empty()).map(|(q, _)| q).collect()
    }

    pub fn contains(&self, worker: usize, region: usize) -> bool {
        self.subsets[worker].binary_search(&region).is_ok()
    }

    /// `"0101"`-style string, character `q` set when region `q` is trained.
    pub fn bitset(&self, worker: usize) -> String {
        (0..self.regions).map(|q| if self.contains(worker, q) { '1' } else { '0' }).collect()
    }
}

/// Realized coverage of one Phase II round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundCoverage {
    pub round: usize,
    /// `|𝒞ᵗ'ᑫ|` per region (0 for untrained regions).
    pub coverage_counts: Vec<usize>,
    /// `γᵗ` after this round.
    pub gamma: usize,
}

impl RoundCoverage {
    pub fn regions_trained(&self) -> usize {
        self.coverage_counts.iter().filter(|&&c| c > 0).count()
    }

    /// `min_{q ∈ 𝒜ᵗ} |𝒞ᵗ'ᑫ|`, or 0 if nothing was trained.
    pub fn min_coverage(&self) -> usize {
        self.coverage_counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0)
    }
}

/// Last-trained round for every (worker, region) pair plus per-round history.
///
/// Round 0 (Phase I) counts as trained for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageLedger {
    workers: usize,
    regions: usize,
    round: usize,
    last_trained: Vec<usize>,
    history: Vec<RoundCoverage>,
}

impl CoverageLedger {
    pub fn new(workers: usize, regions: usize) -> Self {
        Self { workers, regions, round: 0, last_trained: vec![0; workers * regions], history: Vec::new() }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn last_trained(&self, worker: usize, region: usize) -> usize {
        self.last_trained[worker * self.regions + region]
    }

    /// `γᵢᵗ'ᑫ = t − last_trained(i, q)` at the ledger's current round.
    pub fn staleness(&self, worker: usize, region: usize) -> usize {
        self.round - self.last_trained(worker, region)
    }

    /// `γᵗ`: the largest staleness over all pairs.
    pub fn max_staleness(&self) -> usize {
        self.last_trained.iter().map(|&s| self.round - s).max().unwrap_or(0)
    }

    pub fn history(&self) -> &[RoundCoverage] {
        &self.history
    }

    /// Records the assignment for round `ledger.round() + 1`.
    pub fn update(&mut self, assignment: &MaskAssignment) -> Result<(), PruningError> {
        if assignment.round != self.round + 1 {
            return Err(PruningError::RoundMismatch { ledger: self.round, assignment: assignment.round });
        }
        if assignment.workers() != self.workers || assignment.regions != self.regions {
            return Err(PruningError::ShapeMismatch {
                workers: assignment.workers(),
                regions: assignment.regions,
                ledger_workers: self.workers,
                ledger_regions: self.regions,
            });
        }
        self.round = assignment.round;
        for (i, subset) in assignment.subsets.iter().enumerate() {
            for &q in subset {
                self.last_trained[i * self.regions + q] = self.round;
            }
        }
        let coverage_counts = assignment.coverage().iter().map(Vec::len).collect();
        self.history.push(RoundCoverage { round: self.round, coverage_counts, gamma: self.max_staleness() });
        Ok(())
    }
}

pub fn update_ledger(mut ledger: CoverageLedger, assignment: &MaskAssignment) -> Result<CoverageLedger, PruningError> {
    ledger.update(assignment)?;
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageStats {
    /// `ψ* = min_{t, q ∈ 𝒜ᵗ} |𝒞ᵗ'ᑫ|`.
    pub psi_star: usize,
    /// `S* = min_t |𝒜ᵗ|`.
    pub s_star: usize,
    /// `γᵗ` for each recorded round.
    pub gamma_series: Vec<usize>,
}

impl CoverageStats {
    pub fn max_gamma(&self) -> usize {
        self.gamma_series.iter().copied().max().unwrap_or(0)
    }
}

pub fn coverage_stats(ledger: &CoverageLedger) -> Result<CoverageStats, PruningError> {
    let h = ledger.history();
    if h.is_empty() {
        return Err(PruningError::EmptyHistory);
    }
    let psi_star = h.iter().filter(|r| r.regions_trained() > 0).map(RoundCoverage::min_coverage).min().unwrap_or(0);
    let s_star = h.iter().map(RoundCoverage::regions_trained).min().expect("non-empty");
    Ok(CoverageStats { psi_star, s_star, gamma_series: h.iter().map(|r| r.gamma).collect() })
}

/// Deterministic per-round generator: stream `round` of a ChaCha8 keyed by `seed`.
pub fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Draws the next round's masks.
///
/// Policy: pick `|𝒜ᵗ|` uniformly in `[s_min, Q]` and a uniform region set of
/// that size; for each chosen region pick `|𝒞ᵗ'ᑫ|` uniformly in `[psi_min, N]`
/// and a uniform worker set of that size. Every pair that would exceed
/// `gamma_max` this round is then forced in, and any region whose coverage came
/// only from forcing is topped up to `psi_min` workers.
pub fn generate_masks(
    workers: usize,
    regions: usize,
    budget: &Budget,
    ledger: &CoverageLedger,
    seed: u64,
) -> Result<MaskAssignment, PruningError> {
    budget.validate(workers, regions)?;
    if ledger.workers() != workers || ledger.regions() != regions {
        return Err(PruningError::ShapeMismatch {
            workers,
            regions,
            ledger_workers: ledger.workers(),
            ledger_regions: ledger.regions(),
        });
    }
    let round = ledger.round() + 1;
    let mut rng = round_rng(seed, round);

    let mut members = vec![vec![false; workers]; regions];
    let k = rng.random_range(budget.s_min..=regions);
    for q in index::sample(&mut rng, regions, k).into_vec() {
        let c = rng.random_range(budget.psi_min..=workers);
        for i in index::sample(&mut rng, workers, c).into_vec() {
            members[q][i] = true;
        }
    }

    if let Some(gmax) = budget.gamma_max {
        for (q, row) in members.iter_mut().enumerate() {
            for (i, m) in row.iter_mut().enumerate() {
                if round - ledger.last_trained(i, q) > gmax {
                    *m = true;
                }
            }
        }
        for row in members.iter_mut() {
            let count = row.iter().filter(|&&m| m).count();
            if count > 0 && count < budget.psi_min {
                let idle: Vec<usize> = (0..workers).filter(|&i| !row[i]).collect();
                for pick in index::sample(&mut rng, idle.len(), budget.psi_min - count) {
                    row[idle[pick]] = true;
                }
            }
        }
    }

    let subsets = (0..workers).map(|i| (0..regions).filter(|&q| members[q][i]).collect()).collect();
    Ok(MaskAssignment { round, regions, subsets })
}

/// Writes `round,worker,regions` rows, one per worker per round.
pub fn write_mask_history<W: Write>(history: &[MaskAssignment], mut out: W) -> io::Result<()> {
    writeln!(out, "round,worker,regions")?;
    for a in history {
        for i in 0..a.workers() {
            writeln!(out, "{},{},{}", a.round, i, a.bitset(i))?;
        }
    }
    Ok(())
}
