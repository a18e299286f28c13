use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::HarnessError;
use crate::baselines::{fedavg_warmstart, fixed_hessian_newton, newton_reference};
use crate::data::{shard_dataset, synth_logistic};
use crate::linalg::{dist_sq, project_psd, sym_eig, SymMatrix};
use crate::loss::{global_value, LocalObjective, LogisticObjective, LossConfig};
use crate::pruning::round_rng;

/// Slack allowed on the right-hand side of the projection inequality.
pub const LEMMA1_SLACK: f64 = 1e-10;

/// Iterates with gap at most this are inside the basin.
pub const BASIN_GAP: f64 = 1e-2;

/// Squared distances below `(DIST_FLOOR · max(1, ‖ω*‖))²` are at the precision
/// of the reference optimum and are left out of contraction ratios.
pub const DIST_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Trial {
    pub trial: usize,
    pub mu: f64,
    /// `‖[Π]_μ − Π*‖_F`.
    pub projected: f64,
    /// `‖Π − Π*‖_F`.
    pub original: f64,
    pub min_eig_target: f64,
}

impl Lemma1Trial {
    pub fn violated(&self) -> bool {
        self.projected.is_nan() || self.projected > self.original + LEMMA1_SLACK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub seed: u64,
    pub dim: usize,
    pub trials: usize,
    pub violations: Vec<Lemma1Trial>,
    /// Largest `projected − original` over all trials.
    pub max_excess: f64,
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Trial `k` of the battery: random symmetric `Π`, random `Π* ⪰ μI` (possibly
/// with eigenvalues exactly at `μ`) and `μ ∈ [1e-3, 1]`, all drawn from stream
/// `k` of `seed`.
pub fn lemma1_trial(seed: u64, trial: usize, dim: usize) -> Result<Lemma1Trial, HarnessError> {
    let mut rng = round_rng(seed, trial);
    let mu = 10f64.powf(rng.random_range(-3.0..=0.0));
    let scale = 10f64.powf(rng.random_range(-1.0..=1.0));
    let shift = rng.random_range(-2.0..=2.0) * scale;
    let g: Vec<f64> = (0..dim * dim).map(|_| gaussian(&mut rng)).collect();
    let pi = SymMatrix::from_fn(dim, |i, j| {
        0.5 * scale * (g[i * dim + j] + g[j * dim + i]) + if i == j { shift } else { 0.0 }
    })?;

    let rank = rng.random_range(1..=dim);
    let b: Vec<f64> = (0..rank * dim).map(|_| gaussian(&mut rng)).collect();
    let target = SymMatrix::from_fn(dim, |i, j| {
        let s: f64 = (0..rank).map(|r| b[r * dim + i] * b[r * dim + j]).sum();
        s / rank as f64 + if i == j { mu } else { 0.0 }
    })?;

    let projected = project_psd(&pi, mu)?;
    let diff = |a: &SymMatrix| -> Result<f64, HarnessError> { Ok(a.add_scaled(-1.0, &target)?.frobenius_norm()) };
    Ok(Lemma1Trial {
        trial,
        mu,
        projected: diff(&projected)?,
        original: diff(&pi)?,
        min_eig_target: sym_eig(&target)?.min_eigenvalue(),
    })
}

pub fn lemma1_battery(seed: u64, trials: usize, dim: usize) -> Result<Lemma1Report, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Usage("trials must be at least 1".into()));
    }
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for k in 0..trials {
        let t = lemma1_trial(seed, k, dim)?;
        max_excess = max_excess.max(t.projected - t.original);
        if t.violated() {
            violations.push(t);
        }
    }
    Ok(Lemma1Report { seed, dim, trials, violations, max_excess })
}

/// Per-round squared-distance ratios of a full-coverage run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `(instance, t, ‖ωᵗ⁺¹−ω*‖² / ‖ωᵗ−ω*‖²)` for every in-basin `t` above the distance floor.
    pub ratios: Vec<(usize, usize, f64)>,
    /// Per instance, the first iterate index with gap below 1e-9.
    pub below_1e9: Vec<Option<usize>>,
}

impl ContractionReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().map(|r| r.2).fold(0.0, f64::max)
    }

    pub fn fraction_at_most(&self, bound: f64) -> f64 {
        if self.ratios.is_empty() {
            return 1.0;
        }
        self.ratios.iter().filter(|r| r.2 <= bound).count() as f64 / self.ratios.len() as f64
    }
}

/// Ratios for one iterate sequence against a known optimum.
pub fn contraction_ratios<L: LocalObjective>(
    objectives: &[L],
    iterates: &[Vec<f64>],
    w_star: &[f64],
    f_star: f64,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let floor = DIST_FLOOR * crate::linalg::norm(w_star).max(1.0);
    let floor_sq = floor * floor;
    let mut out = Vec::new();
    for (t, pair) in iterates.windows(2).enumerate() {
        let gap = global_value(objectives, &pair[0])? - f_star;
        let before = dist_sq(&pair[0], w_star);
        if gap <= BASIN_GAP && before > floor_sq {
            out.push((t, dist_sq(&pair[1], w_star) / before));
        }
    }
    Ok(out)
}

/// Full-coverage DANL on `instances` synthetic problems (d = 30, N = 10,
/// 200 samples per worker, λ = 1e-4, FedAvg warm start, μ = λ/m̄).
pub fn contraction_battery(seed: u64, instances: usize, rounds: usize) -> Result<ContractionReport, HarnessError> {
    let (d, workers, per_worker, lambda) = (30, 10, 200, 1e-4);
    let mut ratios = Vec::new();
    let mut below_1e9 = Vec::new();
    for k in 0..instances {
        let s = seed.wrapping_add(k as u64);
        let (ds, _) = synth_logistic(d, workers * per_worker, s)?;
        let loss = LossConfig::new(lambda).map_err(|e| HarnessError::Usage(e.to_string()))?;
        let objs: Vec<LogisticObjective> =
            shard_dataset(&ds, workers, s)?.into_iter().map(|sh| LogisticObjective::new(sh, loss)).collect();
        let w0 = fedavg_warmstart(&objs, 10, 0.1)?;
        let reference = newton_reference(&objs, 20)?;
        let iterates = fixed_hessian_newton(&objs, &w0, lambda / per_worker as f64, rounds + 1)?;
        for (t, r) in contraction_ratios(&objs, &iterates, &reference.w_star, reference.f_star)? {
            ratios.push((k, t, r));
        }
        let mut hit = None;
        for (t, w) in iterates.iter().enumerate() {
            if global_value(&objs, w)? - reference.f_star <= 1e-9 {
                hit = Some(t);
                break;
            }
        }
        below_1e9.push(hit);
    }
    Ok(ContractionReport { ratios, below_1e9 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub lemma1: Lemma1Report,
    pub contraction: ContractionReport,
}

/// Lemma-1 battery at d = 20 plus the contraction battery on three instances.
pub fn check_theory(seed: u64, trials: usize) -> Result<TheoryReport, HarnessError> {
    Ok(TheoryReport { lemma1: lemma1_battery(seed, trials, 20)?, contraction: contraction_battery(seed, 3, 30)? })
}
