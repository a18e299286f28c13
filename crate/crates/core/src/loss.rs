//! Regularized logistic loss per worker shard, and the [`LocalObjective`]
//! abstraction the protocol drives.

use rand::Rng;
use thiserror::Error;

use crate::linalg::SymMatrix;

/// Dense model parameter vector ω ∈ ℝᵈ.
pub type ModelVector = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shard {worker_id} is empty")]
    EmptyShard { worker_id: usize },
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("regularization weight must be non-negative and finite, got {0}")]
    InvalidLambda(f64),
}

/// Logistic function, evaluated branch-wise so `exp` never overflows.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log sigmoid(z) = −log(1 + e^{−z})`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// One labelled example with sparse features, indices sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<(usize, f64)>,
    /// 0 or 1.
    pub label: f64,
}

impl Sample {
    pub fn margin(&self, w: &[f64]) -> f64 {
        self.features.iter().map(|&(j, v)| v * w[j]).sum()
    }

    fn masked_margin(&self, w: &[f64], mask: &[bool]) -> f64 {
        self.features.iter().filter(|&&(j, _)| mask[j]).map(|&(j, v)| v * w[j]).sum()
    }
}

/// A worker's local dataset 𝒟ᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub worker_id: usize,
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl Shard {
    pub fn new(worker_id: usize, dim: usize, samples: Vec<Sample>) -> Result<Self, LossError> {
        if samples.is_empty() {
            return Err(LossError::EmptyShard { worker_id });
        }
        for s in &samples {
            if let Some(&(index, _)) = s.features.iter().find(|&&(j, _)| j >= dim) {
                return Err(LossError::IndexOutOfRange { index, dim });
            }
        }
        Ok(Self { worker_id, dim, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
}

impl LossConfig {
    pub fn new(lambda: f64) -> Result<Self, LossError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LossError::InvalidLambda(lambda));
        }
        Ok(Self { lambda })
    }
}

/// A worker's local objective `Fᵢ`: value, gradient and Hessian.
pub trait LocalObjective {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> Result<f64, LossError>;
    fn grad(&self, w: &[f64]) -> Result<ModelVector, LossError>;
    fn hess(&self, w: &[f64]) -> Result<SymMatrix, LossError>;

    /// `∇Fᵢ(ω ⊙ τ) ⊙ τ`.
    fn pruned_grad(&self, w: &[f64], mask: &[bool]) -> Result<ModelVector, LossError> {
        check_dim(self.dim(), w.len())?;
        check_dim(self.dim(), mask.len())?;
        let pruned: Vec<f64> = w.iter().zip(mask).map(|(&x, &m)| if m { x } else { 0.0 }).collect();
        let mut g = self.grad(&pruned)?;
        for (gj, &m) in g.iter_mut().zip(mask) {
            if !m {
                *gj = 0.0;
            }
        }
        Ok(g)
    }

    /// A random sub-draw of the local data keeping roughly `fraction` of it.
    /// Objectives without a sample structure return `None` (use the full objective).
    fn draw<R: Rng + ?Sized>(&self, _fraction: f64, _rng: &mut R) -> Option<Self>
    where
        Self: Sized,
    {
        None
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), LossError> {
    if expected != got {
        return Err(LossError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `Fᵢ(ω) = −(1/m) Σ [b log p(aᵀω) + (1−b) log(1−p(aᵀω))] + (λ/2m)‖ω‖²`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    pub shard: Shard,
    pub cfg: LossConfig,
}

impl LogisticObjective {
    pub fn new(shard: Shard, cfg: LossConfig) -> Self {
        Self { shard, cfg }
    }

    fn reg(&self) -> f64 {
        self.cfg.lambda / self.shard.len() as f64
    }
}

impl LocalObjective for LogisticObjective {
    fn dim(&self) -> usize {
        self.shard.dim
    }

    fn value(&self, w: &[f64]) -> Result<f64, LossError> {
        check_dim(self.dim(), w.len())?;
        let m = self.shard.len() as f64;
        let nll: f64 = self
            .shard
            .samples
            .iter()
            .map(|s| {
                let z = s.margin(w);
                -(s.label * log_sigmoid(z) + (1.0 - s.label) * log_sigmoid(-z))
            })
            .sum();
        let sq: f64 = w.iter().map(|x| x * x).sum();
        Ok(nll / m + 0.5 * self.reg() * sq)
    }

    fn grad(&self, w: &[f64]) -> Result<ModelVector, LossError> {
        check_dim(self.dim(), w.len())?;
        let m = self.shard.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for s in &self.shard.samples {
            let r = sigmoid(s.margin(w)) - s.label;
            for &(j, v) in &s.features {
                g[j] += r * v;
            }
        }
        let reg = self.reg();
        for (gj, wj) in g.iter_mut().zip(w) {
            *gj = *gj / m + reg * wj;
        }
        Ok(g)
    }

    fn hess(&self, w: &[f64]) -> Result<SymMatrix, LossError> {
        check_dim(self.dim(), w.len())?;
        let d = self.dim();
        let m = self.shard.len() as f64;
        let mut h = vec![0.0; d * d];
        for s in &self.shard.samples {
            let p = sigmoid(s.margin(w));
            let c = p * (1.0 - p);
            for &(i, vi) in &s.features {
                let ci = c * vi;
                for &(j, vj) in &s.features {
                    h[i * d + j] += ci * vj;
                }
            }
        }
        let reg = self.reg();
        for (k, x) in h.iter_mut().enumerate() {
            *x /= m;
            if k % (d + 1) == 0 {
                *x += reg;
            }
        }
        Ok(SymMatrix::from_row_major(d, h).expect("finite Hessian"))
    }

    fn pruned_grad(&self, w: &[f64], mask: &[bool]) -> Result<ModelVector, LossError> {
        check_dim(self.dim(), w.len())?;
        check_dim(self.dim(), mask.len())?;
        let m = self.shard.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for s in &self.shard.samples {
            let r = sigmoid(s.masked_margin(w, mask)) - s.label;
            for &(j, v) in &s.features {
                if mask[j] {
                    g[j] += r * v;
                }
            }
        }
        let reg = self.reg();
        for ((gj, wj), &mj) in g.iter_mut().zip(w).zip(mask) {
            *gj = if mj { *gj / m + reg * wj } else { 0.0 };
        }
        Ok(g)
    }

    fn draw<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Option<Self> {
        let n = self.shard.len();
        let k = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
        idx.sort_unstable();
        let samples = idx.into_iter().map(|i| self.shard.samples[i].clone()).collect();
        Some(Self {
            shard: Shard { worker_id: self.shard.worker_id, dim: self.shard.dim, samples },
            cfg: self.cfg,
        })
    }
}

/// `F(ω) = ½ ωᵀHω − bᵀω`. Newton with the exact Hessian solves it in one step.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub hessian: SymMatrix,
    pub linear: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(hessian: SymMatrix, linear: Vec<f64>) -> Result<Self, LossError> {
        check_dim(hessian.dim(), linear.len())?;
        Ok(Self { hessian, linear })
    }

    pub fn centered(hessian: SymMatrix) -> Self {
        let d = hessian.dim();
        Self { hessian, linear: vec![0.0; d] }
    }
}

impl LocalObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.hessian.dim()
    }

    fn value(&self, w: &[f64]) -> Result<f64, LossError> {
        let hw = self.grad(w)?;
        // ½ wᵀHw − bᵀw = ½ wᵀ(Hw − b) − ½ bᵀw
        let a: f64 = w.iter().zip(&hw).map(|(x, y)| x * y).sum();
        let b: f64 = w.iter().zip(&self.linear).map(|(x, y)| x * y).sum();
        Ok(0.5 * a - 0.5 * b)
    }

    fn grad(&self, w: &[f64]) -> Result<ModelVector, LossError> {
        check_dim(self.dim(), w.len())?;
        let mut g = self.hessian.matvec(w).expect("checked dimension");
        for (gj, bj) in g.iter_mut().zip(&self.linear) {
            *gj -= bj;
        }
        Ok(g)
    }

    fn hess(&self, w: &[f64]) -> Result<SymMatrix, LossError> {
        check_dim(self.dim(), w.len())?;
        Ok(self.hessian.clone())
    }
}

/// `(1/N) Σᵢ Fᵢ(ω)`, summed in worker order.
pub fn global_value<L: LocalObjective>(objectives: &[L], w: &[f64]) -> Result<f64, LossError> {
    let mut total = 0.0;
    for obj in objectives {
        total += obj.value(w)?;
    }
    Ok(total / objectives.len() as f64)
}

/// `(1/N) Σᵢ ∇Fᵢ(ω)`, summed in worker order.
pub fn global_grad<L: LocalObjective>(objectives: &[L], w: &[f64]) -> Result<ModelVector, LossError> {
    let mut acc = vec![0.0; w.len()];
    for obj in objectives {
        let g = obj.grad(w)?;
        for (a, b) in acc.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = objectives.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}
