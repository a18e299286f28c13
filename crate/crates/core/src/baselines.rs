//! Reference procedures: FedAvg warm start for ω⁰, the exact-Newton run that
//! defines F(ω*), and a straight-line fixed-Hessian Newton iteration used as
//! an oracle for full-coverage DANL.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{factor_spd, norm, project_psd, LinalgError, SymMatrix};
use crate::loss::{global_grad, global_value, LocalObjective, LossError, ModelVector};

/// Norm above which the FedAvg warm start is declared divergent.
pub const FEDAVG_DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("FedAvg diverged at round {round}: ||w|| = {norm:e}")]
    Diverged { round: usize, norm: f64 },
    #[error("Hessian is singular at Newton iteration {iter}: {source}")]
    SingularHessian { iter: usize, source: LinalgError },
    #[error("no objectives supplied")]
    NoObjectives,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("reference cache I/O: {0}")]
    Cache(String),
}

/// FedAvg with one full-shard gradient step per worker per round, starting
/// from the zero vector.
pub fn fedavg_warmstart<L: LocalObjective>(objectives: &[L], rounds: usize, lr: f64) -> Result<ModelVector, BaselineError> {
    let first = objectives.first().ok_or(BaselineError::NoObjectives)?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(BaselineError::Invalid(format!("learning rate must be non-negative, got {lr}")));
    }
    let d = first.dim();
    let n = objectives.len() as f64;
    let mut w = vec![0.0; d];
    for round in 1..=rounds {
        let mut next = vec![0.0; d];
        for obj in objectives {
            let g = obj.grad(&w)?;
            for ((acc, wj), gj) in next.iter_mut().zip(&w).zip(&g) {
                *acc += wj - lr * gj;
            }
        }
        next.iter_mut().for_each(|x| *x /= n);
        w = next;
        let nrm = norm(&w);
        if nrm.is_nan() || nrm > FEDAVG_DIVERGENCE_NORM {
            return Err(BaselineError::Diverged { round, norm: nrm });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReference {
    pub w_star: ModelVector,
    pub f_star: f64,
    /// Loss after each iteration (index 0 is the starting point).
    pub losses: Vec<f64>,
    /// Iterations where the safeguard halved the step.
    pub halvings: usize,
}

/// Exact Newton on the global objective `(1/N) Σ Fᵢ`, refactoring the Hessian
/// every iteration, from ω = 0. If the loss rises by more than 1e-12 after the
/// first iterate, that step is halved once.
pub fn newton_reference<L: LocalObjective>(objectives: &[L], iters: usize) -> Result<NewtonReference, BaselineError> {
    let first = objectives.first().ok_or(BaselineError::NoObjectives)?;
    if iters == 0 {
        return Err(BaselineError::Invalid("newton_reference needs at least one iteration".into()));
    }
    let mut w = vec![0.0; first.dim()];
    let mut f = global_value(objectives, &w)?;
    let mut losses = vec![f];
    let mut halvings = 0;
    for iter in 1..=iters {
        let g = global_grad(objectives, &w)?;
        let hess: Vec<SymMatrix> = objectives.iter().map(|o| o.hess(&w)).collect::<Result<_, _>>()?;
        let h = SymMatrix::mean(&hess)?;
        let step = factor_spd(&h).map_err(|source| BaselineError::SingularHessian { iter, source })?.solve(&g)?;
        let mut next: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a - s).collect();
        let mut f_next = global_value(objectives, &next)?;
        if iter > 1 && f_next > f + 1e-12 {
            next = w.iter().zip(&step).map(|(a, s)| a - 0.5 * s).collect();
            f_next = global_value(objectives, &next)?;
            halvings += 1;
        }
        w = next;
        f = f_next;
        losses.push(f);
    }
    Ok(NewtonReference { w_star: w, f_star: f, losses, halvings })
}

/// `ω ← ω − [Π]_μ⁻¹ (1/N) Σ ∇Fᵢ(ω)` with Π computed once at `w0`.
/// Returns `steps + 1` iterates starting with `w0`.
pub fn fixed_hessian_newton<L: LocalObjective>(
    objectives: &[L],
    w0: &[f64],
    mu: f64,
    steps: usize,
) -> Result<Vec<ModelVector>, BaselineError> {
    if objectives.is_empty() {
        return Err(BaselineError::NoObjectives);
    }
    let mut iterates = vec![w0.to_vec()];
    if steps == 0 {
        return Ok(iterates);
    }
    let hess: Vec<SymMatrix> = objectives.iter().map(|o| o.hess(w0)).collect::<Result<_, _>>()?;
    let pi = SymMatrix::mean(&hess)?;
    let factor = factor_spd(&project_psd(&pi, mu)?)?;
    let mut w = w0.to_vec();
    for _ in 0..steps {
        let g = global_grad(objectives, &w)?;
        let step = factor.solve(&g)?;
        w.iter_mut().zip(&step).for_each(|(a, s)| *a -= s);
        iterates.push(w.clone());
    }
    Ok(iterates)
}

/// On-disk copy of a [`NewtonReference`] keyed by the inputs that determine it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSidecar {
    pub dataset: String,
    pub lambda: f64,
    pub iters: usize,
    pub workers: usize,
    pub seed: u64,
    pub reference: NewtonReference,
}

impl ReferenceSidecar {
    pub fn matches(&self, dataset: &str, lambda: f64, iters: usize, workers: usize, seed: u64) -> bool {
        self.dataset == dataset
            && self.lambda.to_bits() == lambda.to_bits()
            && self.iters == iters
            && self.workers == workers
            && self.seed == seed
    }

    pub fn load(path: &Path) -> Result<Option<Self>, BaselineError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| BaselineError::Cache(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BaselineError::Cache(e.to_string())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| BaselineError::Cache(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| BaselineError::Cache(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::QuadraticObjective;

    fn quad() -> QuadraticObjective {
        let h = SymMatrix::from_row_major(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        QuadraticObjective::new(h, vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn fedavg_single_worker_is_gradient_descent() {
        let q = quad();
        let w = fedavg_warmstart(std::slice::from_ref(&q), 10, 0.1).unwrap();
        let mut gd = vec![0.0, 0.0];
        for _ in 0..10 {
            let g = q.grad(&gd).unwrap();
            gd = gd.iter().zip(&g).map(|(a, b)| a - 0.1 * b).collect();
        }
        assert_eq!(w, gd);
        assert_eq!(fedavg_warmstart(&[q.clone(), q.clone(), q.clone()], 10, 0.1).unwrap(), w);
        assert_eq!(fedavg_warmstart(&[q], 10, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fedavg_divergence_guard() {
        let q = QuadraticObjective::new(SymMatrix::identity(1), vec![1.0]).unwrap();
        assert!(matches!(fedavg_warmstart(&[q], 100, 5.0), Err(BaselineError::Diverged { .. })));
    }

    #[test]
    fn newton_quadratic_is_one_step() {
        let r = newton_reference(&[quad()], 4).unwrap();
        let opt = factor_spd(&quad().hessian).unwrap().solve(&[1.0, -1.0]).unwrap();
        assert!(r.w_star.iter().zip(&opt).all(|(a, b)| (a - b).abs() <= 1e-14));
        assert!(r.losses[1..].windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-15));
        assert_eq!(r.halvings, 0);
    }

    #[test]
    fn newton_singular_hessian() {
        let q = QuadraticObjective::centered(SymMatrix::diagonal(&[1.0, 0.0]));
        assert!(matches!(newton_reference(&[q], 3), Err(BaselineError::SingularHessian { iter: 1, .. })));
    }

    #[test]
    fn fixed_hessian_quadratic_and_zero_steps() {
        let q = quad();
        assert_eq!(fixed_hessian_newton(std::slice::from_ref(&q), &[3.0, 4.0], 0.1, 0).unwrap(), vec![vec![3.0, 4.0]]);
        let it = fixed_hessian_newton(std::slice::from_ref(&q), &[3.0, 4.0], 0.1, 1).unwrap();
        let opt = factor_spd(&q.hessian).unwrap().solve(&[1.0, -1.0]).unwrap();
        assert!(it[1].iter().zip(&opt).all(|(a, b)| (a - b).abs() <= 1e-14));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.json");
        assert_eq!(ReferenceSidecar::load(&path).unwrap(), None);
        let s = ReferenceSidecar {
            dataset: "a1a".into(),
            lambda: 1e-4,
            iters: 20,
            workers: 10,
            seed: 3,
            reference: newton_reference(&[quad()], 2).unwrap(),
        };
        s.save(&path).unwrap();
        let back = ReferenceSidecar::load(&path).unwrap().unwrap();
        assert_eq!(back, s);
        assert!(back.matches("a1a", 1e-4, 20, 10, 3));
        assert!(!back.matches("a1a", 1e-3, 20, 10, 3));
    }
}
