//! WebAssembly bindings for the browser demo. Each export takes plain
//! arguments and returns a JSON string; the `*_json` functions behind them
//! are ordinary Rust and are tested natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use danl::harness::{prepare, run_prepared, ExperimentConfig};
use danl::linalg::{project_psd, sym_eig, SymMatrix};
use danl::pruning::{coverage_stats, generate_masks, Budget, CoverageLedger};

/// Largest problem the page may request.
const MAX_DIM: usize = 60;
const MAX_SAMPLES: usize = 4000;
const MAX_ROUNDS: usize = 400;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SimulateRequest {
    pub dim: usize,
    pub samples: usize,
    pub workers: usize,
    pub regions: usize,
    pub rounds: usize,
    pub psi_min: usize,
    pub s_min: usize,
    /// `0` means unbounded.
    pub gamma_max: usize,
    pub seed: u64,
    pub covering: bool,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        Self { dim: 30, samples: 2000, workers: 10, regions: 4, rounds: 100, psi_min: 10, s_min: 4, gamma_max: 0, seed: 0, covering: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResponse {
    pub rounds: Vec<usize>,
    pub gaps: Vec<f64>,
    pub regions_trained: Vec<usize>,
    pub min_coverage: Vec<usize>,
    pub gamma: Vec<usize>,
    pub f_star: f64,
    pub mu: f64,
}

pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.dim > MAX_DIM || req.samples > MAX_SAMPLES || req.rounds > MAX_ROUNDS {
        return Err(format!("demo limits: dim <= {MAX_DIM}, samples <= {MAX_SAMPLES}, rounds <= {MAX_ROUNDS}"));
    }
    let mut cfg = ExperimentConfig {
        synth_d: req.dim,
        synth_m: req.samples,
        workers: req.workers,
        regions: req.regions,
        rounds: req.rounds,
        psi_min: Some(req.psi_min),
        s_min: Some(req.s_min),
        gamma_max: (req.gamma_max > 0).then_some(req.gamma_max),
        seed: req.seed,
        timing: false,
        ..ExperimentConfig::default()
    };
    cfg.set("aggregation", if req.covering { "covering" } else { "all" }).map_err(|e| e.to_string())?;
    let inst = prepare(&cfg).map_err(|e| e.to_string())?;
    let (records, _) = run_prepared(&inst, &cfg).map_err(|e| e.to_string())?;
    let resp = SimulateResponse {
        rounds: records.iter().map(|r| r.round).collect(),
        gaps: records.iter().map(|r| r.gap).collect(),
        regions_trained: records.iter().map(|r| r.regions_trained).collect(),
        min_coverage: records.iter().map(|r| r.min_coverage).collect(),
        gamma: records.iter().map(|r| r.gamma_t).collect(),
        f_star: inst.reference.f_star,
        mu: inst.mu,
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResponse {
    /// Row-major 2×2 entries.
    pub input: [f64; 4],
    pub projected: [f64; 4],
    pub eigenvalues: [f64; 2],
    pub projected_eigenvalues: [f64; 2],
    /// Columns are unit eigenvectors, shared by both matrices.
    pub eigenvectors: [[f64; 2]; 2],
}

pub fn project_json(a11: f64, a12: f64, a22: f64, mu: f64) -> Result<String, String> {
    let a = SymMatrix::from_row_major(2, vec![a11, a12, a12, a22]).map_err(|e| e.to_string())?;
    let p = project_psd(&a, mu).map_err(|e| e.to_string())?;
    let e = sym_eig(&a).map_err(|e| e.to_string())?;
    let ep = sym_eig(&p).map_err(|e| e.to_string())?;
    let s = |m: &SymMatrix| [m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)];
    let v0 = e.eigenvector(0);
    let v1 = e.eigenvector(1);
    let resp = ProjectionResponse {
        input: s(&a),
        projected: s(&p),
        eigenvalues: [e.eigenvalues[0], e.eigenvalues[1]],
        projected_eigenvalues: [ep.eigenvalues[0], ep.eigenvalues[1]],
        eigenvectors: [[v0[0], v0[1]], [v1[0], v1[1]]],
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskResponse {
    /// `trained[t][i][q]` for Phase II round `t + 1`.
    pub trained: Vec<Vec<Vec<bool>>>,
    pub psi_star: usize,
    pub s_star: usize,
    pub gamma: Vec<usize>,
}

pub fn masks_json(
    workers: usize,
    regions: usize,
    psi_min: usize,
    s_min: usize,
    gamma_max: usize,
    rounds: usize,
    seed: u64,
) -> Result<String, String> {
    if rounds == 0 || rounds > MAX_ROUNDS {
        return Err(format!("rounds must lie in [1, {MAX_ROUNDS}]"));
    }
    let budget = Budget { psi_min, s_min, gamma_max: (gamma_max > 0).then_some(gamma_max) };
    budget.validate(workers, regions).map_err(|e| e.to_string())?;
    let mut ledger = CoverageLedger::new(workers, regions);
    let mut trained = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let m = generate_masks(workers, regions, &budget, &ledger, seed).map_err(|e| e.to_string())?;
        ledger.update(&m).map_err(|e| e.to_string())?;
        trained.push((0..workers).map(|i| (0..regions).map(|q| m.contains(i, q)).collect()).collect());
    }
    let stats = coverage_stats(&ledger).map_err(|e| e.to_string())?;
    let resp = MaskResponse { trained, psi_star: stats.psi_star, s_star: stats.s_star, gamma: stats.gamma_series };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    simulate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn project(a11: f64, a12: f64, a22: f64, mu: f64) -> Result<String, JsValue> {
    project_json(a11, a12, a22, mu).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn masks(
    workers: usize,
    regions: usize,
    psi_min: usize,
    s_min: usize,
    gamma_max: usize,
    rounds: usize,
    seed: u64,
) -> Result<String, JsValue> {
    masks_json(workers, regions, psi_min, s_min, gamma_max, rounds, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn simulate_full_coverage_converges() {
        let out: Value = serde_json::from_str(&simulate_json(r#"{"rounds": 20}"#).unwrap()).unwrap();
        let gaps = out["gaps"].as_array().unwrap();
        assert_eq!(gaps.len(), 21);
        assert!(gaps.last().unwrap().as_f64().unwrap() <= 1e-9);
    }

    #[test]
    fn simulate_is_deterministic_and_validates() {
        let req = r#"{"rounds": 15, "psi_min": 2, "s_min": 1, "gamma_max": 3, "seed": 9}"#;
        assert_eq!(simulate_json(req).unwrap(), simulate_json(req).unwrap());
        assert!(simulate_json(r#"{"dim": 1000}"#).is_err());
        assert!(simulate_json(r#"{"psi_min": 11}"#).is_err());
        assert!(simulate_json("not json").is_err());
    }

    #[test]
    fn projection_clips_negative_eigenvalue() {
        let out: Value = serde_json::from_str(&project_json(1.0, 0.0, -2.0, 0.5).unwrap()).unwrap();
        let p: Vec<f64> = out["projected"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.5]);
        let ev: Vec<f64> = out["projected_eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((ev[1] - 0.5).abs() <= 1e-12);
        assert!(project_json(1.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn mask_history_respects_budget() {
        let out: Value = serde_json::from_str(&masks_json(6, 4, 2, 2, 3, 50, 1).unwrap()).unwrap();
        assert_eq!(out["trained"].as_array().unwrap().len(), 50);
        assert!(out["psi_star"].as_u64().unwrap() >= 2);
        assert!(out["s_star"].as_u64().unwrap() >= 2);
        assert!(out["gamma"].as_array().unwrap().iter().all(|g| g.as_u64().unwrap() <= 3));
        assert!(masks_json(6, 4, 7, 2, 3, 50, 1).is_err());
    }
}
