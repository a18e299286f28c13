use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::protocol::Aggregation;
use crate::pruning::Budget;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "DANL_SEED";

/// Every recognised configuration key, in canonical (underscore) form.
pub const KEYS: &[&str] = &[
    "dataset",
    "dim",
    "synth_d",
    "synth_m",
    "workers",
    "regions",
    "rounds",
    "lambda",
    "mu",
    "psi_min",
    "s_min",
    "gamma_max",
    "seed",
    "fedavg_rounds",
    "fedavg_lr",
    "newton_iters",
    "aggregation",
    "subsample",
    "timing",
    "reference_cache",
];

/// One experiment: data source, protocol settings and reference settings.
///
/// `psi_min`/`s_min` left unset mean full coverage (`N` and `Q`); `mu` unset
/// means `λ / m̄` with `m̄` the mean shard size.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// LibSVM file; `None` selects the synthetic generator.
    pub dataset: Option<PathBuf>,
    /// Feature-dimension override for LibSVM input.
    pub dim: Option<usize>,
    pub synth_d: usize,
    pub synth_m: usize,
    pub workers: usize,
    pub regions: usize,
    pub rounds: usize,
    pub lambda: f64,
    pub mu: Option<f64>,
    pub psi_min: Option<usize>,
    pub s_min: Option<usize>,
    pub gamma_max: Option<usize>,
    pub seed: u64,
    pub fedavg_rounds: usize,
    pub fedavg_lr: f64,
    pub newton_iters: usize,
    pub aggregation: Aggregation,
    pub subsample: Option<f64>,
    pub timing: bool,
    pub reference_cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            dim: None,
            synth_d: 123,
            synth_m: 1605,
            workers: 10,
            regions: 4,
            rounds: 200,
            lambda: 1e-4,
            mu: None,
            psi_min: None,
            s_min: None,
            gamma_max: None,
            seed: 0,
            fedavg_rounds: 10,
            fedavg_lr: 0.1,
            newton_iters: 20,
            aggregation: Aggregation::AllWorkers,
            subsample: None,
            timing: true,
            reference_cache: None,
        }
    }
}

/// `dim-override` → `dim_override`, lower-cased.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").to_ascii_lowercase().replace('-', "_")
}

fn usage(msg: String) -> HarnessError {
    HarnessError::Usage(msg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| usage(format!("{key}: cannot parse '{value}'")))
}

fn unbounded(value: &str) -> bool {
    matches!(value.to_ascii_lowercase().as_str(), "inf" | "none" | "unbounded" | "")
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, HarnessError> {
    if unbounded(value) || value.eq_ignore_ascii_case("auto") || value.eq_ignore_ascii_case("full") {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn boolean(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(usage(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected 'key = value', got '{line}'", n + 1)))?;
        pairs.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Defaults with the seed taken from `DANL_SEED` when set.
    pub fn from_env() -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.set("seed", &v).map_err(|e| usage(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let key = normalize_key(key);
        let value = value.trim();
        let k = key.as_str();
        match k {
            "dataset" => {
                self.dataset =
                    if value.is_empty() || value.eq_ignore_ascii_case("synth") { None } else { Some(PathBuf::from(value)) }
            }
            "dim" => self.dim = optional(k, value)?,
            "synth_d" => self.synth_d = num(k, value)?,
            "synth_m" => self.synth_m = num(k, value)?,
            "workers" => self.workers = num(k, value)?,
            "regions" => self.regions = num(k, value)?,
            "rounds" => self.rounds = num(k, value)?,
            "lambda" => self.lambda = num(k, value)?,
            "mu" => self.mu = optional(k, value)?,
            "psi_min" => self.psi_min = optional(k, value)?,
            "s_min" => self.s_min = optional(k, value)?,
            "gamma_max" => self.gamma_max = optional(k, value)?,
            "seed" => self.seed = num(k, value)?,
            "fedavg_rounds" => self.fedavg_rounds = num(k, value)?,
            "fedavg_lr" => self.fedavg_lr = num(k, value)?,
            "newton_iters" => self.newton_iters = num(k, value)?,
            "aggregation" => {
                self.aggregation = match value.to_ascii_lowercase().as_str() {
                    "all" | "all_workers" | "n" => Aggregation::AllWorkers,
                    "covering" | "c" => Aggregation::Covering,
                    _ => return Err(usage(format!("aggregation: expected 'all' or 'covering', got '{value}'"))),
                }
            }
            "subsample" => self.subsample = optional(k, value)?,
            "timing" => self.timing = boolean(k, value)?,
            "reference_cache" => {
                self.reference_cache = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            _ => return Err(usage(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply<I, K, V>(&mut self, pairs: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in pairs {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("reading config {}: {e}", path.display())))?;
        self.apply(parse_pairs(&text)?)
    }

    pub fn budget(&self) -> Budget {
        Budget {
            psi_min: self.psi_min.unwrap_or(self.workers),
            s_min: self.s_min.unwrap_or(self.regions),
            gamma_max: self.gamma_max,
        }
    }

    pub fn with_budget(&self, budget: Budget) -> Self {
        Self { psi_min: Some(budget.psi_min), s_min: Some(budget.s_min), gamma_max: budget.gamma_max, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.workers == 0 {
            return Err(usage("workers must be at least 1".into()));
        }
        if self.regions == 0 {
            return Err(usage("regions must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(usage(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        match self.mu {
            Some(mu) if !(mu > 0.0 && mu.is_finite()) => {
                return Err(usage(format!("mu must be positive, got {mu}")));
            }
            None if self.lambda == 0.0 => return Err(usage("lambda = 0 needs an explicit mu".into())),
            _ => {}
        }
        if self.newton_iters == 0 {
            return Err(usage("newton_iters must be at least 1".into()));
        }
        if !(self.fedavg_lr >= 0.0 && self.fedavg_lr.is_finite()) {
            return Err(usage(format!("fedavg_lr must be non-negative, got {}", self.fedavg_lr)));
        }
        if let Some(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(usage(format!("subsample must lie in (0, 1], got {f}")));
            }
        }
        self.budget().validate(self.workers, self.regions).map_err(|e| usage(e.to_string()))
    }

    /// Renders the configuration in the file format accepted by [`parse_pairs`].
    pub fn to_file_string(&self) -> String {
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        let lines = [
            ("dataset", opt(self.dataset.as_ref().map(|p| p.display().to_string()), "synth")),
            ("dim", opt(self.dim.map(|v| v.to_string()), "auto")),
            ("synth_d", self.synth_d.to_string()),
            ("synth_m", self.synth_m.to_string()),
            ("workers", self.workers.to_string()),
            ("regions", self.regions.to_string()),
            ("rounds", self.rounds.to_string()),
            ("lambda", format!("{:e}", self.lambda)),
            ("mu", opt(self.mu.map(|v| format!("{v:e}")), "auto")),
            ("psi_min", opt(self.psi_min.map(|v| v.to_string()), "full")),
            ("s_min", opt(self.s_min.map(|v| v.to_string()), "full")),
            ("gamma_max", opt(self.gamma_max.map(|v| v.to_string()), "inf")),
            ("seed", self.seed.to_string()),
            ("fedavg_rounds", self.fedavg_rounds.to_string()),
            ("fedavg_lr", format!("{:e}", self.fedavg_lr)),
            ("newton_iters", self.newton_iters.to_string()),
            (
                "aggregation",
                match self.aggregation {
                    Aggregation::AllWorkers => "all".into(),
                    Aggregation::Covering => "covering".into(),
                },
            ),
            ("subsample", opt(self.subsample.map(|v| format!("{v:e}")), "none")),
            ("timing", self.timing.to_string()),
            ("reference_cache", opt(self.reference_cache.as_ref().map(|p| p.display().to_string()), "")),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
