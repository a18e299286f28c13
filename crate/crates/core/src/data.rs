//! LibSVM ingestion, worker sharding and a seeded synthetic logistic generator.
//!
//! The accepted line format is
//!
//! ```text
//! <label> <idx>:<val> <idx>:<val> ... [# comment]
//! ```
//!
//! with 1-based, strictly increasing indices and labels in `{+1, -1, 1, 0}`.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use thiserror::Error;

use crate::loss::{sigmoid, Sample, Shard};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset is empty")]
    Empty,
    #[error("dimension override {requested} is smaller than the largest feature index + 1 ({needed})")]
    DimTooSmall { requested: usize, needed: usize },
    #[error("cannot split {samples} samples across {workers} workers")]
    TooManyWorkers { samples: usize, workers: usize },
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dim: usize,
    pub source_name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Widens the feature dimension, e.g. so a1a/a2a/a3a share d = 123.
    pub fn with_dim(mut self, dim: usize) -> Result<Self, DataError> {
        if dim < self.dim {
            return Err(DataError::DimTooSmall { requested: dim, needed: self.dim });
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn nnz(&self) -> usize {
        self.samples.iter().map(|s| s.features.len()).sum()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.samples.iter().map(|s| s.label).sum::<f64>() / self.len() as f64
    }
}

fn parse_label(tok: &str) -> Option<f64> {
    match tok {
        "+1" | "1" | "1.0" | "+1.0" => Some(1.0),
        "-1" | "0" | "-1.0" | "0.0" => Some(0.0),
        _ => None,
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<Sample>, DataError> {
    let err = |msg: String| DataError::Parse { line: lineno, msg };
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let mut tokens = content.split_whitespace();
    let label_tok = tokens.next().expect("non-empty line has a token");
    let label = parse_label(label_tok).ok_or_else(|| err(format!("invalid label {label_tok:?}")))?;
    let mut features: Vec<(usize, f64)> = Vec::new();
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected <idx>:<val>, got {tok:?}")))?;
        let idx: usize = idx.parse().map_err(|_| err(format!("non-numeric index {idx:?}")))?;
        if idx == 0 {
            return Err(err("feature indices are 1-based; found 0".into()));
        }
        let val: f64 = val.parse().map_err(|_| err(format!("non-numeric value {val:?}")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite value {val}")));
        }
        let idx = idx - 1;
        if let Some(&(prev, _)) = features.last() {
            if idx == prev {
                return Err(err(format!("duplicate index {}", idx + 1)));
            }
            if idx < prev {
                return Err(err(format!("index {} out of order after {}", idx + 1, prev + 1)));
            }
        }
        features.push((idx, val));
    }
    Ok(Some(Sample { features, label }))
}

pub fn parse_libsvm<R: BufRead>(reader: R, source_name: &str) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(sample) = parse_line(&line, i + 1)? {
            if let Some(&(j, _)) = sample.features.last() {
                dim = dim.max(j + 1);
            }
            samples.push(sample);
        }
    }
    if samples.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset { samples, dim: dim.max(1), source_name: source_name.to_string() })
}

pub fn load_libsvm(path: &Path, dim_override: Option<usize>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = parse_libsvm(io::BufReader::new(file), &name)?;
    match dim_override {
        Some(d) => ds.with_dim(d),
        None => Ok(ds),
    }
}

pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> io::Result<()> {
    let mut line = String::new();
    for s in &ds.samples {
        line.clear();
        line.push_str(if s.label == 1.0 { "+1" } else { "-1" });
        for &(j, v) in &s.features {
            write!(line, " {}:{}", j + 1, v).expect("write to String");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Seeded shuffle followed by a contiguous split; the first `len % n` shards
/// receive one extra sample.
pub fn shard_dataset(ds: &Dataset, n_workers: usize, seed: u64) -> Result<Vec<Shard>, DataError> {
    if n_workers == 0 || n_workers > ds.len() {
        return Err(DataError::TooManyWorkers { samples: ds.len(), workers: n_workers });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = ds.len() / n_workers;
    let extra = ds.len() % n_workers;
    let mut shards = Vec::with_capacity(n_workers);
    let mut start = 0;
    for w in 0..n_workers {
        let size = base + usize::from(w < extra);
        let samples = order[start..start + size].iter().map(|&k| ds.samples[k].clone()).collect();
        shards.push(Shard { worker_id: w, dim: ds.dim, samples });
        start += size;
    }
    Ok(shards)
}

/// Dense Gaussian features, ground truth `w° ~ N(0, I/d)` so that margins
/// `aᵀw°` are roughly standard normal, labels `Bernoulli(p(aᵀw°))`.
pub fn synth_logistic(d: usize, m_total: usize, seed: u64) -> Result<(Dataset, Vec<f64>), DataError> {
    if d < 2 || m_total < d {
        return Err(DataError::Synthetic(format!("need d >= 2 and m >= d, got d={d}, m={m_total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let truth: Vec<f64> = (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    let samples = (0..m_total)
        .map(|_| {
            let features: Vec<(usize, f64)> = (0..d).map(|j| (j, StandardNormal.sample(&mut rng))).collect();
            let z: f64 = features.iter().map(|&(j, v)| v * truth[j]).sum();
            let label = Bernoulli::new(sigmoid(z)).expect("probability in [0,1]").sample(&mut rng);
            Sample { features, label: if label { 1.0 } else { 0.0 } }
        })
        .collect();
    let ds = Dataset { samples, dim: d, source_name: format!("synth-d{d}-m{m_total}-s{seed}") };
    Ok((ds, truth))
}
