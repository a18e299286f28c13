//! Dense symmetric linear algebra: Jacobi eigendecomposition, projection onto
//! `{H : H = Hᵀ, H ⪰ μI}`, and a Cholesky factorization that is computed once
//! and reused for every Newton step.

use thiserror::Error;

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm, relative to `‖A‖_F`, at which Jacobi stops.
pub const JACOBI_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix data has {len} entries, expected {dim}x{dim}")]
    Shape { dim: usize, len: usize },
    #[error("matrix dimension must be positive")]
    EmptyMatrix,
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("non-positive pivot {pivot:e} at index {index}; matrix is not positive definite")]
    NonPositivePivot { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("projection floor must be non-negative and finite, got {0}")]
    InvalidFloor(f64),
}

/// A dense symmetric matrix stored row-major.
///
/// Construction symmetrizes the input as `(M + Mᵀ)/2`, so `get(i, j) == get(j, i)`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_row_major(dim: usize, mut data: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if data.len() != dim * dim {
            return Err(LinalgError::Shape { dim, len: data.len() });
        }
        for i in 0..dim {
            for j in 0..dim {
                if !data[i * dim + j].is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            data[i * dim + i] = v;
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self
            .data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Entrywise `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SymMatrix) -> Result<SymMatrix, LinalgError> {
        if other.dim != self.dim {
            return Err(LinalgError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(SymMatrix { dim: self.dim, data })
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|a| alpha * a).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Average of equally-sized matrices, summed in slice order.
    pub fn mean<'a>(mats: impl IntoIterator<Item = &'a SymMatrix>) -> Result<SymMatrix, LinalgError> {
        let mut iter = mats.into_iter();
        let first = iter.next().ok_or(LinalgError::EmptyMatrix)?;
        let mut acc = first.data.clone();
        let mut count = 1usize;
        for m in iter {
            if m.dim != first.dim {
                return Err(LinalgError::DimensionMismatch { expected: first.dim, got: m.dim });
            }
            for (a, b) in acc.iter_mut().zip(&m.data) {
                *a += b;
            }
            count += 1;
        }
        let n = count as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(SymMatrix { dim: first.dim, data: acc })
    }
}

/// `A = V diag(λ) Vᵀ`, eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column-major: column `k` is `eigenvectors[k*d..(k+1)*d]`.
    eigenvectors: Vec<f64>,
    dim: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k * self.dim..(k + 1) * self.dim]
    }

    /// `Σ_k f(λ_k) v_k v_kᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.eigenvector(k);
            for i in 0..d {
                let wi = w * v[i];
                for j in 0..d {
                    data[i * d + j] += wi * v[j];
                }
            }
        }
        SymMatrix::from_row_major(d, data).expect("finite reconstruction")
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    /// `max |VᵀV − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = self.eigenvector(a).iter().zip(self.eigenvector(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomposition, LinalgError> {
    sym_eig_capped(a, JACOBI_MAX_SWEEPS)
}

/// [`sym_eig`] with an explicit sweep cap.
pub fn sym_eig_capped(a: &SymMatrix, max_sweeps: usize) -> Result<EigenDecomposition, LinalgError> {
    let d = a.dim;
    let mut m = a.data.clone();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale = a.frobenius_norm();
    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                s += m[i * d + j] * m[i * d + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut sweeps = 0;
    loop {
        if off_norm(&m) <= JACOBI_REL_TOL * scale {
            break;
        }
        if sweeps == max_sweeps {
            return Err(LinalgError::NoConvergence { sweeps, residual: off_norm(&m) });
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // columns: A ← A P
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                // rows: A ← Pᵀ A
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
                m[p * d + q] = 0.0;
                m[q * d + p] = 0.0;
                // V is row-major here; columns are eigenvectors.
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j * d + j].total_cmp(&m[i * d + i]));
    let eigenvalues = order.iter().map(|&k| m[k * d + k]).collect();
    let mut eigenvectors = Vec::with_capacity(d * d);
    for &k in &order {
        for row in 0..d {
            eigenvectors.push(v[row * d + k]);
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors, dim: d })
}

/// `[A]_μ = [A − μI]₀ + μI`: eigenvalues below `mu` are raised to `mu`.
///
/// Matrices already inside the cone are returned unchanged.
pub fn project_psd(a: &SymMatrix, mu: f64) -> Result<SymMatrix, LinalgError> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(LinalgError::InvalidFloor(mu));
    }
    let shifted = a.add_scaled(-mu, &SymMatrix::identity(a.dim))?;
    let eig = sym_eig(&shifted)?;
    if eig.min_eigenvalue() >= 0.0 {
        return Ok(a.clone());
    }
    let clipped = eig.reconstruct_with(|l| l.max(0.0));
    clipped.add_scaled(mu, &SymMatrix::identity(a.dim))
}

/// Lower-triangular Cholesky factor `L` with `H = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    dim: usize,
    lower: Vec<f64>,
}

pub fn factor_spd(h: &SymMatrix) -> Result<SpdFactorization, LinalgError> {
    let d = h.dim;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = h.get(j, j);
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag.is_nan() || diag <= 0.0 {
            return Err(LinalgError::NonPositivePivot { index: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = h.get(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    Ok(SpdFactorization { dim: d, lower: l })
}

impl SpdFactorization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `H x = g`.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let d = self.dim;
        if g.len() != d {
            return Err(LinalgError::DimensionMismatch { expected: d, got: g.len() });
        }
        let l = &self.lower;
        let mut y = g.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        Ok(y)
    }
}

pub fn solve(factor: &SpdFactorization, g: &[f64]) -> Result<Vec<f64>, LinalgError> {
    factor.solve(g)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
