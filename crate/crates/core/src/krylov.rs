//! Lanczos imaginary-time evolution `e^{−βH/2}v` and ground-energy
//! estimation without densifying `H`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::operators::SparseOperator;
use crate::rng::derived_rng;
use crate::state::{inner, norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("Lanczos did not converge within {dim} vectors (residual estimate {residual:e})")]
    NonConvergence { dim: usize, residual: f64 },
    #[error("dimension mismatch: operator {op}, vector {vec}")]
    DimensionMismatch { op: usize, vec: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, KrylovError>;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct KrylovConfig {
    pub max_dim: usize,
    pub tol: f64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { max_dim: 64, tol: 1e-10 }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_dim < 2 || !(self.tol > 0.0) {
            return Err(KrylovError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Orthonormal Lanczos basis with the tridiagonal coefficients.
#[derive(Clone, Debug)]
pub struct Lanczos {
    pub basis: Vec<Vec<Complex64>>,
    pub alpha: Vec<f64>,
    /// `beta[k]` couples basis vectors `k` and `k+1`; the last entry is the
    /// residual norm past the final vector.
    pub beta: Vec<f64>,
}

impl Lanczos {
    fn start(v: &[Complex64]) -> Self {
        let nv = norm(v);
        Self {
            basis: vec![v.iter().map(|a| a / nv).collect()],
            alpha: Vec::new(),
            beta: Vec::new(),
        }
    }

    /// Extends by one vector; returns false once the space is invariant.
    fn step(&mut self, h: &SparseOperator, scratch: &mut Vec<Complex64>) -> bool {
        let k = self.alpha.len();
        let q = &self.basis[k];
        scratch.resize(q.len(), Complex64::new(0.0, 0.0));
        h.matvec_into(q, scratch).expect("dimensions checked by caller");
        let a = inner(q, scratch).re;
        self.alpha.push(a);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for b in &self.basis {
                let c = inner(b, scratch);
                scratch.iter_mut().zip(b).for_each(|(w, bi)| *w -= c * bi);
            }
        }
        let bnorm = norm(scratch);
        self.beta.push(bnorm);
        let scale = self.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(bnorm).max(1e-300);
        if bnorm <= 1e-13 * scale || self.basis.len() == q.len() {
            return false;
        }
        self.basis.push(scratch.iter().map(|w| w / bnorm).collect());
        true
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = self.alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }

    /// Ascending Ritz values.
    pub fn ritz_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.tridiagonal().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn combine(&self, y: &DVector<f64>) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.basis[0].len()];
        for (b, &c) in self.basis.iter().zip(y.iter()) {
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += bi * c);
        }
        out
    }
}

/// Runs `k` Lanczos steps from `v` (fewer if the space closes).
pub fn lanczos(h: &SparseOperator, v: &[Complex64], k: usize) -> Result<Lanczos> {
    if v.len() != h.dim() {
        return Err(KrylovError::DimensionMismatch { op: h.dim(), vec: v.len() });
    }
    let mut l = Lanczos::start(v);
    let mut scratch = Vec::new();
    for _ in 0..k {
        if !l.step(h, &mut scratch) {
            break;
        }
    }
    Ok(l)
}

/// `e^{−tT}e₁` shifted by the smallest Ritz value, with that shift.
fn small_exp(t_mat: &DMatrix<f64>, t: f64) -> (DVector<f64>, f64) {
    let eig = t_mat.clone().symmetric_eigen();
    let shift = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let s = &eig.eigenvectors;
    let k = t_mat.nrows();
    let mut y = DVector::zeros(k);
    for j in 0..k {
        let w = (-t * (eig.eigenvalues[j] - shift)).exp() * s[(0, j)];
        for i in 0..k {
            y[i] += s[(i, j)] * w;
        }
    }
    (y, shift)
}

/// Unnormalized `e^{−βH/2}v` with its norm.
#[derive(Clone, Debug)]
pub struct KrylovExp {
    pub vector: Vec<Complex64>,
    pub norm: f64,
    /// Natural log of `norm`, finite even when `norm` under- or overflows.
    pub log_norm: f64,
    pub krylov_dim: usize,
}

impl KrylovExp {
    pub fn normalized(&self) -> Vec<Complex64> {
        let nv = norm(&self.vector);
        self.vector.iter().map(|a| a / nv).collect()
    }
}

pub fn lanczos_expmv(h: &SparseOperator, beta: f64, v: &[Complex64], cfg: &KrylovConfig) -> Result<KrylovExp> {
    cfg.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(KrylovError::InvalidParameter(format!("beta = {beta}")));
    }
    if v.len() != h.dim() {
        return Err(KrylovError::DimensionMismatch { op: h.dim(), vec: v.len() });
    }
    let nv = norm(v);
    if beta == 0.0 || nv == 0.0 {
        return Ok(KrylovExp { vector: v.to_vec(), norm: nv, log_norm: nv.ln(), krylov_dim: 0 });
    }
    let t = beta / 2.0;
    let mut l = Lanczos::start(v);
    let mut scratch = Vec::new();
    let mut residual;
    loop {
        let open = l.step(h, &mut scratch);
        let k = l.dim();
        let (y, shift) = small_exp(&l.tridiagonal(), t);
        let ynorm = y.norm();
        residual = if open { l.beta[k - 1] * y[k - 1].abs() / ynorm } else { 0.0 };
        if !open || (k >= 2 && residual < cfg.tol) {
            let vector_shifted = l.combine(&y);
            let log_norm = nv.ln() - t * shift + ynorm.ln();
            let scale = nv * (-t * shift).exp();
            let vector: Vec<Complex64> = vector_shifted.iter().map(|a| a * scale).collect();
            return Ok(KrylovExp { vector, norm: log_norm.exp(), log_norm, krylov_dim: k });
        }
        if k >= cfg.max_dim {
            break;
        }
    }
    Err(KrylovError::NonConvergence { dim: l.dim(), residual })
}

/// Ritz estimate of `λ_min` and the derived shift used by the polynomial backend.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GroundEnergy {
    pub ritz: f64,
    /// Shift satisfying `λ_min − 1/(2β_T) ≤ Ξ ≤ λ_min`, or 0 when clamped.
    pub xi: f64,
    /// True when `λ_min < −1 + 1/(2β_T)` and the rule sets `Ξ = 0`.
    pub clamped: bool,
}

impl GroundEnergy {
    /// Shift actually used to form `K = H − (1+Ξ)I` with `‖K‖ ≤ 1`. In the
    /// clamped case `Ξ = 0` would push `K` towards `−2`; `−1` keeps `K = H`.
    pub fn block_encoding_shift(&self) -> f64 {
        if self.clamped {
            -1.0
        } else {
            self.xi
        }
    }
}

/// Smallest Ritz value from restarted Lanczos, converged to residual `tol`.
pub fn smallest_ritz(h: &SparseOperator, cfg: &KrylovConfig) -> Result<f64> {
    cfg.validate()?;
    let dim = h.dim();
    let mut rng = derived_rng(0x6a09_e667, &[dim as u64]);
    let mut v: Vec<Complex64> = (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let target = cfg.tol.max(1e-12);
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    for _restart in 0..40 {
        let l = lanczos(h, &v, cfg.max_dim.min(dim))?;
        let eig = l.tridiagonal().symmetric_eigen();
        let (j, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty tridiagonal");
        best = best.min(theta);
        let k = l.dim();
        let closed = l.basis.len() == k && (k == dim || *l.beta.last().unwrap() <= 1e-13);
        residual = l.beta[k - 1] * eig.eigenvectors[(k - 1, j)].abs();
        if closed || residual < target {
            return Ok(theta);
        }
        v = l.combine(&eig.eigenvectors.column(j).into_owned());
    }
    // the eigenvalue error is at most the residual
    if residual < 1e-6 {
        Ok(best)
    } else {
        Err(KrylovError::NonConvergence { dim: cfg.max_dim, residual })
    }
}

/// Ground-energy estimate with the safety margin `min(1e−4, 1/(4β_T))` and the
/// clamp rule for near-saturating spectra.
pub fn ground_energy_estimate(h: &SparseOperator, beta_final: f64, cfg: &KrylovConfig) -> Result<GroundEnergy> {
    if !(beta_final > 0.0) {
        return Err(KrylovError::InvalidParameter(format!("beta_final = {beta_final}")));
    }
    let ritz = smallest_ritz(h, cfg)?;
    let margin = 1e-4f64.min(1.0 / (4.0 * beta_final));
    if ritz < -1.0 + 1.0 / (2.0 * beta_final) {
        return Ok(GroundEnergy { ritz, xi: 0.0, clamped: true });
    }
    Ok(GroundEnergy { ritz, xi: ritz - margin, clamped: false })
}
