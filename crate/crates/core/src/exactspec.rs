//! Dense spectral oracle: eigendecompositions, exact Gibbs states and their
//! expectations, purity, relative entropy, spectral-condition counting and
//! GUE sampling.

use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::operators::SparseOperator;

pub const DEFAULT_MAX_DENSE_QUBITS: usize = 12;
pub const ENTROPY_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("{n} qubits exceeds the dense limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("expectation has imaginary residue {0:e}; operator is not Hermitian")]
    NonHermitian(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, ExactError>;

/// `H = V diag(λ) V†` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= Complex64::new(self.eigenvalues[k], 0.0);
        }
        scaled * v.adjoint()
    }
}

fn check_size(dim: usize, max_qubits: usize) -> Result<()> {
    let n = dim.trailing_zeros() as usize;
    if n > max_qubits {
        return Err(ExactError::TooLarge { n, max: max_qubits });
    }
    Ok(())
}

fn sorted(values: DVector<f64>, vectors: DMatrix<Complex64>) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = DVector::from_iterator(values.len(), order.iter().map(|&k| values[k]));
    let eigenvectors = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, order[c])]);
    EigenDecomposition { eigenvalues, eigenvectors }
}

fn real_part(m: &DMatrix<Complex64>) -> Option<DMatrix<f64>> {
    m.iter().all(|v| v.im == 0.0).then(|| m.map(|v| v.re))
}

pub fn eigendecompose(op: &SparseOperator) -> Result<EigenDecomposition> {
    check_size(op.dim(), DEFAULT_MAX_DENSE_QUBITS)?;
    Ok(eigendecompose_dense(&op.to_dense()))
}

/// Eigendecomposition of a dense Hermitian matrix; real symmetric input takes
/// the cheaper real path.
pub fn eigendecompose_dense(m: &DMatrix<Complex64>) -> EigenDecomposition {
    if let Some(re) = real_part(m) {
        let eig = re.symmetric_eigen();
        sorted(eig.eigenvalues, eig.eigenvectors.map(|v| Complex64::new(v, 0.0)))
    } else {
        let eig = m.clone().symmetric_eigen();
        sorted(eig.eigenvalues, eig.eigenvectors)
    }
}

/// Ascending spectrum only.
pub fn eigenvalues(op: &SparseOperator) -> Result<Vec<f64>> {
    check_size(op.dim(), DEFAULT_MAX_DENSE_QUBITS)?;
    Ok(eigenvalues_dense(&op.to_dense()))
}

pub fn eigenvalues_dense(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = match real_part(m) {
        Some(re) => re.symmetric_eigenvalues().iter().copied().collect(),
        None => m.clone().symmetric_eigenvalues().iter().copied().collect(),
    };
    v.sort_by(f64::total_cmp);
    v
}

/// `ln Σ_k e^{−βλ_k}`, shifted by the ground energy for stability.
pub fn log_partition(eigenvalues: &[f64], beta: f64) -> f64 {
    let lmin = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = eigenvalues.iter().map(|&l| (-beta * (l - lmin)).exp()).sum();
    -beta * lmin + s.ln()
}

/// Density matrix diagonal in a known eigenbasis: `ρ = Σ p_k |v_k⟩⟨v_k|`.
#[derive(Clone, Debug)]
pub struct GibbsState {
    beta: Option<f64>,
    basis: Arc<EigenDecomposition>,
    weights: Vec<f64>,
    log_z: f64,
    density: OnceLock<DMatrix<Complex64>>,
}

pub fn gibbs_state(h: &Arc<EigenDecomposition>, beta: f64) -> Result<GibbsState> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(ExactError::InvalidParameter(format!("beta = {beta}")));
    }
    let lambdas = h.eigenvalues.as_slice();
    let lmin = lambdas[0];
    let raw: Vec<f64> = lambdas.iter().map(|&l| (-beta * (l - lmin)).exp()).collect();
    let s: f64 = raw.iter().sum();
    Ok(GibbsState {
        beta: Some(beta),
        basis: Arc::clone(h),
        weights: raw.iter().map(|w| w / s).collect(),
        log_z: -beta * lmin + s.ln(),
        density: OnceLock::new(),
    })
}

impl GibbsState {
    /// Wraps an arbitrary density matrix (not necessarily thermal).
    pub fn from_density_matrix(rho: &DMatrix<Complex64>) -> Result<Self> {
        let eig = eigendecompose_dense(rho);
        let weights: Vec<f64> = eig.eigenvalues.iter().map(|&p| p.max(0.0)).collect();
        let tr: f64 = weights.iter().sum();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(ExactError::InvalidParameter(format!("trace {tr} ≠ 1")));
        }
        Ok(Self {
            beta: None,
            basis: Arc::new(eig),
            weights,
            log_z: 0.0,
            density: OnceLock::new(),
        })
    }

    pub fn pure(v: &[Complex64]) -> Result<Self> {
        let col = DVector::from_column_slice(v);
        Self::from_density_matrix(&(&col * col.adjoint()))
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &EigenDecomposition {
        &self.basis
    }

    pub fn log_partition_function(&self) -> f64 {
        self.log_z
    }

    pub fn partition_function(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn density_matrix(&self) -> &DMatrix<Complex64> {
        self.density.get_or_init(|| {
            let v = &self.basis.eigenvectors;
            let mut scaled = v.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= Complex64::new(self.weights[k], 0.0);
            }
            scaled * v.adjoint()
        })
    }
}

/// `tr[ρA]`, summed over the eigenbasis with sparse products.
pub fn gibbs_expectation(state: &GibbsState, a: &SparseOperator) -> Result<f64> {
    let dim = state.dim();
    if a.dim() != dim {
        return Err(ExactError::DimensionMismatch(a.dim(), dim));
    }
    let vecs = &state.basis.eigenvectors;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &w) in state.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = vecs.column(k);
        let e = a.expectation(col.as_slice()).expect("dimension checked");
        acc += e * w;
    }
    if acc.im.abs() > 1e-8 {
        return Err(ExactError::NonHermitian(acc.im));
    }
    Ok(acc.re)
}

pub fn gibbs_expectations(state: &GibbsState, ops: &[SparseOperator]) -> Result<Vec<f64>> {
    ops.par_iter().map(|a| gibbs_expectation(state, a)).collect()
}

pub fn purity(state: &GibbsState) -> f64 {
    state.weights.iter().map(|w| w * w).sum()
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RelativeEntropy {
    pub value: f64,
    /// Number of eigenvalues raised to the floor.
    pub clamped: usize,
}

/// `S(η‖ρ) = tr[η(ln η − ln ρ)]` with eigenvalues floored at [`ENTROPY_FLOOR`].
pub fn relative_entropy(eta: &GibbsState, rho: &GibbsState) -> Result<RelativeEntropy> {
    if eta.dim() != rho.dim() {
        return Err(ExactError::DimensionMismatch(eta.dim(), rho.dim()));
    }
    let mut clamped = 0;
    let mut floor = |p: f64| {
        if p < ENTROPY_FLOOR {
            clamped += 1;
            ENTROPY_FLOOR
        } else {
            p
        }
    };
    let ln_p: Vec<f64> = eta.weights.iter().map(|&p| floor(p).ln()).collect();
    let ln_q: Vec<f64> = rho.weights.iter().map(|&q| floor(q).ln()).collect();
    let neg_entropy: f64 = eta.weights.iter().zip(&ln_p).map(|(p, l)| p * l).sum();
    // tr[η ln ρ] = Σ_ik p_i |⟨e_i|r_k⟩|² ln q_k
    let overlap = eta.basis.eigenvectors.adjoint() * &rho.basis.eigenvectors;
    let mut cross = 0.0;
    for (i, &p) in eta.weights.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row: f64 = (0..rho.dim()).map(|k| overlap[(i, k)].norm_sqr() * ln_q[k]).sum();
        cross += p * row;
    }
    Ok(RelativeEntropy { value: neg_entropy - cross, clamped })
}

/// Von Neumann entropy `−Σ p ln p`.
pub fn entropy(state: &GibbsState) -> f64 {
    -state.weights.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Eigenvalues in `[λ_min, λ_min + ν·n]` and their fraction of the spectrum.
pub fn spectral_condition_count(eigenvalues: &[f64], nu: f64, n: usize) -> (usize, f64) {
    let lmin = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = lmin + nu * n as f64;
    let tol = 1e-12 * (1.0 + lmin.abs().max(cutoff.abs()));
    let count = eigenvalues.iter().filter(|&&l| l <= cutoff + tol).count();
    (count, count as f64 / eigenvalues.len() as f64)
}

/// `2^{−(1 − 2βν/ln2)n} / c²`
pub fn purity_bound(c: f64, nu: f64, beta: f64, n: usize) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(ExactError::InvalidParameter(format!("c = {c} outside (0, 1]")));
    }
    if nu < 0.0 || (beta > 0.0 && nu >= LN_2 / (2.0 * beta)) {
        return Err(ExactError::InvalidParameter(format!("nu = {nu} outside [0, ln2/(2β))")));
    }
    let exponent = -(1.0 - 2.0 * beta * nu / LN_2) * n as f64;
    Ok(exponent.exp2() / (c * c))
}

/// Helmholtz free energy `−ln Z_β / β` (β > 0).
pub fn free_energy(eigenvalues: &[f64], beta: f64) -> f64 {
    -log_partition(eigenvalues, beta) / beta
}

/// Purity via `e^{−2β(F_{2β} − F_β)} = Z_{2β}/Z_β²`, evaluated in log space so
/// that β = 0 is well defined.
pub fn free_energy_purity(eigenvalues: &[f64], beta: f64) -> f64 {
    (log_partition(eigenvalues, 2.0 * beta) - 2.0 * log_partition(eigenvalues, beta)).exp()
}

pub fn sample_gue<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    assert!(n >= 2, "GUE dimension must be at least 2");
    let nf = n as f64;
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        m[(i, i)] = Complex64::new(g / nf.sqrt(), 0.0);
        for j in i + 1..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(a, b) / (2.0 * nf).sqrt();
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Cumulative semicircle law on `[−2, 2]`.
pub fn semicircle_cdf(e: f64) -> f64 {
    if e <= -2.0 {
        return 0.0;
    }
    if e >= 2.0 {
        return 1.0;
    }
    0.5 + e * (4.0 - e * e).sqrt() / (4.0 * PI) + (e / 2.0).asin() / PI
}

/// Kolmogorov distance between the empirical spectral CDF and the semicircle.
pub fn semicircle_deviation(eigenvalues: &[f64]) -> f64 {
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(f64::total_cmp);
    let n = ev.len() as f64;
    ev.iter()
        .enumerate()
        .map(|(i, &l)| {
            let f = semicircle_cdf(l);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `e^{−tH}` applied densely in the eigenbasis.
pub fn dense_exp(h: &EigenDecomposition, t: f64) -> DMatrix<Complex64> {
    let v = &h.eigenvectors;
    let mut scaled = v.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new((-t * h.eigenvalues[k]).exp(), 0.0);
    }
    scaled * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_xxz, compile, PauliSum, PauliTerm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pauli(s: &str) -> SparseOperator {
        compile(&PauliSum::from_terms(s.len(), [PauliTerm::parse(1.0, s).unwrap()]).unwrap()).unwrap()
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Scaling-and-squaring Taylor exponential, independent of any eigensolver.
    fn taylor_expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let norm = m.iter().map(|v| v.norm()).sum::<f64>();
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let a = m / Complex64::new(2f64.powi(s), 0.0);
        let dim = m.nrows();
        let mut term = DMatrix::<Complex64>::identity(dim, dim);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    #[test]
    fn pauli_spectra() {
        let z = eigendecompose(&pauli("Z")).unwrap();
        assert_eq!(z.eigenvalues.as_slice(), &[-1.0, 1.0]);
        let x = eigendecompose(&pauli("X")).unwrap();
        assert!((x.eigenvalues[0] + 1.0).abs() < 1e-14 && (x.eigenvalues[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // ground vector ∝ (|0⟩ − |1⟩)/√2 up to phase
        let g = x.eigenvectors.column(0);
        assert!((g[0].norm() - s).abs() < 1e-12 && (g[0] + g[1]).norm() < 1e-12);
        let e = x.eigenvectors.column(1);
        assert!((e[0] - e[1]).norm() < 1e-12);
    }

    #[test]
    fn reconstruction_random_16() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(16, &mut rng);
        let eig = eigendecompose_dense(&h);
        let scale = h.norm();
        assert!(max_diff(&eig.reconstruct(), &h) <= 1e-10 * scale);
        assert!(eig.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn too_large_rejected() {
        let big = compile(&PauliSum::identity(13)).unwrap();
        assert!(matches!(eigendecompose(&big), Err(ExactError::TooLarge { .. })));
    }

    #[test]
    fn gibbs_limits() {
        let z = Arc::new(eigendecompose(&pauli("Z")).unwrap());
        let g0 = gibbs_state(&z, 0.0).unwrap();
        assert_eq!(g0.weights(), &[0.5, 0.5]);
        let g = gibbs_state(&z, 0.4).unwrap();
        let ez = gibbs_expectation(&g, &pauli("Z")).unwrap();
        assert!((ez + 0.4f64.tanh()).abs() < 1e-14);
        let cold = gibbs_state(&z, 50.0).unwrap();
        let rho = cold.density_matrix();
        assert!(rho[(1, 1)].re >= 1.0 - 1e-8);
        let tr: Complex64 = rho.trace();
        assert!((tr.re - 1.0).abs() < 1e-12);
        assert!(gibbs_state(&z, -1.0).is_err());
    }

    #[test]
    fn expectation_simple_states() {
        let mixed = gibbs_state(&Arc::new(eigendecompose(&compile(&PauliSum::zero(3)).unwrap()).unwrap()), 1.0).unwrap();
        assert!(gibbs_expectation(&mixed, &pauli("IZI")).unwrap().abs() < 1e-15);
        let zero = GibbsState::pure(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert!((gibbs_expectation(&zero, &pauli("Z")).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_flagged() {
        let zero = GibbsState::pure(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)].map(|v| v / 2f64.sqrt())).unwrap();
        let skew = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
        );
        let err = gibbs_expectation(&zero, &SparseOperator::from_dense(&skew));
        assert!(matches!(err, Err(ExactError::NonHermitian(_))));
    }

    #[test]
    fn purity_examples() {
        let id = Arc::new(eigendecompose(&compile(&PauliSum::zero(4)).unwrap()).unwrap());
        assert!((purity(&gibbs_state(&id, 0.3).unwrap()) - 1.0 / 16.0).abs() < 1e-15);
        let pure = GibbsState::pure(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        assert!((purity(&pure) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xxz_purity_decreases_with_n() {
        let mut prev = 1.0;
        for n in [6, 8, 10] {
            let h: Vec<f64> = (0..n).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.8).collect();
            let m = build_xxz(n, 1.0, 0.5, &h).unwrap();
            let ev = eigenvalues(&compile(&m.hamiltonian).unwrap()).unwrap();
            let p = free_energy_purity(&ev, 0.4);
            assert!(p < prev, "n={n}: {p} !< {prev}");
            prev = p;
        }
    }

    #[test]
    fn relative_entropy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Arc::new(eigendecompose_dense(&random_hermitian(8, &mut rng)));
        let rho = gibbs_state(&h, 0.7).unwrap();
        assert!(relative_entropy(&rho, &rho).unwrap().value.abs() < 1e-12);

        let zero = GibbsState::pure(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        let half = gibbs_state(&Arc::new(eigendecompose(&compile(&PauliSum::zero(1)).unwrap()).unwrap()), 0.0).unwrap();
        let s = relative_entropy(&zero, &half).unwrap();
        assert!((s.value - LN_2).abs() < 1e-12);
        assert_eq!(s.clamped, 1);

        let mixed8 = gibbs_state(&Arc::new(eigendecompose_dense(&DMatrix::zeros(8, 8))), 0.0).unwrap();
        let s = relative_entropy(&rho, &mixed8).unwrap().value;
        assert!((s - (8f64.ln() - entropy(&rho))).abs() < 1e-12);
        assert!(s <= 8f64.ln());
    }

    #[test]
    fn spectral_count_examples() {
        let zero = vec![0.0; 16];
        assert_eq!(spectral_condition_count(&zero, 0.3, 4), (16, 1.0));
        // H = Σ Z_i over n qubits: λ = n − 2·popcount
        for n in 2..=6 {
            let ev: Vec<f64> = (0..1u32 << n).map(|b| n as f64 - 2.0 * (n as u32 - b.count_ones()) as f64).collect();
            let (count, c) = spectral_condition_count(&ev, 2.0 / n as f64, n);
            assert_eq!(count, 1 + n);
            assert!((c - (1 + n) as f64 / (1u64 << n) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn purity_bound_examples() {
        assert!((purity_bound(1.0, 0.0, 0.4, 5).unwrap() - 1.0 / 32.0).abs() < 1e-15);
        assert!(purity_bound(0.0, 0.0, 0.4, 5).is_err());
        assert!(purity_bound(0.5, LN_2 / 0.8, 0.4, 5).is_err());
        assert!(purity_bound(1e-6, 0.0, 0.4, 5).unwrap() > 1e9);
    }

    #[test]
    fn measured_purity_below_bound_xxz8() {
        let beta = 0.4;
        let n = 8;
        let h: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin() * 2.0).collect();
        let m = build_xxz(n, 1.0, 0.5, &h).unwrap();
        let ev = eigenvalues(&compile(&m.hamiltonian).unwrap()).unwrap();
        let nu = (1.0 - 1e-5) * LN_2 / (2.0 * beta);
        let (_, c) = spectral_condition_count(&ev, nu, n);
        assert!(free_energy_purity(&ev, beta) <= purity_bound(c, nu, beta, n).unwrap());
    }

    #[test]
    fn free_energy_identity() {
        let zero = vec![0.0; 16];
        assert!((free_energy_purity(&zero, 0.0) - 1.0 / 16.0).abs() < 1e-15);
        assert!((free_energy_purity(&zero, 2.0) - 1.0 / 16.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let h = Arc::new(eigendecompose_dense(&random_hermitian(16, &mut rng)));
            let beta = rng.random::<f64>() * 3.0 + 0.1;
            let g = gibbs_state(&h, beta).unwrap();
            let ev = h.eigenvalues.as_slice();
            assert!((free_energy_purity(ev, beta) - purity(&g)).abs() < 1e-10);
            assert!(free_energy(ev, 2.0 * beta) > free_energy(ev, beta));
        }
    }

    #[test]
    fn gibbs_matches_taylor_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(8, &mut rng);
        let eig = Arc::new(eigendecompose_dense(&h));
        let beta = 1.3;
        let expm = taylor_expm(&(&h * Complex64::new(-beta, 0.0)));
        let z = expm.trace();
        let rho_direct = expm / z;
        let g = gibbs_state(&eig, beta).unwrap();
        assert!(max_diff(g.density_matrix(), &rho_direct) < 1e-12);
        assert!(max_diff(&dense_exp(&eig, beta), &taylor_expm(&(&h * Complex64::new(-beta, 0.0)))) < 1e-11);
    }

    #[test]
    fn gibbs_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(8, &mut rng);
        let shifted = &h + DMatrix::identity(8, 8) * Complex64::new(3.7, 0.0);
        let a = gibbs_state(&Arc::new(eigendecompose_dense(&h)), 0.9).unwrap();
        let b = gibbs_state(&Arc::new(eigendecompose_dense(&shifted)), 0.9).unwrap();
        assert!(max_diff(a.density_matrix(), b.density_matrix()) < 1e-12);
    }

    #[test]
    fn gue_entries_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100;
        let m = sample_gue(n, &mut rng);
        let diag: f64 = (0..n).map(|i| m[(i, i)].norm_sqr()).sum::<f64>() / n as f64;
        let mut off = 0.0;
        let mut cnt = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)].norm_sqr();
                cnt += 1.0;
            }
        }
        // 100 diagonal entries is too few for ±10%; check the off-diagonals tightly.
        assert!(((off / cnt) * n as f64 - 1.0).abs() < 0.1);
        assert!((diag * n as f64 - 1.0).abs() < 0.35);
        let mut diag_acc = 0.0;
        for _ in 0..100 {
            let g = sample_gue(n, &mut rng);
            diag_acc += (0..n).map(|i| g[(i, i)].norm_sqr()).sum::<f64>();
        }
        assert!((diag_acc / 1e4 * n as f64 - 1.0).abs() < 0.1);

        let big = sample_gue(512, &mut rng);
        let ev = eigenvalues_dense(&big);
        assert!(ev[0] > -2.15 && ev[511] < 2.15);
        let small = sample_gue(2, &mut rng);
        assert!(max_diff(&small, &small.adjoint()) == 0.0);
    }

    #[test]
    fn semicircle_cdf_endpoints() {
        assert_eq!(semicircle_cdf(-3.0), 0.0);
        assert_eq!(semicircle_cdf(2.5), 1.0);
        assert!((semicircle_cdf(0.0) - 0.5).abs() < 1e-15);
        // derivative is the density √(4−E²)/(2π)
        let e: f64 = 0.7;
        let d = (semicircle_cdf(e + 1e-6) - semicircle_cdf(e - 1e-6)) / 2e-6;
        assert!((d - (4.0 - e * e).sqrt() / (2.0 * PI)).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn relative_entropy_nonnegative(seed in 0u64..10_000, b1 in 0.0f64..3.0, b2 in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h1 = Arc::new(eigendecompose_dense(&random_hermitian(4, &mut rng)));
            let h2 = Arc::new(eigendecompose_dense(&random_hermitian(4, &mut rng)));
            let s = relative_entropy(&gibbs_state(&h1, b1).unwrap(), &gibbs_state(&h2, b2).unwrap()).unwrap();
            prop_assert!(s.value >= -1e-9);
        }
    }
}
