//! Thermal pure quantum states `e^{−βH/2}u/‖·‖` from random stabilizer inputs,
//! median-of-means expectation estimates, and empirical error statistics.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{random_stabilizer_state, CliffordError};
use crate::exactspec::{self, dense_exp, eigendecompose, gibbs_expectations, gibbs_state, ExactError};
use crate::krylov::{ground_energy_estimate, lanczos_expmv, KrylovConfig, KrylovError};
use crate::operators::SparseOperator;
use crate::polyqet::{PolyError, QetPreparer};
use crate::rng::derived_rng;
use crate::state::StateVector;

#[derive(Debug, Error)]
pub enum TpqError {
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TpqError>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Dense eigenbasis exponential.
    Exact,
    #[default]
    Krylov,
    /// Polynomial (QET) emulation.
    Qet,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Backend::Exact),
            "krylov" => Ok(Backend::Krylov),
            "qet" => Ok(Backend::Qet),
            other => Err(format!("unknown backend '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub batches: usize,
    pub samples_per_batch: usize,
    pub backend: Backend,
    /// Target deviation; sets the polynomial accuracy of the QET backend.
    pub xi: f64,
    pub seed: u64,
    pub krylov: KrylovConfig,
    /// Final inverse temperature used for the QET ground-energy margin; defaults to β.
    pub beta_final: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            batches: 3,
            samples_per_batch: 25,
            backend: Backend::Krylov,
            xi: 0.05,
            seed: 0,
            krylov: KrylovConfig::default(),
            beta_final: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches % 2 == 0 {
            return Err(TpqError::Config(format!("batch count {} must be odd", self.batches)));
        }
        if self.samples_per_batch == 0 {
            return Err(TpqError::Config("samples_per_batch must be at least 1".into()));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(TpqError::Config(format!("xi = {} outside (0, 1)", self.xi)));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.batches * self.samples_per_batch
    }
}

enum Engine {
    Exact(nalgebra::DMatrix<Complex64>),
    Krylov,
    Qet(QetPreparer),
}

/// TPQ sampler for one `(H, β)`; backend setup is done once.
pub struct TpqPreparer<'a> {
    h: &'a SparseOperator,
    beta: f64,
    cfg: EnsembleConfig,
    engine: Engine,
}

#[derive(Clone, Debug)]
pub struct TpqSample {
    pub state: StateVector,
    /// Emulated success probability (QET backend only).
    pub p_exp: Option<f64>,
}

impl<'a> TpqPreparer<'a> {
    pub fn new(h: &'a SparseOperator, beta: f64, cfg: &EnsembleConfig) -> Result<Self> {
        cfg.validate()?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(TpqError::Config(format!("beta = {beta}")));
        }
        let engine = match cfg.backend {
            Backend::Exact => {
                let eig = eigendecompose(h)?;
                Engine::Exact(dense_exp(&eig, beta / 2.0))
            }
            Backend::Krylov => Engine::Krylov,
            Backend::Qet => {
                let beta_final = cfg.beta_final.unwrap_or(beta).max(beta).max(1e-3);
                let ge = ground_energy_estimate(h, beta_final, &cfg.krylov)?;
                Engine::Qet(QetPreparer::new(h, beta, ge.block_encoding_shift(), cfg.xi)?)
            }
        };
        Ok(Self { h, beta, cfg: cfg.clone(), engine })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    /// The random input for sample `tags`.
    pub fn input_state(&self, tags: &[u64]) -> Result<StateVector> {
        let mut rng = derived_rng(self.cfg.seed, tags);
        Ok(random_stabilizer_state(self.h.num_qubits(), &mut rng)?)
    }

    pub fn prepare(&self, tags: &[u64]) -> Result<TpqSample> {
        let u = self.input_state(tags)?;
        self.evolve(u)
    }

    pub fn evolve(&self, u: StateVector) -> Result<TpqSample> {
        if self.beta == 0.0 {
            return Ok(TpqSample { state: u, p_exp: matches!(self.engine, Engine::Qet(_)).then_some(0.25) });
        }
        match &self.engine {
            Engine::Exact(m) => {
                let w = m * nalgebra::DVector::from_column_slice(&u);
                let mut s = StateVector::new(w.as_slice().to_vec());
                s.normalize();
                Ok(TpqSample { state: s, p_exp: None })
            }
            Engine::Krylov => {
                let r = lanczos_expmv(self.h, self.beta, &u, &self.cfg.krylov)?;
                Ok(TpqSample { state: StateVector::new(r.normalized()), p_exp: None })
            }
            Engine::Qet(q) => {
                let r = q.prepare(&u)?;
                Ok(TpqSample { state: StateVector::new(r.state), p_exp: Some(r.p_exp) })
            }
        }
    }
}

/// One-off TPQ state for sample `index`.
pub fn prepare_tpq(h: &SparseOperator, beta: f64, cfg: &EnsembleConfig, index: u64) -> Result<StateVector> {
    Ok(TpqPreparer::new(h, beta, cfg)?.prepare(&[index])?.state)
}

fn quadratic_forms(state: &[Complex64], observables: &[SparseOperator]) -> Vec<f64> {
    observables
        .iter()
        .map(|a| a.expectation(state).expect("observable dimension checked").re)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TpqEstimate {
    /// Median of batch means, per observable.
    pub values: Vec<f64>,
    /// `batch_means[j][b]`
    pub batch_means: Vec<Vec<f64>>,
    pub samples: usize,
    /// Smallest emulated success probability seen (QET backend).
    pub min_p_exp: Option<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Median-of-means estimates of `⟨A_j⟩` over TPQ states drawn with tags
/// `[stream, sample]`, identical for any thread count.
pub fn estimate_expectations(
    prep: &TpqPreparer<'_>,
    observables: &[SparseOperator],
    stream: u64,
) -> Result<TpqEstimate> {
    let dim = prep.h.dim();
    if let Some(a) = observables.iter().find(|a| a.dim() != dim) {
        return Err(TpqError::Config(format!("observable dimension {} vs {dim}", a.dim())));
    }
    let cfg = &prep.cfg;
    let total = cfg.total_samples();
    let per_sample: Vec<(Vec<f64>, Option<f64>)> = (0..total)
        .into_par_iter()
        .map(|s| {
            let sample = prep.prepare(&[stream, s as u64])?;
            Ok((quadratic_forms(&sample.state, observables), sample.p_exp))
        })
        .collect::<Result<_>>()?;
    let m = observables.len();
    let mut batch_means = vec![Vec::with_capacity(cfg.batches); m];
    for b in 0..cfg.batches {
        let chunk = &per_sample[b * cfg.samples_per_batch..(b + 1) * cfg.samples_per_batch];
        for (j, bm) in batch_means.iter_mut().enumerate() {
            let s: f64 = chunk.iter().map(|(v, _)| v[j]).sum();
            bm.push(s / cfg.samples_per_batch as f64);
        }
    }
    let values = batch_means.iter().map(|b| median(b)).collect();
    let min_p_exp = per_sample.iter().filter_map(|(_, p)| *p).reduce(f64::min);
    Ok(TpqEstimate { values, batch_means, samples: total, min_p_exp })
}

/// Single-sample error statistics against the exact Gibbs values.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorStats {
    pub purity: f64,
    /// `(105/2)·√purity`
    pub bound: f64,
    pub mse: Vec<f64>,
    /// Standard error of each MSE estimate.
    pub mse_se: Vec<f64>,
    pub exact: Vec<f64>,
    /// `errors[t][j]`: sample `t`, observable `j`.
    pub errors: Vec<Vec<f64>>,
}

impl ErrorStats {
    /// Fraction of trials with `|err| ≥ ξ`, per observable.
    pub fn tail_frequency(&self, xi: f64) -> Vec<f64> {
        let t = self.errors.len() as f64;
        (0..self.exact.len())
            .map(|j| self.errors.iter().filter(|e| e[j].abs() >= xi).count() as f64 / t)
            .collect()
    }

    pub fn max_mse(&self) -> f64 {
        self.mse.iter().copied().fold(0.0, f64::max)
    }
}

pub fn mse_bound(purity: f64) -> f64 {
    52.5 * purity.sqrt()
}

pub fn tpq_error_stats(
    h: &SparseOperator,
    beta: f64,
    observables: &[SparseOperator],
    trials: usize,
    seed: u64,
) -> Result<ErrorStats> {
    let eig = Arc::new(eigendecompose(h)?);
    let g = gibbs_state(&eig, beta)?;
    let exact = gibbs_expectations(&g, observables)?;
    let purity = exactspec::purity(&g);
    let evolve = dense_exp(&eig, beta / 2.0);
    let n = h.num_qubits();
    let errors: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(seed, &[t as u64]);
            let u = random_stabilizer_state(n, &mut rng)?;
            let w = &evolve * nalgebra::DVector::from_column_slice(&u);
            let mut s = StateVector::new(w.as_slice().to_vec());
            s.normalize();
            let q = quadratic_forms(&s, observables);
            Ok(q.iter().zip(&exact).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;
    let tf = trials as f64;
    let m = observables.len();
    let mut mse = vec![0.0; m];
    let mut mse_se = vec![0.0; m];
    for j in 0..m {
        let sq: Vec<f64> = errors.iter().map(|e| e[j] * e[j]).collect();
        let mean = sq.iter().sum::<f64>() / tf;
        let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (tf - 1.0).max(1.0);
        mse[j] = mean;
        mse_se[j] = (var / tf).sqrt();
    }
    Ok(ErrorStats { purity, bound: mse_bound(purity), mse, mse_se, exact, errors })
}
