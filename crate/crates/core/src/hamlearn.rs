//! Hamiltonian learning as SDP feasibility: find `ρ` whose local expectations
//! match a thermal target's to within ε, then read model parameters off the
//! solver weights.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactspec::{self, eigendecompose, gibbs_expectations, gibbs_state, log_partition, ExactError};
use crate::mmw::{
    zero_sum_solve, Constraint, MmwError, SdpProblem, SolveFailure, SolveOptions, SolverBackend, SolverHooks,
    StepAnnotation, StepInfo, Verdict, VerdictKind,
};
use crate::operators::{build_hubbard_spinless, build_xxz, compile, LatticeSpec, ModelTerms, OperatorError, SparseOperator};
use crate::rng::derived_rng;

const FIELD_TAG: u64 = 0x6669_656c_64;
pub const DEFAULT_STRIDE: u64 = 10;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Solver(#[from] MmwError),
    #[error(transparent)]
    Failure(#[from] Box<SolveFailure>),
    #[error("no parameters to recover from an infeasible verdict")]
    Infeasible,
    #[error("invalid learning parameter: {0}")]
    Invalid(String),
}

impl From<SolveFailure> for LearnError {
    fn from(f: SolveFailure) -> Self {
        LearnError::Failure(Box::new(f))
    }
}

pub type Result<T> = std::result::Result<T, LearnError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Hubbard { nx: usize, ny: usize, mu: f64, w: f64, u: f64 },
    /// Site fields are drawn uniformly from `[−h_max, h_max]` when `h` is absent.
    Xxz { n: usize, j: f64, delta: f64, h_max: f64, h: Option<Vec<f64>> },
}

impl ModelSpec {
    pub fn hubbard(nx: usize, ny: usize) -> Self {
        ModelSpec::Hubbard { nx, ny, mu: 1.0, w: 0.5, u: 1.2 }
    }

    pub fn xxz(n: usize) -> Self {
        ModelSpec::Xxz { n, j: 1.0, delta: 0.5, h_max: 2.0, h: None }
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            ModelSpec::Hubbard { nx, ny, .. } => nx * ny,
            ModelSpec::Xxz { n, .. } => *n,
        }
    }

    /// Fixes random fields so the spec replays exactly.
    pub fn resolved(&self, seed: u64) -> Self {
        match self {
            ModelSpec::Xxz { n, j, delta, h_max, h: None } => {
                let mut rng = derived_rng(seed, &[FIELD_TAG]);
                let h = (0..*n).map(|_| rng.random_range(-*h_max..=*h_max)).collect();
                ModelSpec::Xxz { n: *n, j: *j, delta: *delta, h_max: *h_max, h: Some(h) }
            }
            other => other.clone(),
        }
    }

    pub fn build(&self, seed: u64) -> Result<ModelTerms> {
        match self.resolved(seed) {
            ModelSpec::Hubbard { nx, ny, mu, w, u } => Ok(build_hubbard_spinless(LatticeSpec::new(nx, ny)?, mu, w, u)?),
            ModelSpec::Xxz { n, j, delta, h, .. } => Ok(build_xxz(n, j, delta, &h.expect("resolved"))?),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearningInstance {
    pub model: ModelSpec,
    pub beta_target: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub terms: ModelTerms,
    /// `tr[ρ_target O_j]` per physical term.
    pub targets: Vec<f64>,
    pub purity: f64,
    pub target_entropy: f64,
    /// Pairs `(O_j, b_j)`, `(−O_j, −b_j)` at indices `2j`, `2j+1`.
    pub problem: SdpProblem,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    model: &'a ModelSpec,
    beta_target: f64,
    epsilon: f64,
    seed: u64,
    labels: &'a [String],
    target_params: &'a [f64],
    b: &'a [f64],
    purity: f64,
}

impl LearningInstance {
    pub fn num_terms(&self) -> usize {
        self.targets.len()
    }

    /// `purity/ε²`; the TPQ solver needs this well below one.
    pub fn purity_ratio(&self) -> f64 {
        self.purity / (self.epsilon * self.epsilon)
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&Snapshot {
            model: &self.model,
            beta_target: self.beta_target,
            epsilon: self.epsilon,
            seed: self.seed,
            labels: &self.terms.labels,
            target_params: &self.terms.target_params,
            b: &self.targets,
            purity: self.purity,
        })
        .expect("snapshot serializes")
    }
}

pub fn make_instance(model: &ModelSpec, beta_target: f64, epsilon: f64, seed: u64) -> Result<LearningInstance> {
    if !(beta_target >= 0.0 && beta_target.is_finite()) {
        return Err(LearnError::Invalid(format!("beta_target = {beta_target}")));
    }
    let model = model.resolved(seed);
    let terms = model.build(seed)?;
    let h = compile(&terms.hamiltonian)?;
    let eig = Arc::new(eigendecompose(&h)?);
    let eta = gibbs_state(&eig, beta_target)?;
    let obs: Vec<SparseOperator> = terms.constraints.iter().map(compile).collect::<std::result::Result<_, _>>()?;
    let targets = gibbs_expectations(&eta, &obs)?;
    let n = model.num_qubits();
    let mut constraints = Vec::with_capacity(2 * targets.len());
    for (o, &b) in terms.constraints.iter().zip(&targets) {
        let b = b.clamp(-1.0, 1.0);
        constraints.push(Constraint { a: o.clone(), b });
        constraints.push(Constraint { a: o.scaled(-1.0), b: -b });
    }
    let problem = SdpProblem::new(n, constraints, epsilon)?;
    Ok(LearningInstance {
        model,
        beta_target,
        epsilon,
        seed,
        purity: exactspec::purity(&eta),
        target_entropy: exactspec::entropy(&eta),
        terms,
        targets,
        problem,
    })
}

/// Net weight of each constraint pair divided by the target inverse temperature.
pub fn learned_parameters(counts: &[u64], epsilon: f64, beta_target: f64) -> Vec<f64> {
    counts
        .chunks(2)
        .map(|c| (c[0] as f64 - c[1] as f64) * epsilon / 4.0 / beta_target)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LearningMetrics {
    /// `(τ, S(ρ_target‖ρ_τ))` at the sampled steps.
    pub rel_entropy: Vec<(u64, f64)>,
    pub learned: Vec<f64>,
    pub target: Vec<f64>,
    pub mse: f64,
    pub max_multiplicative_error: f64,
    pub tau: u64,
    /// Exact max violation at halt.
    pub final_exact_violation: f64,
}

fn rel_entropy_series(v: &Verdict) -> Vec<(u64, f64)> {
    v.trace.rows.iter().filter_map(|r| r.rel_entropy.map(|s| (r.tau, s))).collect()
}

pub fn recover_parameters(verdict: &Verdict, instance: &LearningInstance) -> Result<LearningMetrics> {
    if !verdict.is_feasible() {
        return Err(LearnError::Infeasible);
    }
    if instance.beta_target == 0.0 {
        return Err(LearnError::Invalid("parameters are unidentifiable at beta_target = 0".into()));
    }
    let learned = learned_parameters(&verdict.counts, instance.epsilon, instance.beta_target);
    let target = instance.terms.target_params.clone();
    let m = target.len() as f64;
    let mse = learned.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m;
    let max_multiplicative_error = learned
        .iter()
        .zip(&target)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    let obs: Vec<SparseOperator> =
        instance.problem.constraints.iter().map(|c| compile(&c.a)).collect::<std::result::Result<_, _>>()?;
    let exact = crate::mmw::exact_expectations(&verdict.hamiltonian, verdict.beta, &obs)?;
    let final_exact_violation = exact
        .iter()
        .zip(&instance.problem.constraints)
        .map(|(e, c)| e - c.b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LearningMetrics {
        rel_entropy: rel_entropy_series(verdict),
        learned,
        target,
        mse,
        max_multiplicative_error,
        tau: verdict.tau(),
        final_exact_violation,
    })
}

/// Records `S(ρ_target‖ρ_τ)` and the exact max violation every `stride`
/// steps and at halt; optionally stops on the exact criterion.
pub struct LearningHooks<'a> {
    instance: &'a LearningInstance,
    observables: Vec<SparseOperator>,
    pub stride: u64,
    pub stop_on_exact: bool,
}

impl<'a> LearningHooks<'a> {
    pub fn new(instance: &'a LearningInstance, stride: u64) -> Result<Self> {
        let observables =
            instance.problem.constraints.iter().map(|c| compile(&c.a)).collect::<std::result::Result<_, _>>()?;
        Ok(Self { instance, observables, stride: stride.max(1), stop_on_exact: false })
    }
}

/// `S(η‖ρ) = Σ_k θ_k tr[ηA_k] + ln Z − S(η)` for `ρ = e^{−βH}/Z`.
pub fn relative_entropy_to_target(instance: &LearningInstance, eigenvalues: &[f64], beta: f64, counts: &[u64]) -> f64 {
    let q = instance.epsilon / 4.0;
    let energy: f64 = counts.iter().zip(&instance.problem.constraints).map(|(&k, c)| k as f64 * q * c.b).sum();
    (energy + log_partition(eigenvalues, beta) - instance.target_entropy).max(0.0)
}

impl SolverHooks for LearningHooks<'_> {
    fn observe(&mut self, step: &StepInfo<'_>) -> crate::mmw::Result<StepAnnotation> {
        let last = step.violated.is_none() || step.tau >= step.budget;
        if step.tau % self.stride != 0 && !last && !self.stop_on_exact {
            return Ok(StepAnnotation::default());
        }
        let eig = Arc::new(eigendecompose(&compile(step.hamiltonian)?)?);
        let rel = relative_entropy_to_target(self.instance, eig.eigenvalues.as_slice(), step.beta, step.counts);
        let g = gibbs_state(&eig, step.beta)?;
        let exact = gibbs_expectations(&g, &self.observables)?;
        let mv = exact
            .iter()
            .zip(&step.problem.constraints)
            .map(|(e, c)| e - c.b)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(StepAnnotation {
            rel_entropy: Some(rel),
            exact_max_violation: Some(mv),
            stop: self.stop_on_exact && mv <= step.problem.epsilon,
        })
    }
}

pub fn run_learning(
    instance: &LearningInstance,
    backend: &SolverBackend,
    options: &SolveOptions,
    stride: u64,
) -> Result<(Verdict, LearningMetrics)> {
    let mut hooks = LearningHooks::new(instance, stride)?;
    let verdict = zero_sum_solve(&instance.problem, backend, options, &mut hooks)?;
    let metrics = recover_parameters(&verdict, instance)?;
    Ok((verdict, metrics))
}

/// Fraction of consecutive sampled steps where the relative entropy does not
/// increase (up to `tol`), and the start/end ratio.
pub fn entropy_trend(series: &[(u64, f64)], tol: f64) -> (f64, f64) {
    if series.len() < 2 {
        return (1.0, 1.0);
    }
    let steps = series.len() - 1;
    let ok = series.windows(2).filter(|w| w[1].1 <= w[0].1 + tol).count();
    let first = series[0].1;
    let last = series[series.len() - 1].1;
    (ok as f64 / steps as f64, first / last.max(f64::MIN_POSITIVE))
}

pub fn is_halted_feasible(v: &Verdict) -> bool {
    matches!(v.kind, VerdictKind::Feasible { .. })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_counts() {
        let h = make_instance(&ModelSpec::hubbard(2, 2), 0.4, 0.05, 0).unwrap();
        assert_eq!(h.problem.constraints.len(), 24);
        let x = make_instance(&ModelSpec::xxz(10), 0.4, 0.05, 0).unwrap();
        assert_eq!(x.problem.constraints.len(), 56);
        for inst in [&h, &x] {
            for pair in inst.problem.constraints.chunks(2) {
                assert_eq!(pair[1].a, pair[0].a.scaled(-1.0));
                assert_eq!(pair[1].b, -pair[0].b);
                assert!(pair[0].b.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn infinite_temperature_targets_vanish() {
        let inst = make_instance(&ModelSpec::xxz(4), 0.0, 0.1, 3).unwrap();
        assert!(inst.targets.iter().all(|b| b.abs() < 1e-12));
        assert!((inst.purity - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn fields_are_seeded() {
        let a = ModelSpec::xxz(6).resolved(9);
        let b = ModelSpec::xxz(6).resolved(9);
        let c = ModelSpec::xxz(6).resolved(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        if let ModelSpec::Xxz { h: Some(h), .. } = a {
            assert!(h.iter().all(|v| v.abs() <= 2.0));
        }
        let inst = make_instance(&ModelSpec::xxz(4), 0.4, 0.1, 9).unwrap();
        let snap: serde_json::Value = serde_json::from_str(&inst.snapshot_json()).unwrap();
        assert_eq!(snap["b"].as_array().unwrap().len(), inst.num_terms());
    }

    #[test]
    fn relative_entropy_matches_dense() {
        let inst = make_instance(&ModelSpec::xxz(4), 0.4, 0.1, 1).unwrap();
        let counts: Vec<u64> = (0..inst.problem.constraints.len() as u64).map(|k| (k * 7) % 5).collect();
        let tau: u64 = counts.iter().sum();
        let (h, beta) = crate::mmw::hamiltonian_from_theta(&inst.problem, &counts, tau).unwrap();
        let eig = Arc::new(eigendecompose(&compile(&h).unwrap()).unwrap());
        let fast = relative_entropy_to_target(&inst, eig.eigenvalues.as_slice(), beta, &counts);
        let rho = gibbs_state(&eig, beta).unwrap();
        let teig = Arc::new(eigendecompose(&compile(&inst.terms.hamiltonian).unwrap()).unwrap());
        let eta = gibbs_state(&teig, 0.4).unwrap();
        let dense = exactspec::relative_entropy(&eta, &rho).unwrap().value;
        assert!((fast - dense).abs() < 1e-9, "{fast} vs {dense}");
    }

    #[test]
    fn exact_learning_hubbard_small() {
        let inst = make_instance(&ModelSpec::hubbard(2, 2), 0.4, 0.025, 7).unwrap();
        let (v, m) = run_learning(&inst, &SolverBackend::Exact, &SolveOptions { seed: 7, ..Default::default() }, 1).unwrap();
        assert!(is_halted_feasible(&v));
        assert!(m.final_exact_violation <= 0.025 + 1e-12);
        let (frac, ratio) = entropy_trend(&m.rel_entropy, 1e-12);
        assert!(frac >= 0.95, "{frac}");
        assert!(m.rel_entropy.last().unwrap().1 <= 1e-2);
        assert!(ratio >= 10.0);
    }

    #[test]
    fn smaller_epsilon_learns_better() {
        let mut mses = Vec::new();
        for eps in [0.08, 0.04, 0.02] {
            let inst = make_instance(&ModelSpec::xxz(4), 0.4, eps, 2).unwrap();
            let (_, m) = run_learning(&inst, &SolverBackend::Exact, &SolveOptions::default(), 50).unwrap();
            mses.push(m.mse);
        }
        assert!(mses[1] <= mses[0] && mses[2] <= mses[1], "{mses:?}");
    }

    #[test]
    fn recovery_rejects_infeasible() {
        let inst = make_instance(&ModelSpec::xxz(2), 0.4, 0.1, 0).unwrap();
        let v = Verdict {
            kind: VerdictKind::Infeasible { iterations: 3 },
            trace: Default::default(),
            counts: vec![0; inst.problem.constraints.len()],
            epsilon: 0.1,
            hamiltonian: crate::PauliSum::zero(2),
            beta: 0.0,
            budget: 3,
        };
        assert!(matches!(recover_parameters(&v, &inst), Err(LearnError::Infeasible)));
    }

    #[test]
    fn learned_parameter_mapping() {
        assert_eq!(learned_parameters(&[10, 2, 0, 4], 0.1, 0.5), vec![0.4, -0.2]);
    }
}
