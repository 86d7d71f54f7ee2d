//! Zero-sum matrix multiplicative weights for SDP feasibility
//! `tr[A_j ρ] ≤ b_j + ε`, with exact Gibbs or TPQ expectation backends.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exactspec::{eigendecompose, gibbs_expectations, gibbs_state, ExactError};
use crate::operators::{compile, OperatorError, PauliSum, SparseOperator};
use crate::rng::derived_rng;
use crate::tpq::{estimate_expectations, EnsembleConfig, TpqError, TpqPreparer};

/// Norm slack when validating `‖A_j‖ ≤ 1`.
const NORM_TOL: f64 = 1e-9;
const SHUFFLE_TAG: u64 = 0x5348_5546;

#[derive(Debug, Error)]
pub enum MmwError {
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Tpq(#[from] TpqError),
    #[error("hook failed: {0}")]
    Hook(String),
}

pub type Result<T> = std::result::Result<T, MmwError>;

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub a: PauliSum,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub n: usize,
    pub constraints: Vec<Constraint>,
    pub epsilon: f64,
    /// Objective `C` for [`binary_search_optimize`].
    pub objective: Option<PauliSum>,
    /// Trace bound `R` on the matrix variable.
    pub trace_bound: f64,
}

impl SdpProblem {
    pub fn new(n: usize, constraints: Vec<Constraint>, epsilon: f64) -> Result<Self> {
        let p = Self { n, constraints, epsilon, objective: None, trace_bound: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_objective(mut self, c: PauliSum) -> Result<Self> {
        self.objective = Some(c);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(MmwError::Problem(format!("epsilon = {}", self.epsilon)));
        }
        if !(self.trace_bound > 0.0) {
            return Err(MmwError::Problem(format!("trace bound = {}", self.trace_bound)));
        }
        if self.n == 0 {
            return Err(MmwError::Problem("zero qubits".into()));
        }
        let check_op = |label: String, a: &PauliSum| -> Result<()> {
            if a.num_qubits() != self.n {
                return Err(MmwError::Problem(format!("{label} acts on {} qubits, expected {}", a.num_qubits(), self.n)));
            }
            let nrm = a.spectral_norm()?;
            if nrm > 1.0 + NORM_TOL {
                return Err(MmwError::Problem(format!("{label} has norm {nrm} > 1")));
            }
            Ok(())
        };
        for (j, c) in self.constraints.iter().enumerate() {
            if !(-1.0..=1.0).contains(&c.b) {
                return Err(MmwError::Problem(format!("b_{j} = {} outside [-1, 1]", c.b)));
            }
            check_op(format!("A_{j}"), &c.a)?;
        }
        if let Some(c) = &self.objective {
            check_op("objective".into(), c)?;
        }
        Ok(())
    }
}

/// Unit-trace form: operators become `A ⊕ 0` on one extra (top) qubit and
/// `b, ε` are divided by `R`.
pub fn rescale_problem(raw: &SdpProblem, r: f64) -> Result<SdpProblem> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(MmwError::Problem(format!("R = {r}")));
    }
    let n = raw.n + 1;
    let pad = |a: &PauliSum| -> Result<PauliSum> {
        let plain = a.extend(n, None)?;
        let with_z = a.extend(n, Some(raw.n))?;
        Ok(PauliSum::linear_combination(n, &[(0.5, &plain), (0.5, &with_z)])?)
    };
    let constraints = raw
        .constraints
        .iter()
        .map(|c| Ok(Constraint { a: pad(&c.a)?, b: c.b / r }))
        .collect::<Result<Vec<_>>>()?;
    let objective = raw.objective.as_ref().map(pad).transpose()?;
    let p = SdpProblem { n, constraints, epsilon: raw.epsilon / r, objective, trace_bound: 1.0 };
    p.validate()?;
    Ok(p)
}

/// `⌈(8/ε²) ln N⌉`
pub fn iteration_budget(epsilon: f64, dim: usize) -> u64 {
    let x = 8.0 / (epsilon * epsilon) * (dim as f64).ln();
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `H^τ = (4/(τε)) Σ θ_j A_j` and `β^τ = τε/4` from integer update counts
/// (`θ_j = counts_j · ε/4`).
pub fn hamiltonian_from_theta(problem: &SdpProblem, counts: &[u64], tau: u64) -> Result<(PauliSum, f64)> {
    if tau == 0 {
        return Err(MmwError::Problem("H^τ is undefined at τ = 0".into()));
    }
    if counts.len() != problem.constraints.len() {
        return Err(MmwError::Problem(format!("{} weights for {} constraints", counts.len(), problem.constraints.len())));
    }
    let total: u64 = counts.iter().sum();
    if total != tau {
        return Err(MmwError::Problem(format!("weights sum to {total} updates, τ = {tau}")));
    }
    let t = tau as f64;
    let parts: Vec<(f64, &PauliSum)> = counts
        .iter()
        .zip(&problem.constraints)
        .filter(|(k, _)| **k > 0)
        .map(|(k, c)| (*k as f64 / t, &c.a))
        .collect();
    let h = PauliSum::linear_combination(problem.n, &parts)?;
    Ok((h, t * problem.epsilon / 4.0))
}

/// First index, in a fresh random order, with `estimate > b + ε`.
pub fn find_broken_constraint<R: Rng + ?Sized>(problem: &SdpProblem, estimates: &[f64], rng: &mut R) -> Option<usize> {
    let mut order: Vec<usize> = (0..problem.constraints.len()).collect();
    order.shuffle(rng);
    order.into_iter().find(|&j| estimates[j] > problem.constraints[j].b + problem.epsilon)
}

fn max_violation(problem: &SdpProblem, estimates: &[f64]) -> f64 {
    estimates
        .iter()
        .zip(&problem.constraints)
        .map(|(e, c)| e - c.b)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolverBackend {
    Exact,
    Tpq(EnsembleConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Seeds the constraint-check order.
    pub seed: u64,
    pub record_time: bool,
    /// Overrides the iteration budget.
    pub max_iterations: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { seed: 0, record_time: false, max_iterations: None }
    }
}

/// Everything a hook may inspect at one step.
pub struct StepInfo<'a> {
    pub problem: &'a SdpProblem,
    pub tau: u64,
    pub budget: u64,
    pub beta: f64,
    pub counts: &'a [u64],
    pub hamiltonian: &'a PauliSum,
    pub estimates: &'a [f64],
    pub violated: Option<usize>,
    pub max_violation: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepAnnotation {
    pub rel_entropy: Option<f64>,
    /// Max `tr[A_j ρ_τ] − b_j` with exact Gibbs values.
    pub exact_max_violation: Option<f64>,
    pub stop: bool,
}

pub trait SolverHooks {
    fn observe(&mut self, step: &StepInfo<'_>) -> Result<StepAnnotation>;
}

pub struct NoHooks;

impl SolverHooks for NoHooks {
    fn observe(&mut self, _: &StepInfo<'_>) -> Result<StepAnnotation> {
        Ok(StepAnnotation::default())
    }
}

/// Stops as soon as the exact Gibbs state meets every constraint within ε.
pub struct ExactEarlyStop {
    observables: Vec<SparseOperator>,
}

impl ExactEarlyStop {
    pub fn new(problem: &SdpProblem) -> Result<Self> {
        let observables = problem.constraints.iter().map(|c| compile(&c.a)).collect::<std::result::Result<_, _>>()?;
        Ok(Self { observables })
    }
}

impl SolverHooks for ExactEarlyStop {
    fn observe(&mut self, step: &StepInfo<'_>) -> Result<StepAnnotation> {
        let values = exact_expectations(step.hamiltonian, step.beta, &self.observables)?;
        let v = max_violation(step.problem, &values);
        Ok(StepAnnotation { exact_max_violation: Some(v), stop: v <= step.problem.epsilon, ..Default::default() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub tau: u64,
    pub beta: f64,
    pub violated_index: Option<usize>,
    pub max_violation: f64,
    pub exact_max_violation: Option<f64>,
    pub rel_entropy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub const CSV_HEADER: &'static str = "tau,beta,violated_index,max_violation,rel_entropy,seconds";

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let vi = r.violated_index.map(|v| v.to_string()).unwrap_or_default();
            let re = r.rel_entropy.map(|v| format!("{v:.12e}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:.12e},{},{:.12e},{},{:.6}\n",
                r.tau, r.beta, vi, r.max_violation, re, r.seconds
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    Feasible { tau: u64 },
    /// Halted by a hook before the algorithm's own test passed.
    Stopped { tau: u64 },
    Infeasible { iterations: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub trace: SolverTrace,
    /// Update counts per constraint; `θ_j = counts_j · ε/4`.
    pub counts: Vec<u64>,
    pub epsilon: f64,
    /// Final `H^τ` (zero at τ = 0) and `β^τ`.
    pub hamiltonian: PauliSum,
    pub beta: f64,
    pub budget: u64,
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        !matches!(self.kind, VerdictKind::Infeasible { .. })
    }

    pub fn tau(&self) -> u64 {
        match self.kind {
            VerdictKind::Feasible { tau } | VerdictKind::Stopped { tau } => tau,
            VerdictKind::Infeasible { iterations } => iterations,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        self.counts.iter().map(|&k| k as f64 * self.epsilon / 4.0).collect()
    }
}

#[derive(Debug, Error)]
#[error("solver aborted after {} rows: {error}", partial.len())]
pub struct SolveFailure {
    pub error: MmwError,
    pub partial: SolverTrace,
}

/// Exact `tr[A_j e^{−βH}]/Z`.
pub fn exact_expectations(h: &PauliSum, beta: f64, observables: &[SparseOperator]) -> Result<Vec<f64>> {
    let eig = Arc::new(eigendecompose(&compile(h)?)?);
    let g = gibbs_state(&eig, beta)?;
    Ok(gibbs_expectations(&g, observables)?)
}

/// Distinct observables up to sign: `A_j = sign_j · U_{index_j}`.
struct ObservableSet {
    unique: Vec<SparseOperator>,
    map: Vec<(usize, f64)>,
}

impl ObservableSet {
    fn new(problem: &SdpProblem) -> Result<Self> {
        let mut reps: Vec<&PauliSum> = Vec::new();
        let mut map = Vec::new();
        for c in &problem.constraints {
            let neg = c.a.scaled(-1.0);
            if let Some(k) = reps.iter().position(|r| **r == c.a) {
                map.push((k, 1.0));
            } else if let Some(k) = reps.iter().position(|r| **r == neg) {
                map.push((k, -1.0));
            } else {
                map.push((reps.len(), 1.0));
                reps.push(&c.a);
            }
        }
        let unique = reps.into_iter().map(compile).collect::<std::result::Result<_, _>>()?;
        Ok(Self { unique, map })
    }

    fn expand(&self, values: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&(k, s)| s * values[k]).collect()
    }
}

fn estimate(
    backend: &SolverBackend,
    obs: &ObservableSet,
    h: &PauliSum,
    beta: f64,
    tau: u64,
    beta_final: f64,
) -> Result<Vec<f64>> {
    let raw = match backend {
        SolverBackend::Exact => exact_expectations(h, beta, &obs.unique)?,
        SolverBackend::Tpq(cfg) => {
            let op = compile(h)?;
            let mut cfg = cfg.clone();
            cfg.beta_final.get_or_insert(beta_final);
            let prep = TpqPreparer::new(&op, beta, &cfg)?;
            estimate_expectations(&prep, &obs.unique, tau)?.values
        }
    };
    Ok(obs.expand(&raw))
}

/// Runs the zero-sum loop from `ρ₀ = I/N` until no constraint is violated or
/// the iteration budget is exhausted.
pub fn zero_sum_solve(
    problem: &SdpProblem,
    backend: &SolverBackend,
    options: &SolveOptions,
    hooks: &mut dyn SolverHooks,
) -> std::result::Result<Verdict, SolveFailure> {
    let mut trace = SolverTrace::default();
    let fail = |error: MmwError, trace: &SolverTrace| SolveFailure { error, partial: trace.clone() };
    problem.validate().map_err(|e| fail(e, &trace))?;
    let obs = ObservableSet::new(problem).map_err(|e| fail(e, &trace))?;
    let budget = options.max_iterations.unwrap_or_else(|| iteration_budget(problem.epsilon, problem.dim()));
    let beta_final = (budget.max(1) as f64) * problem.epsilon / 4.0;
    let m = problem.constraints.len();
    let mut counts = vec![0u64; m];
    let mut tau = 0u64;
    let start = Instant::now();
    loop {
        let (h, beta) = if tau == 0 {
            (PauliSum::zero(problem.n), 0.0)
        } else {
            hamiltonian_from_theta(problem, &counts, tau).map_err(|e| fail(e, &trace))?
        };
        let values = estimate(backend, &obs, &h, beta, tau, beta_final).map_err(|e| fail(e, &trace))?;
        let mut rng = derived_rng(options.seed, &[SHUFFLE_TAG, tau]);
        let violated = find_broken_constraint(problem, &values, &mut rng);
        let mv = max_violation(problem, &values);
        let info = StepInfo {
            problem,
            tau,
            budget,
            beta,
            counts: &counts,
            hamiltonian: &h,
            estimates: &values,
            violated,
            max_violation: mv,
        };
        let ann = hooks.observe(&info).map_err(|e| fail(e, &trace))?;
        trace.rows.push(TraceRow {
            tau,
            beta,
            violated_index: violated,
            max_violation: mv,
            exact_max_violation: ann.exact_max_violation,
            rel_entropy: ann.rel_entropy,
            seconds: if options.record_time { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        let kind = match violated {
            None => Some(VerdictKind::Feasible { tau }),
            Some(_) if ann.stop => Some(VerdictKind::Stopped { tau }),
            Some(_) if tau >= budget => Some(VerdictKind::Infeasible { iterations: tau }),
            Some(_) => None,
        };
        if let Some(kind) = kind {
            return Ok(Verdict { kind, trace, counts, epsilon: problem.epsilon, hamiltonian: h, beta, budget });
        }
        counts[violated.expect("checked above")] += 1;
        tau += 1;
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    /// Largest `a₀` found feasible for `tr[Cρ] ≥ a₀ − ε`.
    pub value: f64,
    pub witness: Option<Verdict>,
    pub calls: u32,
}

/// Maximizes `tr[Cρ]` by bisection on `a₀ ∈ [−1, 1]` with the extra
/// constraint `tr[−Cρ] ≤ −a₀`.
pub fn binary_search_optimize(
    problem: &SdpProblem,
    backend: &SolverBackend,
    options: &SolveOptions,
) -> std::result::Result<OptimizeResult, SolveFailure> {
    let c = problem.objective.clone().ok_or_else(|| SolveFailure {
        error: MmwError::Problem("no objective".into()),
        partial: SolverTrace::default(),
    })?;
    let calls = (1.0 / problem.epsilon).log2().ceil().max(1.0) as u32;
    let neg_c = c.scaled(-1.0);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut witness = None;
    for k in 0..calls {
        let mid = 0.5 * (lo + hi);
        let mut p = problem.clone();
        p.objective = None;
        p.constraints.insert(0, Constraint { a: neg_c.clone(), b: -mid });
        let opts = SolveOptions { seed: crate::rng::derive_seed(options.seed, &[k as u64]), ..options.clone() };
        let v = zero_sum_solve(&p, backend, &opts, &mut NoHooks)?;
        if v.is_feasible() {
            lo = mid;
            witness = Some(v);
        } else {
            hi = mid;
        }
    }
    Ok(OptimizeResult { value: lo, witness, calls })
}
