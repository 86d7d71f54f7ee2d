//! Complexity, copy-count and OR-lemma probability calculators. All
//! asymptotic formulas are evaluated with their hidden constants set to one.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::operators::{build_hubbard_spinless, LatticeSpec, OperatorError};
use crate::polyqet::{composite_exp_poly, exp_poly, qet_mu, sign_poly, ChebyshevPoly, PolyError};

/// OR-lemma parameters used throughout.
pub const OR_DELTA: f64 = 1.0 / 184.0;
pub const OR_ZETA: f64 = 1.0 / 32.0;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

pub type Result<T> = std::result::Result<T, ResourceError>;

fn tolerant_ceil(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `⌈(8/ξ²) ln((m+1)/δ)⌉`; zero signals the degenerate `(m+1)/δ = 1` case.
pub fn copies_required(xi: f64, m: usize, delta: f64) -> Result<u64> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(ResourceError::Range(format!("xi = {xi}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ResourceError::Range(format!("delta = {delta}")));
    }
    let x = 8.0 / (xi * xi) * ((m as f64 + 1.0) / delta).ln();
    Ok(tolerant_ceil(x.max(0.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrGapReport {
    pub p1: f64,
    pub p2: f64,
    pub gap: f64,
    pub delta: f64,
    pub zeta: f64,
    pub m: usize,
    pub purity_term: f64,
    /// False when `gap ≤ 0`.
    pub applicable: bool,
}

fn gap_report(p1: f64, p2: f64, delta: f64, zeta: f64, m: usize, purity_term: f64) -> OrGapReport {
    let p1 = p1.clamp(0.0, 1.0);
    let p2 = p2.clamp(0.0, 1.0);
    OrGapReport { p1, p2, gap: p1 - p2, delta, zeta, m, purity_term, applicable: p1 > p2 }
}

/// Acceptance bounds `P₁ = (1 − 3δ/(m+1) − q)²/4 − ζ` and `P₂ = 10δ + 5(m+1)q + ζ`.
pub fn or_lemma_probabilities(delta: f64, zeta: f64, m: usize, purity_term: f64) -> OrGapReport {
    let mp1 = m as f64 + 1.0;
    let p1 = (1.0 - 3.0 * delta / mp1 - purity_term).powi(2) / 4.0 - zeta;
    let p2 = 10.0 * delta + 5.0 * mp1 * purity_term + zeta;
    gap_report(p1, p2, delta, zeta, m, purity_term)
}

/// Smoothed step `P^ED(λ) = (1 + P^sgn(λ − c))/2` separating `λ ≤ a` from
/// `λ ≥ a + ξ`, with `a = ½ + ε/4` and `c = a + ξ/2`.
#[derive(Clone, Debug)]
pub struct EigenProjector {
    pub sign: ChebyshevPoly,
    pub lower: f64,
    pub center: f64,
    pub xi: f64,
}

impl EigenProjector {
    /// Sign accuracy `2δ/(m+1)` outside a window of half-width `ξ/4`.
    pub fn new(epsilon: f64, xi: f64, m: usize, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0 && xi > 0.0 && xi < 1.0) {
            return Err(ResourceError::Range(format!("epsilon = {epsilon}, xi = {xi}")));
        }
        let lower = 0.5 + epsilon / 4.0;
        let center = lower + xi / 2.0;
        if center + xi / 2.0 > 1.0 {
            return Err(ResourceError::Range("threshold window exceeds [0, 1]".into()));
        }
        let sign = sign_poly(2.0 * delta / (m as f64 + 1.0), xi / 2.0)?;
        Ok(Self { sign, lower, center, xi })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        0.5 * (1.0 + self.sign.eval(lambda - self.center))
    }
}

/// `Σ_k Binom(x, p, k) · P^ED(k/x)²`, summed in log space.
pub fn or_acceptance_binomial(p_true: f64, x: u64, proj: &EigenProjector) -> f64 {
    let p = p_true.clamp(0.0, 1.0);
    if x == 0 {
        return proj.eval(0.0).powi(2);
    }
    if p == 0.0 || p == 1.0 {
        let k = if p == 0.0 { 0.0 } else { 1.0 };
        return proj.eval(k).powi(2);
    }
    let xf = x as f64;
    let lnx = ln_gamma(xf + 1.0);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut acc = 0.0;
    for k in 0..=x {
        let kf = k as f64;
        let lw = lnx - ln_gamma(kf + 1.0) - ln_gamma(xf - kf + 1.0) + kf * lp + (xf - kf) * lq;
        if lw < -700.0 {
            continue;
        }
        acc += lw.exp() * proj.eval(kf / xf).powi(2);
    }
    acc.clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct OrBinomialReport {
    pub copies: u64,
    /// Acceptance at `p = a + ξ` (case i) and `p = a` (case ii).
    pub accept_high: f64,
    pub accept_low: f64,
    pub bound_high: f64,
    pub bound_low: f64,
    pub gap: OrGapReport,
}

/// Exact binomial acceptances at the two promise points, and the OR-lemma gap
/// they imply.
pub fn or_gap_binomial(epsilon: f64, xi: f64, m: usize, delta: f64, zeta: f64, purity_term: f64) -> Result<OrBinomialReport> {
    let proj = EigenProjector::new(epsilon, xi, m, delta)?;
    let x = copies_required(xi, m, delta)?;
    let accept_high = or_acceptance_binomial(proj.lower + xi, x, &proj);
    let accept_low = or_acceptance_binomial(proj.lower, x, &proj);
    let mp1 = m as f64 + 1.0;
    let p1 = (accept_high - purity_term).powi(2) / 4.0 - zeta;
    let p2 = 5.0 * mp1 * (accept_low + purity_term) + zeta;
    Ok(OrBinomialReport {
        copies: x,
        accept_high,
        accept_low,
        bound_high: 1.0 - 3.0 * delta / mp1,
        bound_low: 2.0 * delta / mp1,
        gap: gap_report(p1, p2, delta, zeta, m, purity_term),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Repetitions {
    pub k: u64,
    pub total: u64,
    pub degenerate: bool,
}

/// `K = ⌈2 ln(log₂m/δ̃)/gap²⌉` and `K·log₂m` tests overall.
pub fn or_repetitions(gap: f64, log2m: u32, delta_tilde: f64) -> Result<Repetitions> {
    if !(gap > 0.0) {
        return Err(ResourceError::Range(format!("gap = {gap}")));
    }
    if !(delta_tilde > 0.0 && delta_tilde <= 1.0) || log2m == 0 {
        return Err(ResourceError::Range(format!("delta_tilde = {delta_tilde}, log2m = {log2m}")));
    }
    let arg = (log2m as f64 / delta_tilde).ln();
    let k = tolerant_ceil((2.0 * arg / (gap * gap)).max(0.0));
    Ok(Repetitions { k, total: k * log2m as u64, degenerate: k == 0 })
}

/// Gate costs of the two block encodings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockCosts {
    pub t_k: f64,
    pub t_sqrt_a: f64,
}

impl Default for BlockCosts {
    fn default() -> Self {
        Self { t_k: 1.0, t_sqrt_a: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub n: f64,
    pub t: u64,
    pub beta_max: f64,
    pub mu: f64,
    /// `√β ln(1/μ)`
    pub qet_degree: f64,
    /// `√N`, or `N^{1/4}(ln N)^{1/2}` under the spectral condition.
    pub amplification_rounds: f64,
    /// TPQ preparation queries with all log factors.
    pub tpq_queries: f64,
    /// `tpq_queries` without log factors.
    pub tpq_queries_leading: f64,
    pub copies_x: u64,
    pub or_repetitions_k: u64,
    pub broken_check_queries: f64,
    pub total_block_encoding_queries: f64,
    /// Total gate count without the polylog factor.
    pub total_gates_leading: f64,
    pub max_depth_leading: f64,
    pub qubit_estimate: u64,
    pub spectral_condition: bool,
    pub constants: &'static str,
}

pub fn complexity_report(
    dim: f64,
    m: usize,
    epsilon: f64,
    xi: f64,
    delta_tilde: f64,
    spectral_condition: bool,
    costs: BlockCosts,
) -> Result<ComplexityReport> {
    if !(dim >= 2.0) || m == 0 {
        return Err(ResourceError::Range(format!("N = {dim}, m = {m}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 && xi > 0.0 && xi < 1.0 && delta_tilde > 0.0 && delta_tilde < 1.0) {
        return Err(ResourceError::Range(format!("epsilon = {epsilon}, xi = {xi}, delta_tilde = {delta_tilde}")));
    }
    let ln_n = dim.ln();
    let n = dim.log2();
    let t = tolerant_ceil(8.0 / (epsilon * epsilon) * ln_n);
    let beta_max = 2.0 * ln_n / epsilon;
    let mu = (xi / 8.0) * ((-0.5f64).exp() / (2.0 * dim));
    let qet_degree = beta_max.sqrt() * (1.0 / mu).ln();
    let log_nx = (dim / xi).ln();
    let (amplification_rounds, tpq_queries, tpq_queries_leading) = if spectral_condition {
        (
            dim.powf(0.25) * ln_n.sqrt(),
            (dim * ln_n * ln_n).powf(0.25) / epsilon.sqrt() * log_nx,
            dim.powf(0.25) / epsilon.sqrt(),
        )
    } else {
        ((dim).sqrt(), (dim * ln_n).sqrt() / xi.sqrt() * log_nx, dim.sqrt() / xi.sqrt())
    };
    let mf = m as f64;
    let ln_m = mf.max(3.0).ln();
    let broken_check_queries = mf.sqrt() * ln_m * ln_m * (ln_m.ln() + (1.0 / delta_tilde).ln()) / (xi * xi);
    let copies_x = copies_required(xi, m, OR_DELTA)?;
    let rep = or_repetitions(0.125, (mf.log2().ceil() as u32).max(1), delta_tilde)?;
    let total_block_encoding_queries = t as f64 * (tpq_queries * costs.t_k + broken_check_queries * costs.t_sqrt_a);
    let total_gates_leading =
        dim.sqrt() / epsilon.powf(4.5) * costs.t_k + mf.sqrt() * (costs.t_sqrt_a / epsilon.powi(4) + 1.0 / epsilon.powi(5));
    let max_depth_leading =
        dim.sqrt() / epsilon.sqrt() * costs.t_k + mf.sqrt() * (costs.t_sqrt_a + 1.0 / epsilon.powi(3));
    let qubit_estimate = n.ceil() as u64 + tolerant_ceil(mf.max(2.0).log2() / (xi * xi));
    Ok(ComplexityReport {
        n,
        t,
        beta_max,
        mu,
        qet_degree,
        amplification_rounds,
        tpq_queries,
        tpq_queries_leading,
        copies_x,
        or_repetitions_k: rep.k,
        broken_check_queries,
        total_block_encoding_queries,
        total_gates_leading,
        max_depth_leading,
        qubit_estimate,
        spectral_condition,
        constants: "all hidden constants set to 1",
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ToffoliMode {
    Amplified,
    ProofOfConcept,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToffoliEstimate {
    pub nx: usize,
    pub ny: usize,
    pub mode: ToffoliMode,
    pub gates: f64,
    pub qubits: u64,
    pub degree: f64,
    pub lcu_terms: usize,
    pub beta: f64,
    pub mu: f64,
    pub label: &'static str,
}

/// Toffoli and qubit counts for one TPQ preparation on the Hubbard lattice at
/// the final inverse temperature, using the explicit LCU exponential.
pub fn toffoli_estimate(spec: LatticeSpec, epsilon: f64, mode: ToffoliMode) -> Result<ToffoliEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ResourceError::Range(format!("epsilon = {epsilon}")));
    }
    let n = spec.sites();
    let terms = build_hubbard_spinless(spec, 1.0, 0.5, 1.2)?;
    let lcu_terms = terms.hamiltonian.terms().len();
    let dim = 2f64.powi(n as i32);
    let t = tolerant_ceil(8.0 / (epsilon * epsilon) * dim.ln());
    let beta = t as f64 * epsilon / 4.0;
    let mu = qet_mu(epsilon, n);
    let degree = beta.powf(1.5) * (1.0 / mu).ln() * (beta / mu).ln();
    let per_query = 2.0 * lcu_terms as f64;
    let base_qubits = n as u64 + (lcu_terms as f64).log2().ceil() as u64 + 3;
    let (gates, qubits) = match mode {
        ToffoliMode::ProofOfConcept => (degree * per_query, base_qubits),
        ToffoliMode::Amplified => {
            let rounds = (8.0 * 0.5f64.exp() * dim).sqrt();
            (degree * per_query * rounds, base_qubits + n as u64 + 1)
        }
    };
    Ok(ToffoliEstimate {
        nx: spec.nx,
        ny: spec.ny,
        mode,
        gates,
        qubits,
        degree,
        lcu_terms,
        beta,
        mu,
        label: "ORDER-OF-MAGNITUDE",
    })
}

/// `nx,ny,amplified_toffoli,amplified_qubits,poc_toffoli,poc_qubits` rows.
pub fn table1_csv(sizes: &[(usize, usize)], epsilon: f64) -> Result<String> {
    let mut s = String::from("nx,ny,amplified_toffoli,amplified_qubits,poc_toffoli,poc_qubits\n");
    for &(nx, ny) in sizes {
        let spec = LatticeSpec::new(nx, ny)?;
        let a = toffoli_estimate(spec, epsilon, ToffoliMode::Amplified)?;
        let p = toffoli_estimate(spec, epsilon, ToffoliMode::ProofOfConcept)?;
        s.push_str(&format!("{nx},{ny},{:.3e},{},{:.3e},{}\n", a.gates, a.qubits, p.gates, p.qubits));
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyRow {
    pub beta: f64,
    pub mu: f64,
    pub degree_exp: usize,
    pub degree_sign: usize,
    pub degree_composite: usize,
}

/// Polynomial degrees with `Δ = 1/(4β)` for the composite construction.
pub fn poly_table(pairs: &[(f64, f64)]) -> Result<Vec<PolyRow>> {
    pairs
        .iter()
        .map(|&(beta, mu)| {
            let e = exp_poly(beta, mu)?;
            let q = composite_exp_poly(beta, mu, 1.0 / (4.0 * beta).max(1.0))?;
            Ok(PolyRow {
                beta,
                mu,
                degree_exp: e.degree(),
                degree_sign: q.sign.degree(),
                degree_composite: q.degree(),
            })
        })
        .collect()
}

pub fn poly_table_csv(rows: &[PolyRow]) -> String {
    let mut s = String::from("beta,mu,degree_exp,degree_sign,degree_composite\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.beta, r.mu, r.degree_exp, r.degree_sign, r.degree_composite));
    }
    s
}

/// Default `(β, μ)` grid: β ∈ {1, 4, 16, 64} × μ ∈ {1e−2, 1e−3, 1e−4}.
pub fn default_poly_grid() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for beta in [1.0, 4.0, 16.0, 64.0] {
        for mu in [1e-2, 1e-3, 1e-4] {
            v.push((beta, mu));
        }
    }
    v
}
