//! Chebyshev approximations of `e^{−β(x+1)}` and of the sign function, the
//! even composite exponential built from them, Clenshaw application to sparse
//! operators, and the classical emulation of the polynomial TPQ preparation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::erf::{erf, erf_inv};
use thiserror::Error;

use crate::operators::SparseOperator;
use crate::rng::derived_rng;
use crate::state::norm;

pub const GRID_POINTS: usize = 10_000;
const MAX_DEGREE: usize = 1 << 16;
const TRIM: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no polynomial up to degree {max} meets tolerance {tol:e} (best {best:e})")]
    Construction { max: usize, tol: f64, best: f64 },
    #[error("operator norm estimate {0} exceeds 1")]
    NormViolation(f64),
    #[error("dimension mismatch: operator {op}, vector {vec}")]
    DimensionMismatch { op: usize, vec: usize },
    #[error("success probability {0:e} underflowed")]
    Underflow(f64),
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// Polynomial on `[−1, 1]` in the Chebyshev-T basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevPoly {
    coefficients: Vec<f64>,
}

impl ChebyshevPoly {
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        while coefficients.len() > 1 && coefficients.last().is_some_and(|c| c.abs() < TRIM) {
            coefficients.pop();
        }
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Self { coefficients }
    }

    pub fn constant(c: f64) -> Self {
        Self { coefficients: vec![c] }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in c.iter().skip(1).rev() {
            let b0 = ck + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        c[0] + x * b1 - b2
    }

    pub fn max_abs_on_grid(&self) -> f64 {
        chebyshev_grid().iter().map(|&x| self.eval(x).abs()).fold(0.0, f64::max)
    }

    fn truncated(&self, degree: usize) -> Self {
        Self::new(self.coefficients[..=degree.min(self.degree())].to_vec())
    }
}

/// `GRID_POINTS` Chebyshev points plus both endpoints.
pub fn chebyshev_grid() -> Arc<Vec<f64>> {
    use std::sync::OnceLock;
    static GRID: OnceLock<Arc<Vec<f64>>> = OnceLock::new();
    GRID.get_or_init(|| {
        let m = GRID_POINTS as f64;
        let mut g: Vec<f64> = (0..GRID_POINTS).map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / m).cos()).collect();
        g.push(1.0);
        g.push(-1.0);
        Arc::new(g)
    })
    .clone()
}

/// Chebyshev interpolant of `f` on `m` first-kind nodes via an FFT-based DCT-II.
pub fn chebyshev_interpolant(f: impl Fn(f64) -> f64, m: usize) -> ChebyshevPoly {
    let mf = m as f64;
    let samples: Vec<f64> = (0..m).map(|k| f((std::f64::consts::PI * (k as f64 + 0.5) / mf).cos())).collect();
    // even extension of length 2m turns the DCT-II into a DFT
    let mut buf: Vec<Complex64> = samples
        .iter()
        .chain(samples.iter().rev())
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(2 * m).process(&mut buf);
    let coefficients = (0..m)
        .map(|j| {
            let phase = Complex64::from_polar(1.0, -std::f64::consts::PI * j as f64 / (2.0 * mf));
            let s = (buf[j] * phase).re / 2.0;
            let c = 2.0 * s / mf;
            if j == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect();
    ChebyshevPoly::new(coefficients)
}

fn grid_error(p: &ChebyshevPoly, f: &impl Fn(f64) -> f64, region: &impl Fn(f64) -> bool) -> f64 {
    chebyshev_grid()
        .iter()
        .filter(|&&x| region(x))
        .map(|&x| (p.eval(x) - f(x)).abs())
        .fold(0.0, f64::max)
}

/// Smallest-degree truncation of a Chebyshev fit to `f` whose grid error on
/// `region` is at most `tol`.
fn fit_to_tolerance(
    f: impl Fn(f64) -> f64,
    region: impl Fn(f64) -> bool,
    tol: f64,
    parity: Option<usize>,
) -> Result<ChebyshevPoly> {
    let mut m = 64;
    let mut best = f64::INFINITY;
    while m <= MAX_DEGREE {
        let mut full = chebyshev_interpolant(&f, m);
        if let Some(par) = parity {
            for (j, c) in full.coefficients.iter_mut().enumerate() {
                if j % 2 != par {
                    *c = 0.0;
                }
            }
        }
        // tail sums bound the truncation error against the interpolant
        let c = &full.coefficients;
        let mut tail = vec![0.0; c.len() + 1];
        for j in (0..c.len()).rev() {
            tail[j] = tail[j + 1] + c[j].abs();
        }
        // the interpolant is only trusted once its last coefficients are negligible
        let resolved = c.len() + 8 <= m || tail[c.len() - 8] < tol * 1e-3;
        if resolved {
            let mut hi = (0..c.len()).find(|&d| tail[d + 1] <= 0.5 * tol).unwrap_or(c.len() - 1);
            let err_hi = grid_error(&full.truncated(hi), &f, &region);
            if err_hi <= tol {
                let mut lo = 0usize;
                // invariant: truncation at hi passes
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if grid_error(&full.truncated(mid), &f, &region) <= tol {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                return Ok(full.truncated(hi));
            }
            best = best.min(err_hi);
        }
        m *= 2;
    }
    Err(PolyError::Construction { max: MAX_DEGREE, tol, best })
}

/// `P ≈ e^{−β(x+1)}` with grid error `≤ μ` and `|P| ≤ 1` on `[−1, 1]`.
pub fn exp_poly(beta: f64, mu: f64) -> Result<ChebyshevPoly> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(PolyError::InvalidParameter(format!("beta = {beta}")));
    }
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(PolyError::InvalidParameter(format!("mu = {mu} outside (0, 1/2]")));
    }
    if beta == 0.0 {
        return Ok(ChebyshevPoly::constant(1.0));
    }
    let f = move |x: f64| (-beta * (x + 1.0)).exp();
    let p = fit_to_tolerance(f, |_| true, mu, None)?;
    if p.max_abs_on_grid() <= 1.0 {
        return Ok(p);
    }
    let g = move |x: f64| (1.0 - mu / 2.0) * f(x);
    let p = fit_to_tolerance(g, |_| true, mu / 2.0, None)?;
    debug_assert!(grid_error(&p, &f, &|_| true) <= mu);
    Ok(p)
}

/// Odd `P ≈ sgn(x)` with `|P| ≤ 1` and error `≤ ζ` for `|x| ≥ Δ/2`.
pub fn sign_poly(zeta: f64, delta: f64) -> Result<ChebyshevPoly> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(PolyError::InvalidParameter(format!("zeta = {zeta} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PolyError::InvalidParameter(format!("Delta = {delta} outside (0, 1)")));
    }
    let k = erf_inv(1.0 - zeta / 4.0) / (delta / 2.0);
    let amp = 1.0 - zeta / 4.0;
    let g = move |x: f64| amp * erf(k * x);
    let p = fit_to_tolerance(g, |_| true, zeta / 4.0, Some(1))?;
    let sgn = |x: f64| x.signum();
    let err = grid_error(&p, &sgn, &|x: f64| x.abs() >= delta / 2.0);
    if err > zeta || p.max_abs_on_grid() > 1.0 {
        return Err(PolyError::Construction { max: p.degree(), tol: zeta, best: err });
    }
    Ok(p)
}

/// `Q(x) = P^exp_{β/2}(2x·P^sgn(x) − 1) ≈ e^{−β|x|}`, kept as a composition.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositePoly {
    pub outer: ChebyshevPoly,
    pub sign: ChebyshevPoly,
}

impl CompositePoly {
    pub fn degree(&self) -> usize {
        self.outer.degree() * (self.sign.degree() + 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.outer.eval(2.0 * x * self.sign.eval(x) - 1.0)
    }

    /// Expands the composition into a single Chebyshev series.
    pub fn to_chebyshev(&self) -> ChebyshevPoly {
        let m = (self.degree() + 1).next_power_of_two().max(2);
        let mut p = chebyshev_interpolant(|x| self.eval(x), m);
        for (j, c) in p.coefficients.iter_mut().enumerate() {
            if j % 2 == 1 {
                *c = 0.0;
            }
        }
        ChebyshevPoly::new(p.coefficients)
    }
}

/// Sign-polynomial accuracy that keeps the composite within `2μ`.
pub fn composite_zeta(beta: f64, mu: f64) -> f64 {
    (1.0 / (1.0 - mu)).ln() / beta
}

pub fn composite_exp_poly(beta: f64, mu: f64, delta: f64) -> Result<CompositePoly> {
    if beta == 0.0 {
        return Ok(CompositePoly { outer: ChebyshevPoly::constant(1.0), sign: ChebyshevPoly::new(vec![0.0, 1.0]) });
    }
    let outer = exp_poly(beta / 2.0, mu)?;
    let zeta = composite_zeta(beta, mu).min(0.5);
    let sign = sign_poly(zeta, delta)?;
    Ok(CompositePoly { outer, sign })
}

/// Grid sup of `|Q(x) − e^{−β|x|}|` over `Δ/2 ≤ |x| ≤ 1`.
pub fn composite_error(q: &CompositePoly, beta: f64, delta: f64) -> f64 {
    chebyshev_grid()
        .iter()
        .filter(|&&x| x.abs() >= delta / 2.0)
        .map(|&x| (q.eval(x) - (-beta * x.abs()).exp()).abs())
        .fold(0.0, f64::max)
}

pub fn exp_poly_error(p: &ChebyshevPoly, beta: f64) -> f64 {
    grid_error(p, &|x: f64| (-beta * (x + 1.0)).exp(), &|_| true)
}

pub fn sign_poly_error(p: &ChebyshevPoly, delta: f64) -> f64 {
    grid_error(p, &|x: f64| x.signum(), &|x: f64| x.abs() >= delta / 2.0)
}

/// Power-iteration norm check with 1% slack.
pub fn check_norm(h: &SparseOperator) -> Result<()> {
    let mut rng = derived_rng(0x3c6e_f372, &[h.dim() as u64]);
    let est = h.norm_estimate(60, &mut rng);
    if est > 1.01 {
        return Err(PolyError::NormViolation(est));
    }
    Ok(())
}

/// `P(H)v` by the Clenshaw recurrence; requires `‖H‖ ≤ 1`.
pub fn apply_poly(p: &ChebyshevPoly, h: &SparseOperator, v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_norm(h)?;
    apply_poly_unchecked(p, h, v)
}

/// [`apply_poly`] without the norm check, for callers that validated `H` once.
pub fn apply_poly_unchecked(p: &ChebyshevPoly, h: &SparseOperator, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let dim = h.dim();
    if v.len() != dim {
        return Err(PolyError::DimensionMismatch { op: dim, vec: v.len() });
    }
    let c = p.coefficients();
    let zero = Complex64::new(0.0, 0.0);
    let mut b1 = vec![zero; dim];
    let mut b2 = vec![zero; dim];
    let mut hb = vec![zero; dim];
    for &ck in c.iter().skip(1).rev() {
        h.matvec_into(&b1, &mut hb).expect("dimension checked");
        // b0 = ck v + 2 H b1 − b2, written into b2's buffer
        for i in 0..dim {
            b2[i] = v[i] * ck + hb[i] * 2.0 - b2[i];
        }
        std::mem::swap(&mut b1, &mut b2);
    }
    h.matvec_into(&b1, &mut hb).expect("dimension checked");
    Ok((0..dim).map(|i| v[i] * c[0] + hb[i] - b2[i]).collect())
}

/// `Q(H)v` for the composite, evaluated as outer ∘ (2H·P^sgn(H) − I).
pub fn apply_composite(q: &CompositePoly, h: &SparseOperator, v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_norm(h)?;
    // M = 2H·P^sgn(H) − I commutes with H; applying the outer series needs M·w.
    let m_apply = |w: &[Complex64]| -> Vec<Complex64> {
        let s = apply_poly_unchecked(&q.sign, h, w).expect("dimension checked");
        let hs = h.matvec(&s).expect("dimension checked");
        hs.iter().zip(w).map(|(a, b)| a * 2.0 - b).collect()
    };
    let c = q.outer.coefficients();
    let dim = v.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut b1 = vec![zero; dim];
    let mut b2 = vec![zero; dim];
    for &ck in c.iter().skip(1).rev() {
        let mb = m_apply(&b1);
        for i in 0..dim {
            b2[i] = v[i] * ck + mb[i] * 2.0 - b2[i];
        }
        std::mem::swap(&mut b1, &mut b2);
    }
    let mb = m_apply(&b1);
    Ok((0..dim).map(|i| v[i] * c[0] + mb[i] - b2[i]).collect())
}

/// `μ = (ξ/8)·(2^{−n}e^{−1/2}/2)`
pub fn qet_mu(xi: f64, n: usize) -> f64 {
    (xi / 8.0) * success_threshold(n)
}

/// `2^{−n}e^{−1/2}/2`, the lower bound on the unamplified success probability.
pub fn success_threshold(n: usize) -> f64 {
    (-(n as f64)).exp2() * (-0.5f64).exp() / 2.0
}

/// Polynomial TPQ preparation for a fixed `(H, β, Ξ, ξ)`, reusable across inputs.
#[derive(Clone, Debug)]
pub struct QetPreparer {
    k: SparseOperator,
    poly: ChebyshevPoly,
    mu: f64,
}

/// Normalized state with its emulated success probability.
#[derive(Clone, Debug)]
pub struct QetState {
    pub state: Vec<Complex64>,
    /// `¼‖P(K)v₀‖²`
    pub p_exp: f64,
}

impl QetState {
    /// `‖P(K)v₀‖²`, the estimate of `⟨v₀|e^{−β(H−Ξ)}|v₀⟩`.
    pub fn p(&self) -> f64 {
        4.0 * self.p_exp
    }
}

impl QetPreparer {
    pub fn new(h: &SparseOperator, beta: f64, shift: f64, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(PolyError::InvalidParameter(format!("xi = {xi}")));
        }
        let k = h.shifted(-(1.0 + shift));
        check_norm(&k)?;
        let mu = qet_mu(xi, h.num_qubits());
        let poly = exp_poly(beta / 2.0, mu)?;
        Ok(Self { k, poly, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn prepare(&self, v0: &[Complex64]) -> Result<QetState> {
        let w = apply_poly_unchecked(&self.poly, &self.k, v0)?;
        let nw = norm(&w);
        let p_exp = nw * nw / 4.0;
        if !(p_exp >= 1e-300) {
            return Err(PolyError::Underflow(p_exp));
        }
        Ok(QetState { state: w.iter().map(|a| a / nw).collect(), p_exp })
    }
}

/// One-shot form of [`QetPreparer`].
pub fn qet_tpq_state(h: &SparseOperator, beta: f64, shift: f64, xi: f64, v0: &[Complex64]) -> Result<QetState> {
    QetPreparer::new(h, beta, shift, xi)?.prepare(v0)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
