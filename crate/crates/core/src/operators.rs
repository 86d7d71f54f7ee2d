//! Pauli-string operators, Jordan–Wigner images of fermionic monomials,
//! lattice model Hamiltonians and their compiled sparse form.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::state::StateVector;

pub const DEFAULT_MAX_QUBITS: usize = 14;
const MERGE_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
/// Largest support (in qubits) for which term norms are computed densely.
const MAX_NORM_SUPPORT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("letter count {got} does not match qubit count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid Pauli letter '{0}'")]
    BadLetter(char),
    #[error("coefficient {0} is not finite")]
    NonFinite(f64),
    #[error("{n} qubits exceeds the configured maximum of {max}")]
    TooManyQubits { n: usize, max: usize },
    #[error("dimension mismatch: operator {op}, vector {vec}")]
    DimensionMismatch { op: usize, vec: usize },
    #[error("site index {site} out of range for {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("operator is not Hermitian (imaginary coefficient {0:e})")]
    NonHermitian(f64),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, OperatorError>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

impl TryFrom<char> for Pauli {
    type Error = OperatorError;
    fn try_from(c: char) -> Result<Self> {
        match c {
            'I' | 'i' => Ok(Pauli::I),
            'X' | 'x' => Ok(Pauli::X),
            'Y' | 'y' => Ok(Pauli::Y),
            'Z' | 'z' => Ok(Pauli::Z),
            other => Err(OperatorError::BadLetter(other)),
        }
    }
}

/// Real multiple of a Pauli string. Letter `k` acts on qubit `k`, stored as
/// the bit masks of its X and Z components (Y sets both).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    n: usize,
    x: u64,
    z: u64,
}

impl PauliTerm {
    pub fn new(coefficient: f64, letters: &[Pauli]) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(OperatorError::NonFinite(coefficient));
        }
        if letters.len() > 64 {
            return Err(OperatorError::TooManyQubits { n: letters.len(), max: 64 });
        }
        let (mut x, mut z) = (0u64, 0u64);
        for (k, p) in letters.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << k,
                Pauli::Z => z |= 1 << k,
                Pauli::Y => {
                    x |= 1 << k;
                    z |= 1 << k;
                }
            }
        }
        Ok(Self { coefficient, n: letters.len(), x, z })
    }

    /// Parses a letter string such as `"XIZ"` (qubit 0 first).
    pub fn parse(coefficient: f64, letters: &str) -> Result<Self> {
        let ls = letters
            .chars()
            .map(Pauli::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(coefficient, &ls)
    }

    pub(crate) fn from_masks(coefficient: f64, n: usize, x: u64, z: u64) -> Self {
        Self { coefficient, n, x, z }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn letters(&self) -> Vec<Pauli> {
        (0..self.n)
            .map(|k| match ((self.x >> k) & 1, (self.z >> k) & 1) {
                (0, 0) => Pauli::I,
                (1, 0) => Pauli::X,
                (0, 1) => Pauli::Z,
                _ => Pauli::Y,
            })
            .collect()
    }

    pub fn letter_string(&self) -> String {
        self.letters().into_iter().map(Pauli::as_char).collect()
    }

    /// Coefficient times `i^{#Y}`: the weight in front of `X(x)Z(z)`.
    fn xz_weight(&self) -> Complex64 {
        Complex64::new(self.coefficient, 0.0) * i_pow((self.x & self.z).count_ones())
    }
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn parity_sign(bits: u64) -> f64 {
    if bits.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Hermitian operator as a canonical sum of real-weighted Pauli strings.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, terms: vec![PauliTerm::from_masks(1.0, n, 0, 0)] }
    }

    /// Builds the merged canonical form: terms with equal letters are summed
    /// and near-zero results dropped.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = PauliTerm>) -> Result<Self> {
        let mut acc: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for t in terms {
            if t.n != n {
                return Err(OperatorError::LengthMismatch { expected: n, got: t.n });
            }
            if !t.coefficient.is_finite() {
                return Err(OperatorError::NonFinite(t.coefficient));
            }
            *acc.entry((t.x, t.z)).or_insert(0.0) += t.coefficient;
        }
        let terms = acc
            .into_iter()
            .filter(|(_, c)| c.abs() >= MERGE_TOL)
            .map(|((x, z), c)| PauliTerm::from_masks(c, n, x, z))
            .collect();
        Ok(Self { n, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_terms(
            self.n,
            self.terms.iter().map(|t| PauliTerm { coefficient: t.coefficient * s, ..t.clone() }),
        )
        .expect("scaling preserves validity")
    }

    pub fn add(&self, other: &PauliSum) -> Result<Self> {
        if other.n != self.n {
            return Err(OperatorError::LengthMismatch { expected: self.n, got: other.n });
        }
        Self::from_terms(self.n, self.terms.iter().chain(other.terms.iter()).cloned())
    }

    /// `Σ w_k S_k` over sums of equal width.
    pub fn linear_combination(n: usize, parts: &[(f64, &PauliSum)]) -> Result<Self> {
        let mut all = Vec::new();
        for (w, s) in parts {
            if s.n != n {
                return Err(OperatorError::LengthMismatch { expected: n, got: s.n });
            }
            all.extend(s.terms.iter().map(|t| PauliTerm { coefficient: t.coefficient * w, ..t.clone() }));
        }
        Self::from_terms(n, all)
    }

    /// Embeds into `n_new ≥ n` qubits, tensoring `Z` on qubit `extra_z` when given.
    pub fn extend(&self, n_new: usize, extra_z: Option<usize>) -> Result<Self> {
        if n_new < self.n {
            return Err(OperatorError::LengthMismatch { expected: self.n, got: n_new });
        }
        let zadd = extra_z.map_or(0, |k| 1u64 << k);
        Self::from_terms(
            n_new,
            self.terms.iter().map(|t| PauliTerm::from_masks(t.coefficient, n_new, t.x, t.z ^ zadd)),
        )
    }

    /// Qubits acted on nontrivially by some term.
    pub fn support_mask(&self) -> u64 {
        self.terms.iter().fold(0, |m, t| m | t.x | t.z)
    }

    /// Exact spectral norm, computed densely on the support qubits only.
    pub fn spectral_norm(&self) -> Result<f64> {
        if self.terms.is_empty() {
            return Ok(0.0);
        }
        let support = self.support_mask();
        let k = support.count_ones() as usize;
        if k > MAX_NORM_SUPPORT {
            return Err(OperatorError::TooManyQubits { n: k, max: MAX_NORM_SUPPORT });
        }
        let squeeze = |m: u64| -> u64 {
            let mut out = 0;
            let mut j = 0;
            for q in 0..self.n {
                if (support >> q) & 1 == 1 {
                    out |= ((m >> q) & 1) << j;
                    j += 1;
                }
            }
            out
        };
        let reduced = PauliSum {
            n: k,
            terms: self
                .terms
                .iter()
                .map(|t| PauliTerm::from_masks(t.coefficient, k, squeeze(t.x), squeeze(t.z)))
                .collect(),
        };
        let dense = compile(&reduced)?.to_dense();
        let eig = dense.symmetric_eigen();
        Ok(eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# n={}\n", self.n);
        for t in &self.terms {
            s.push_str(&format!("{:?}  {}\n", t.coefficient, t.letter_string()));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut terms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("n=") {
                    n = Some(v.trim().parse().map_err(|_| OperatorError::Parse {
                        line: i + 1,
                        msg: format!("bad qubit count '{v}'"),
                    })?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (c, letters) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(l), None) => (c, l),
                _ => {
                    return Err(OperatorError::Parse {
                        line: i + 1,
                        msg: "expected `coeff LETTERS`".into(),
                    })
                }
            };
            let coeff: f64 = c.parse().map_err(|_| OperatorError::Parse {
                line: i + 1,
                msg: format!("bad coefficient '{c}'"),
            })?;
            let term = PauliTerm::parse(coeff, letters)?;
            match n {
                Some(m) if m != term.n => {
                    return Err(OperatorError::LengthMismatch { expected: m, got: term.n })
                }
                None => n = Some(term.n),
                _ => {}
            }
            terms.push(term);
        }
        let n = n.ok_or(OperatorError::Parse { line: 0, msg: "no terms and no qubit count".into() })?;
        Self::from_terms(n, terms)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for PauliSum {
    type Err = OperatorError;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_text(s)
    }
}

/// Compressed-sparse-row complex matrix over `2^n` basis states.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
    real: bool,
}

pub fn compile(sum: &PauliSum) -> Result<SparseOperator> {
    compile_with_limit(sum, DEFAULT_MAX_QUBITS)
}

pub fn compile_with_limit(sum: &PauliSum, max_qubits: usize) -> Result<SparseOperator> {
    let n = sum.n;
    if n > max_qubits {
        return Err(OperatorError::TooManyQubits { n, max: max_qubits });
    }
    let dim = 1usize << n;
    let mut groups: HashMap<u64, Vec<(u64, Complex64)>> = HashMap::new();
    for t in &sum.terms {
        groups.entry(t.x).or_default().push((t.z, t.xz_weight()));
    }
    let mut xs: Vec<u64> = groups.keys().copied().collect();
    xs.sort_unstable();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, Complex64)> = Vec::with_capacity(xs.len());
    for r in 0..dim as u64 {
        row.clear();
        for x in &xs {
            let c = r ^ x;
            // X(x)Z(z)|c> = (-1)^{z·c} |c ⊕ x>
            let v: Complex64 = groups[x].iter().map(|(z, w)| w * parity_sign(z & c)).sum();
            if v.norm() > 1e-15 {
                row.push((c as usize, v));
            }
        }
        row.sort_unstable_by_key(|e| e.0);
        for &(c, v) in &row {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    let real = values.iter().all(|v| v.im == 0.0);
    Ok(SparseOperator { n, row_ptr, col_idx, values, real })
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        let dim = 1usize << n;
        Self {
            n,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![Complex64::new(1.0, 0.0); dim],
            real: true,
        }
    }

    /// Sparse copy of a dense square matrix, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let dim = m.nrows();
        assert!(dim.is_power_of_two() && m.ncols() == dim, "matrix must be 2^n square");
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v != Complex64::new(0.0, 0.0) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let real = values.iter().all(|v| v.im == 0.0);
        Self { n: dim.trailing_zeros() as usize, row_ptr, col_idx, values, real }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `A + cI`
    pub fn shifted(&self, c: f64) -> Self {
        let dim = self.dim();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz() + dim);
        let mut values = Vec::with_capacity(self.nnz() + dim);
        for r in 0..dim {
            let mut placed = false;
            for (col, v) in self.row(r) {
                if !placed && col >= r {
                    if col == r {
                        col_idx.push(col);
                        values.push(v + c);
                        placed = true;
                        continue;
                    }
                    col_idx.push(r);
                    values.push(Complex64::new(c, 0.0));
                    placed = true;
                }
                col_idx.push(col);
                values.push(v);
            }
            if !placed {
                col_idx.push(r);
                values.push(Complex64::new(c, 0.0));
            }
            row_ptr.push(col_idx.len());
        }
        Self { n: self.n, row_ptr, col_idx, values, real: self.real }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// True when every stored entry is real, so real arithmetic suffices.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn matvec_into(&self, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let dim = self.dim();
        if v.len() != dim || out.len() != dim {
            return Err(OperatorError::DimensionMismatch { op: dim, vec: v.len().max(out.len()) });
        }
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        Ok(StateVector::new(self.matvec(v)?))
    }

    /// `⟨v|A|v⟩`, without normalizing `v`.
    pub fn expectation(&self, v: &[Complex64]) -> Result<Complex64> {
        let dim = self.dim();
        if v.len() != dim {
            return Err(OperatorError::DimensionMismatch { op: dim, vec: v.len() });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, vr) in v.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * v[self.col_idx[k]];
            }
            acc += vr.conj() * row;
        }
        Ok(acc)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for r in 0..dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.to_dense();
        (&d - d.adjoint()).iter().all(|v| v.norm() <= tol)
    }

    /// Power-iteration estimate of `‖A‖`; a lower bound that converges from below.
    pub fn norm_estimate<R: Rng>(&self, iters: usize, rng: &mut R) -> f64 {
        let dim = self.dim();
        let mut v: Vec<Complex64> =
            (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        let mut est = 0.0;
        for _ in 0..iters {
            let nv = crate::state::norm(&v);
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|a| *a /= nv);
            self.matvec_into(&v, &mut w).expect("square operator");
            est = crate::state::norm(&w);
            std::mem::swap(&mut v, &mut w);
        }
        est
    }
}

// --- Jordan–Wigner -------------------------------------------------------

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Real-weighted product of fermionic ladder operators, applied right to left
/// as written (`ops[0]` is leftmost). An empty product is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct FermionTerm {
    pub coefficient: f64,
    pub ops: Vec<Ladder>,
}

impl FermionTerm {
    pub fn new(coefficient: f64, ops: Vec<Ladder>) -> Self {
        Self { coefficient, ops }
    }

    pub fn identity(coefficient: f64) -> Self {
        Self { coefficient, ops: Vec::new() }
    }
}

/// Complex linear combination over the `X(x)Z(z)` basis.
type XzSum = HashMap<(u64, u64), Complex64>;

fn xz_mul(a: &XzSum, b: &XzSum) -> XzSum {
    let mut out = XzSum::new();
    for (&(x1, z1), &c1) in a {
        for (&(x2, z2), &c2) in b {
            // Z(z1) X(x2) = (-1)^{z1·x2} X(x2) Z(z1)
            let w = c1 * c2 * parity_sign(z1 & x2);
            *out.entry((x1 ^ x2, z1 ^ z2)).or_insert(Complex64::new(0.0, 0.0)) += w;
        }
    }
    out
}

fn ladder_xz(op: Ladder) -> XzSum {
    // c_j = Z(<j)(X_j + iY_j)/2 = ½[X_j Z(<j) − X_j Z(<j)Z_j]; c†_j flips the sign.
    let (j, s) = match op {
        Ladder::Create(j) => (j, 1.0),
        Ladder::Annihilate(j) => (j, -1.0),
    };
    let e = 1u64 << j;
    let below = e - 1;
    let mut m = XzSum::new();
    m.insert((e, below), Complex64::new(0.5, 0.0));
    m.insert((e, below ^ e), Complex64::new(0.5 * s, 0.0));
    m
}

pub fn jordan_wigner(n: usize, terms: &[FermionTerm]) -> Result<PauliSum> {
    if n > 64 {
        return Err(OperatorError::TooManyQubits { n, max: 64 });
    }
    let mut total = XzSum::new();
    for t in terms {
        if !t.coefficient.is_finite() {
            return Err(OperatorError::NonFinite(t.coefficient));
        }
        let mut prod = XzSum::new();
        prod.insert((0, 0), Complex64::new(t.coefficient, 0.0));
        for &op in &t.ops {
            let (Ladder::Create(j) | Ladder::Annihilate(j)) = op;
            if j >= n {
                return Err(OperatorError::SiteOutOfRange { site: j, n });
            }
            prod = xz_mul(&prod, &ladder_xz(op));
        }
        for (k, v) in prod {
            *total.entry(k).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
    }
    let mut out = Vec::with_capacity(total.len());
    for ((x, z), c) in total {
        // X(x)Z(z) = i^{-#Y} · letters
        let w = c * i_pow(4 - (x & z).count_ones() % 4);
        if w.im.abs() > HERMITIAN_TOL {
            return Err(OperatorError::NonHermitian(w.im));
        }
        out.push(PauliTerm::from_masks(w.re, n, x, z));
    }
    PauliSum::from_terms(n, out)
}

// --- lattice models -----------------------------------------------------

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx * ny < 1 {
            return Err(OperatorError::InvalidLattice(format!("{nx}x{ny} has no sites")));
        }
        Ok(Self { nx, ny })
    }

    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    /// Open-boundary nearest-neighbour bonds, horizontal first, sites numbered
    /// row-major (`y·nx + x`).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for y in 0..self.ny {
            for x in 0..self.nx.saturating_sub(1) {
                e.push((y * self.nx + x, y * self.nx + x + 1));
            }
        }
        for y in 0..self.ny.saturating_sub(1) {
            for x in 0..self.nx {
                e.push((y * self.nx + x, (y + 1) * self.nx + x));
            }
        }
        e
    }
}

/// Model Hamiltonian decomposed as `H = Σ_j target_j O_j` with `‖O_j‖ = 1`.
#[derive(Clone, Debug)]
pub struct ModelTerms {
    pub hamiltonian: PauliSum,
    pub constraints: Vec<PauliSum>,
    pub target_params: Vec<f64>,
    pub labels: Vec<String>,
}

impl ModelTerms {
    fn push(&mut self, label: String, physical: PauliSum, coupling: f64) -> Result<()> {
        let nrm = physical.spectral_norm()?;
        if nrm == 0.0 {
            return Err(OperatorError::InvalidLattice(format!("term {label} vanishes")));
        }
        self.constraints.push(physical.scaled(1.0 / nrm));
        self.target_params.push(coupling * nrm);
        self.labels.push(label);
        Ok(())
    }

    fn finish(mut self) -> Result<Self> {
        let n = self.hamiltonian.n;
        let parts: Vec<(f64, &PauliSum)> =
            self.target_params.iter().copied().zip(self.constraints.iter()).collect();
        self.hamiltonian = PauliSum::linear_combination(n, &parts)?;
        Ok(self)
    }
}

fn number_minus_half(i: usize) -> Vec<FermionTerm> {
    use Ladder::*;
    vec![FermionTerm::new(1.0, vec![Create(i), Annihilate(i)]), FermionTerm::identity(-0.5)]
}

/// Spinless Fermi–Hubbard model
/// `H = μ Σ (n_i − ½) + w Σ (c†_i c_j − c_i c†_j) + U Σ (n_i − ½)(n_j − ½)`
/// on an open lattice. Constraints are ordered sites, hopping bonds, density bonds.
pub fn build_hubbard_spinless(spec: LatticeSpec, mu: f64, w: f64, u: f64) -> Result<ModelTerms> {
    use Ladder::*;
    for v in [mu, w, u] {
        if !v.is_finite() {
            return Err(OperatorError::NonFinite(v));
        }
    }
    let n = spec.sites();
    if n < 2 {
        return Err(OperatorError::InvalidLattice(format!(
            "{}x{} lattice has no bonds",
            spec.nx, spec.ny
        )));
    }
    let edges = spec.edges();
    let mut m = ModelTerms {
        hamiltonian: PauliSum::zero(n),
        constraints: Vec::new(),
        target_params: Vec::new(),
        labels: Vec::new(),
    };
    for i in 0..n {
        m.push(format!("site({i})"), jordan_wigner(n, &number_minus_half(i))?, mu)?;
    }
    for &(i, j) in &edges {
        let hop = jordan_wigner(
            n,
            &[
                FermionTerm::new(1.0, vec![Create(i), Annihilate(j)]),
                FermionTerm::new(-1.0, vec![Annihilate(i), Create(j)]),
            ],
        )?;
        m.push(format!("hop({i},{j})"), hop, w)?;
    }
    for &(i, j) in &edges {
        let mut prod = Vec::new();
        for a in number_minus_half(i) {
            for b in number_minus_half(j) {
                let mut ops = a.ops.clone();
                ops.extend(b.ops.iter().copied());
                prod.push(FermionTerm::new(a.coefficient * b.coefficient, ops));
            }
        }
        m.push(format!("dens({i},{j})"), jordan_wigner(n, &prod)?, u)?;
    }
    m.finish()
}

/// XXZ chain `H = Σ J (XX+YY) + Δ ZZ + Σ h_i Z_i` with open boundary.
/// Constraints are ordered XY bonds, ZZ bonds, site fields.
pub fn build_xxz(n: usize, j: f64, delta: f64, h: &[f64]) -> Result<ModelTerms> {
    if n < 2 {
        return Err(OperatorError::InvalidLattice(format!("chain of length {n}")));
    }
    if h.len() != n {
        return Err(OperatorError::LengthMismatch { expected: n, got: h.len() });
    }
    for &v in [j, delta].iter().chain(h) {
        if !v.is_finite() {
            return Err(OperatorError::NonFinite(v));
        }
    }
    let two_site = |i: usize, p: Pauli| -> PauliTerm {
        let mut ls = vec![Pauli::I; n];
        ls[i] = p;
        ls[i + 1] = p;
        PauliTerm::new(1.0, &ls).expect("valid letters")
    };
    let mut m = ModelTerms {
        hamiltonian: PauliSum::zero(n),
        constraints: Vec::new(),
        target_params: Vec::new(),
        labels: Vec::new(),
    };
    for i in 0..n - 1 {
        let xy = PauliSum::from_terms(n, [two_site(i, Pauli::X), two_site(i, Pauli::Y)])?;
        m.push(format!("xy({i},{})", i + 1), xy, j)?;
    }
    for i in 0..n - 1 {
        let zz = PauliSum::from_terms(n, [two_site(i, Pauli::Z)])?;
        m.push(format!("zz({i},{})", i + 1), zz, delta)?;
    }
    for (i, &hi) in h.iter().enumerate() {
        let mut ls = vec![Pauli::I; n];
        ls[i] = Pauli::Z;
        m.push(format!("z({i})"), PauliSum::from_terms(n, [PauliTerm::new(1.0, &ls)?])?, hi)?;
    }
    m.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    type M = DMatrix<Complex64>;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(p: Pauli) -> M {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        match p {
            Pauli::I => M::from_row_slice(2, 2, &[o, z, z, o]),
            Pauli::X => M::from_row_slice(2, 2, &[z, o, o, z]),
            Pauli::Y => M::from_row_slice(2, 2, &[z, -i, i, z]),
            Pauli::Z => M::from_row_slice(2, 2, &[o, z, z, -o]),
        }
    }

    /// Kronecker product with qubit 0 as the least significant index.
    fn dense_oracle(sum: &PauliSum) -> M {
        let dim = 1 << sum.num_qubits();
        let mut acc = M::from_element(dim, dim, c(0.0, 0.0));
        for t in sum.terms() {
            let mut m = M::from_element(1, 1, c(1.0, 0.0));
            for p in t.letters() {
                m = single(p).kronecker(&m);
            }
            acc += m * c(t.coefficient, 0.0);
        }
        acc
    }

    fn max_diff(a: &M, b: &M) -> f64 {
        (a - b).iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    #[test]
    fn z_compiles_to_diag() {
        let op = compile(&PauliSum::from_terms(1, [PauliTerm::parse(1.0, "Z").unwrap()]).unwrap()).unwrap();
        let d = op.to_dense();
        assert_eq!(d[(0, 0)], c(1.0, 0.0));
        assert_eq!(d[(1, 1)], c(-1.0, 0.0));
        assert_eq!(d[(0, 1)], c(0.0, 0.0));
        assert_eq!(op.matvec(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(), vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(op.matvec(&[c(0.0, 0.0), c(1.0, 0.0)]).unwrap(), vec![c(0.0, 0.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn half_x_terms_merge() {
        let s = PauliSum::from_terms(
            1,
            [PauliTerm::parse(0.5, "X").unwrap(), PauliTerm::parse(0.5, "X").unwrap()],
        )
        .unwrap();
        assert_eq!(s.terms().len(), 1);
        assert_eq!(s.terms()[0].coefficient, 1.0);
        let d = compile(&s).unwrap().to_dense();
        assert_eq!(d[(0, 1)], c(1.0, 0.0));
        assert_eq!(d[(1, 0)], c(1.0, 0.0));
        assert_eq!(d[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn tiny_coefficients_dropped() {
        let s = PauliSum::from_terms(
            2,
            [PauliTerm::parse(1e-13, "XY").unwrap(), PauliTerm::parse(0.3, "ZZ").unwrap()],
        )
        .unwrap();
        assert_eq!(s.terms().len(), 1);
    }

    #[test]
    fn y_letter_matches_dense() {
        let s = PauliSum::from_terms(3, [PauliTerm::parse(0.7, "YXZ").unwrap(), PauliTerm::parse(-0.2, "IYY").unwrap()])
            .unwrap();
        assert!(max_diff(&compile(&s).unwrap().to_dense(), &dense_oracle(&s)) < 1e-14);
    }

    #[test]
    fn too_many_qubits_rejected() {
        let s = PauliSum::identity(15);
        assert!(matches!(compile(&s), Err(OperatorError::TooManyQubits { .. })));
        assert!(compile_with_limit(&PauliSum::identity(3), 2).is_err());
    }

    #[test]
    fn shifted_adds_diagonal() {
        let s = PauliSum::from_terms(2, [PauliTerm::parse(0.7, "XI").unwrap(), PauliTerm::parse(-0.3, "ZZ").unwrap()])
            .unwrap();
        let op = compile(&s).unwrap();
        let got = op.shifted(1.5).to_dense();
        let expect = op.to_dense() + M::identity(4, 4) * c(1.5, 0.0);
        assert!(max_diff(&got, &expect) == 0.0);
        let xonly = compile(&PauliSum::from_terms(1, [PauliTerm::parse(1.0, "X").unwrap()]).unwrap()).unwrap();
        assert_eq!(xonly.shifted(-2.0).to_dense()[(1, 1)], c(-2.0, 0.0));
    }

    #[test]
    fn identity_matvec() {
        let id = SparseOperator::identity(3);
        let v: Vec<_> = (0..8).map(|k| c(k as f64, -(k as f64) / 3.0)).collect();
        assert_eq!(id.matvec(&v).unwrap(), v);
        assert!(id.matvec(&v[..4]).is_err());
    }

    #[test]
    fn random_hermitian_matvec_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = M::from_fn(8, 8, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let h = &a + a.adjoint();
        let op = SparseOperator::from_dense(&h);
        assert!(op.is_hermitian(0.0));
        let v: Vec<_> = (0..8).map(|_| c(rng.random(), rng.random())).collect();
        let dense = &h * nalgebra::DVector::from_vec(v.clone());
        let sparse = op.matvec(&v).unwrap();
        for k in 0..8 {
            assert!((dense[k] - sparse[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn jw_number_operator() {
        let s = jordan_wigner(1, &number_minus_half(0)).unwrap();
        let expect = PauliSum::from_terms(1, [PauliTerm::parse(-0.5, "Z").unwrap()]).unwrap();
        assert_eq!(s, expect);
    }

    #[test]
    fn jw_hopping_is_xy() {
        use Ladder::*;
        let s = jordan_wigner(
            2,
            &[
                FermionTerm::new(1.0, vec![Create(0), Annihilate(1)]),
                FermionTerm::new(-1.0, vec![Annihilate(0), Create(1)]),
            ],
        )
        .unwrap();
        let xy = PauliSum::from_terms(2, [PauliTerm::parse(0.5, "XX").unwrap(), PauliTerm::parse(0.5, "YY").unwrap()])
            .unwrap();
        assert!(s == xy || s == xy.scaled(-1.0), "{s}");
        assert!(max_diff(&compile(&s).unwrap().to_dense(), &dense_oracle(&s)) < 1e-14);
    }

    #[test]
    fn jw_identity() {
        let s = jordan_wigner(3, &[FermionTerm::identity(1.0)]).unwrap();
        assert_eq!(s, PauliSum::identity(3));
    }

    #[test]
    fn jw_canonical_anticommutation() {
        use Ladder::*;
        for n in 1..=4 {
            let dim = 1 << n;
            let mat = |op: Ladder| -> M {
                // Ladder operators are not Hermitian: build them from the X/Z form directly.
                let mut m = M::from_element(dim, dim, c(0.0, 0.0));
                for (&(x, z), &w) in &ladder_xz(op) {
                    for col in 0..dim as u64 {
                        m[((col ^ x) as usize, col as usize)] += w * parity_sign(z & col);
                    }
                }
                m
            };
            let id = M::identity(dim, dim);
            for i in 0..n {
                for j in 0..n {
                    let (ci, cj) = (mat(Annihilate(i)), mat(Annihilate(j)));
                    let cdi = mat(Create(i));
                    assert!(max_diff(&cdi, &ci.adjoint()) < 1e-15);
                    let anti = &cdi * &cj + &cj * &cdi;
                    let expect = if i == j { id.clone() } else { id.clone() * c(0.0, 0.0) };
                    assert!(max_diff(&anti, &expect) < 1e-14, "n={n} i={i} j={j}");
                    let aa = &ci * &cj + &cj * &ci;
                    assert!(max_diff(&aa, &(id.clone() * c(0.0, 0.0))) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hubbard_constraint_counts() {
        let m = build_hubbard_spinless(LatticeSpec::new(2, 2).unwrap(), 1.0, 0.5, 1.2).unwrap();
        assert_eq!(m.constraints.len(), 12);
        let m = build_hubbard_spinless(LatticeSpec::new(5, 2).unwrap(), 1.0, 0.5, 1.2).unwrap();
        assert_eq!(LatticeSpec::new(5, 2).unwrap().edges().len(), 13);
        assert_eq!(m.constraints.len(), 36);
    }

    #[test]
    fn hubbard_zero_couplings() {
        let m = build_hubbard_spinless(LatticeSpec::new(1, 2).unwrap(), 0.0, 0.0, 0.0).unwrap();
        assert!(m.hamiltonian.is_zero());
        assert!(build_hubbard_spinless(LatticeSpec::new(1, 1).unwrap(), 1.0, 1.0, 1.0).is_err());
        assert!(LatticeSpec::new(0, 3).is_err());
    }

    #[test]
    fn hubbard_matches_dense_fermion_construction() {
        // Independent oracle: ladder matrices built as Z-string ⊗ σ⁻ Kronecker products.
        let spec = LatticeSpec::new(2, 2).unwrap();
        let (mu, w, u) = (1.0, 0.5, 1.2);
        let n = 4;
        let dim = 1 << n;
        let lower = M::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let ann = |j: usize| -> M {
            let mut m = M::from_element(1, 1, c(1.0, 0.0));
            for q in 0..n {
                let f = if q < j {
                    single(Pauli::Z)
                } else if q == j {
                    lower.clone()
                } else {
                    single(Pauli::I)
                };
                m = f.kronecker(&m);
            }
            m
        };
        let id = M::identity(dim, dim);
        let num = |j: usize| ann(j).adjoint() * ann(j) - &id * c(0.5, 0.0);
        let mut h = M::from_element(dim, dim, c(0.0, 0.0));
        for i in 0..n {
            h += num(i) * c(mu, 0.0);
        }
        for (i, j) in spec.edges() {
            h += (ann(i).adjoint() * ann(j) - ann(i) * ann(j).adjoint()) * c(w, 0.0);
            h += num(i) * num(j) * c(u, 0.0);
        }
        let m = build_hubbard_spinless(spec, mu, w, u).unwrap();
        let got = compile(&m.hamiltonian).unwrap().to_dense();
        assert!(max_diff(&got, &h) < 1e-12);
        assert!(max_diff(&dense_oracle(&m.hamiltonian), &h) < 1e-12);
    }

    #[test]
    fn model_terms_unit_norm_and_orthogonal() {
        let hub = build_hubbard_spinless(LatticeSpec::new(2, 2).unwrap(), 1.0, 0.5, 1.2).unwrap();
        let xxz = build_xxz(5, 1.0, 0.5, &[0.3, -1.0, 0.2, 1.5, -0.7]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for model in [&hub, &xxz] {
            let dense: Vec<M> = model.constraints.iter().map(|o| compile(o).unwrap().to_dense()).collect();
            for (a, o) in dense.iter().zip(&model.constraints) {
                assert!((o.spectral_norm().unwrap() - 1.0).abs() < 1e-12);
                let est = compile(o).unwrap().norm_estimate(200, &mut rng);
                assert!(est <= 1.0 + 1e-10);
                assert!(a.iter().all(|v| v.re.is_finite()));
            }
            for i in 0..dense.len() {
                for j in 0..i {
                    let ip = (dense[i].adjoint() * &dense[j]).trace();
                    assert!(ip.norm() < 1e-10, "{} vs {}", model.labels[i], model.labels[j]);
                }
            }
        }
    }

    #[test]
    fn hubbard_normalization_factors() {
        let m = build_hubbard_spinless(LatticeSpec::new(1, 2).unwrap(), 1.0, 0.5, 1.2).unwrap();
        // site ‖n−½‖ = ½, hopping norm 1, density ‖(n−½)(n−½)‖ = ¼
        assert_eq!(m.target_params, vec![0.5, 0.5, 0.5, 0.3]);
    }

    #[test]
    fn xxz_counts_and_symmetry() {
        let h: Vec<f64> = (0..10).map(|k| -2.0 + 0.4 * k as f64).collect();
        assert_eq!(build_xxz(10, 1.0, 0.5, &h).unwrap().constraints.len(), 28);
        assert!(build_xxz(2, 0.0, 0.0, &[0.0, 0.0]).unwrap().hamiltonian.is_zero());
        assert!(build_xxz(3, 1.0, 0.5, &[0.0; 2]).is_err());

        let m = build_xxz(3, 1.0, 0.0, &[0.0; 3]).unwrap();
        let h = compile(&m.hamiltonian).unwrap().to_dense();
        let sz = compile(
            &PauliSum::from_terms(
                3,
                ["ZII", "IZI", "IIZ"].map(|s| PauliTerm::parse(1.0, s).unwrap()),
            )
            .unwrap(),
        )
        .unwrap()
        .to_dense();
        assert!(max_diff(&(&h * &sz), &(&sz * &h)) < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let m = build_xxz(3, 0.9, -0.4, &[0.1, 0.2, 0.3]).unwrap();
        let back: PauliSum = m.hamiltonian.to_text().parse().unwrap();
        assert_eq!(back.terms().len(), m.hamiltonian.terms().len());
        for (a, b) in back.terms().iter().zip(m.hamiltonian.terms()) {
            assert_eq!(a.letter_string(), b.letter_string());
            assert!((a.coefficient - b.coefficient).abs() <= 1e-15);
        }
        assert_eq!(PauliSum::from_text("# n=4\n").unwrap(), PauliSum::zero(4));
        assert!(PauliSum::from_text("1.0 XQ").is_err());
        assert!(PauliSum::from_text("1.0 XX\n2.0 Z").is_err());
    }

    fn arb_sum(n: usize) -> impl Strategy<Value = PauliSum> {
        prop::collection::vec((-2.0f64..2.0, prop::collection::vec(0u8..4, n)), 0..6).prop_map(move |ts| {
            PauliSum::from_terms(
                n,
                ts.into_iter().map(|(c, ls)| {
                    let letters: Vec<Pauli> =
                        ls.into_iter().map(|b| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][b as usize]).collect();
                    PauliTerm::new(c, &letters).unwrap()
                }),
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn compile_is_additive(a in arb_sum(4), b in arb_sum(4)) {
            let lhs = compile(&a.add(&b).unwrap()).unwrap().to_dense();
            let rhs = compile(&a).unwrap().to_dense() + compile(&b).unwrap().to_dense();
            prop_assert!(max_diff(&lhs, &rhs) < 1e-11);
        }

        #[test]
        fn compiled_sums_are_hermitian_and_match_oracle(a in arb_sum(3)) {
            let op = compile(&a).unwrap();
            prop_assert!(op.is_hermitian(1e-14));
            prop_assert!(max_diff(&op.to_dense(), &dense_oracle(&a)) < 1e-13);
        }
    }
}
