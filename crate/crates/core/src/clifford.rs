//! Uniformly random stabilizer states: sampled in affine-subspace plus
//! quadratic-phase form, exposed as stabilizer generators, and materialized
//! as state vectors.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::state::StateVector;

pub const MAX_QUBITS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    BadQubitCount(usize),
    #[error("inconsistent tableau: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CliffordError>;

/// `i^phase · X(x) Z(z)`
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PauliRow {
    pub x: u64,
    pub z: u64,
    pub phase: u8,
}

impl PauliRow {
    pub fn mul(self, other: PauliRow) -> PauliRow {
        let sign = if (self.z & other.x).count_ones() % 2 == 1 { 2 } else { 0 };
        PauliRow { x: self.x ^ other.x, z: self.z ^ other.z, phase: (self.phase + other.phase + sign) % 4 }
    }

    /// Symplectic form: 0 when the two commute.
    pub fn anticommutes(self, other: PauliRow) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 1
    }

    /// `P|b⟩ = i^phase (−1)^{z·b} |b ⊕ x⟩` applied to a full vector.
    pub fn apply(self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        let ph = i_pow(self.phase);
        for (b, &a) in v.iter().enumerate() {
            let s = if (self.z & b as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[b ^ self.x as usize] = a * ph * s;
        }
        out
    }
}

fn i_pow(p: u8) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `n` independent commuting stabilizer generators (destabilizers are not kept).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerTableau {
    pub n: usize,
    pub rows: Vec<PauliRow>,
}

impl StabilizerTableau {
    /// Stabilizers `Z_i` of `|0…0⟩`.
    pub fn zero_state(n: usize) -> Self {
        Self { n, rows: (0..n).map(|i| PauliRow { x: 0, z: 1 << i, phase: 0 }).collect() }
    }

    /// Stabilizers `X_i` of `|+…+⟩`.
    pub fn plus_state(n: usize) -> Self {
        Self { n, rows: (0..n).map(|i| PauliRow { x: 1 << i, z: 0, phase: 0 }).collect() }
    }

    /// Rows commute, are Hermitian, and are independent.
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.n {
            return Err(CliffordError::Inconsistent(format!("{} rows for {} qubits", self.rows.len(), self.n)));
        }
        for (i, a) in self.rows.iter().enumerate() {
            // i^p X Z is Hermitian iff p ≡ x·z (mod 2)
            if (a.phase as u32 + (a.x & a.z).count_ones()) % 2 == 1 {
                return Err(CliffordError::Inconsistent(format!("row {i} is not Hermitian")));
            }
            for b in &self.rows[..i] {
                if a.anticommutes(*b) {
                    return Err(CliffordError::Inconsistent(format!("row {i} anticommutes")));
                }
            }
        }
        let vecs: Vec<u128> = self.rows.iter().map(|r| (r.x as u128) << 64 | r.z as u128).collect();
        if rank_u128(vecs) != self.n {
            return Err(CliffordError::Inconsistent("rows are dependent".into()));
        }
        Ok(())
    }
}

fn rank_u128(mut vecs: Vec<u128>) -> usize {
    let mut rank = 0;
    for bit in (0..128).rev() {
        let Some(pos) = (rank..vecs.len()).find(|&i| (vecs[i] >> bit) & 1 == 1) else { continue };
        vecs.swap(rank, pos);
        let pivot = vecs[rank];
        for (i, v) in vecs.iter_mut().enumerate() {
            if i != rank && (*v >> bit) & 1 == 1 {
                *v ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

fn dot(a: u64, b: u64) -> u32 {
    (a & b).count_ones() % 2
}

/// Some `w` with `⟨g_j, w⟩ = u_j` for every column `g_j` (columns independent).
fn solve_transpose(cols: &[u64], u: u64) -> u64 {
    // reduce columns to echelon form while tracking combinations
    let k = cols.len();
    let mut rows: Vec<(u64, u64)> = cols.iter().enumerate().map(|(j, &g)| (g, 1u64 << j)).collect();
    let mut pivots = Vec::with_capacity(k);
    let mut r = 0;
    for bit in 0..64 {
        let Some(pos) = (r..k).find(|&i| (rows[i].0 >> bit) & 1 == 1) else { continue };
        rows.swap(r, pos);
        let (pg, pc) = rows[r];
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && (row.0 >> bit) & 1 == 1 {
                row.0 ^= pg;
                row.1 ^= pc;
            }
        }
        pivots.push(bit);
        r += 1;
        if r == k {
            break;
        }
    }
    // reduced rows are distinct unit vectors on the pivots: w has bit p_i = target of row i
    let mut w = 0u64;
    for (i, &(_, comb)) in rows.iter().enumerate() {
        let target = (0..k).filter(|&j| (comb >> j) & 1 == 1).fold(0, |acc, j| acc ^ ((u >> j) & 1));
        w |= target << pivots[i];
    }
    w
}

/// Basis of `{z : ⟨g_j, z⟩ = 0 ∀j}`.
fn orthogonal_complement(cols: &[u64], n: usize) -> Vec<u64> {
    let mut rows: Vec<u64> = cols.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for bit in 0..n {
        let Some(pos) = (r..rows.len()).find(|&i| (rows[i] >> bit) & 1 == 1) else { continue };
        rows.swap(r, pos);
        let p = rows[r];
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && (*row >> bit) & 1 == 1 {
                *row ^= p;
            }
        }
        pivots.push(bit);
        r += 1;
    }
    let free: Vec<usize> = (0..n).filter(|b| !pivots.contains(b)).collect();
    free.iter()
        .map(|&f| {
            let mut z = 1u64 << f;
            for (i, &p) in pivots.iter().enumerate() {
                if (rows[i] >> f) & 1 == 1 {
                    z |= 1 << p;
                }
            }
            z
        })
        .collect()
}

/// `ln` of the number of stabilizer states whose support has dimension `k`.
fn log_count(n: usize, k: usize) -> f64 {
    let gauss: f64 = (0..k)
        .map(|i| ((n - i) as f64 * LN_2).exp_m1().ln() - ((k - i) as f64 * LN_2).exp_m1().ln())
        .sum();
    let kk = k as f64;
    ((n - k) as f64 + kk + kk * (kk + 1.0) / 2.0) * LN_2 + gauss
}

pub fn stabilizer_state_count(n: usize) -> f64 {
    (0..=n).map(|k| log_count(n, k).exp()).sum()
}

/// Uniform draw from the set of `n`-qubit stabilizer states.
pub fn sample_random_stabilizer<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StabilizerTableau> {
    if n == 0 || n > MAX_QUBITS {
        return Err(CliffordError::BadQubitCount(n));
    }
    let logs: Vec<f64> = (0..=n).map(|k| log_count(n, k)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let mut k = n;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            k = i;
            break;
        }
        r -= w;
    }

    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    // random full-rank basis of the support direction space
    let mut cols: Vec<u64> = Vec::with_capacity(k);
    let mut echelon: Vec<u64> = Vec::with_capacity(k);
    while cols.len() < k {
        let g = rng.random::<u64>() & mask;
        let mut red = g;
        for &e in &echelon {
            red = red.min(red ^ e);
        }
        if red != 0 {
            echelon.push(red);
            echelon.sort_unstable_by(|a, b| b.cmp(a));
            cols.push(g);
        }
    }
    let x0 = rng.random::<u64>() & mask;
    let l: u64 = rng.random::<u64>() & ((1u64 << k) - 1);
    // q[a] holds the upper-triangular row a of Q (bits b ≥ a)
    let q: Vec<u64> = (0..k).map(|a| (rng.random::<u64>() & ((1u64 << k) - 1)) >> a << a).collect();
    let q_entry = |a: usize, b: usize| -> u64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        (q[lo] >> hi) & 1
    };

    let mut rows = Vec::with_capacity(n);
    for z in orthogonal_complement(&cols, n) {
        rows.push(PauliRow { x: 0, z, phase: (2 * dot(z, x0)) as u8 });
    }
    for (j, &g) in cols.iter().enumerate() {
        let lj = (l >> j) & 1;
        let mut u = lj << j;
        for a in 0..k {
            if a != j {
                u |= q_entry(a, j) << a;
            }
        }
        let w = solve_transpose(&cols, u);
        let phase = (lj as u32 + 2 * (q_entry(j, j) as u32 + dot(w, x0))) % 4;
        rows.push(PauliRow { x: g, z: w, phase: phase as u8 });
    }
    Ok(StabilizerTableau { n, rows })
}

/// The unique (up to global phase) `+1` eigenvector of every generator.
pub fn tableau_to_statevector(t: &StabilizerTableau) -> Result<StateVector> {
    t.validate()?;
    let n = t.n;
    // echelon form on the X part
    let mut rows = t.rows.clone();
    let mut r = 0;
    for bit in 0..n {
        let Some(pos) = (r..n).find(|&i| (rows[i].x >> bit) & 1 == 1) else { continue };
        rows.swap(r, pos);
        let p = rows[r];
        for i in 0..n {
            if i != r && (rows[i].x >> bit) & 1 == 1 {
                rows[i] = rows[i].mul(p);
            }
        }
        r += 1;
    }
    let k = r;
    // Z-type rows fix the parities z·x0 = phase/2
    let mut eqs: Vec<(u64, u64)> = rows[k..].iter().map(|row| (row.z, (row.phase / 2) as u64)).collect();
    let mut x0 = 0u64;
    let mut pr = 0;
    let mut pivots = Vec::new();
    for bit in 0..n {
        let Some(pos) = (pr..eqs.len()).find(|&i| (eqs[i].0 >> bit) & 1 == 1) else { continue };
        eqs.swap(pr, pos);
        let p = eqs[pr];
        for (i, e) in eqs.iter_mut().enumerate() {
            if i != pr && (e.0 >> bit) & 1 == 1 {
                e.0 ^= p.0;
                e.1 ^= p.1;
            }
        }
        pivots.push(bit);
        pr += 1;
    }
    if eqs[pr..].iter().any(|e| e.1 != 0) {
        return Err(CliffordError::Inconsistent("contradictory Z constraints".into()));
    }
    for (i, &p) in pivots.iter().enumerate() {
        x0 |= eqs[i].1 << p;
    }

    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    let norm = (-(k as f64) / 2.0).exp2();
    let mut x = x0;
    let mut a = Complex64::new(norm, 0.0);
    amps[x as usize] = a;
    // Gray-code walk over the support: ψ(x ⊕ g) = i^p (−1)^{w·x} ψ(x)
    for step in 1u64..(1u64 << k) {
        let j = step.trailing_zeros() as usize;
        let row = rows[j];
        let s = if dot(row.z, x) == 1 { -1.0 } else { 1.0 };
        a = a * i_pow(row.phase) * s;
        x ^= row.x;
        amps[x as usize] = a;
    }
    Ok(StateVector::new(amps))
}

/// Sample and materialize in one step.
pub fn random_stabilizer_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StateVector> {
    tableau_to_statevector(&sample_random_stabilizer(n, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Global-phase-free key: rotate so the first nonzero amplitude is real positive.
    fn key(v: &[Complex64]) -> Vec<(i64, i64)> {
        let first = v.iter().find(|a| a.norm() > 1e-9).unwrap();
        let ph = first.conj() / first.norm();
        v.iter().map(|a| {
            let b = a * ph;
            ((b.re * 1e6).round() as i64, (b.im * 1e6).round() as i64)
        }).collect()
    }

    #[test]
    fn counts_match_formula() {
        assert!((stabilizer_state_count(1) - 6.0).abs() < 1e-9);
        assert!((stabilizer_state_count(2) - 60.0).abs() < 1e-9);
        assert!((stabilizer_state_count(3) - 1080.0).abs() < 1e-6);
    }

    #[test]
    fn single_qubit_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
        let draws = 6000;
        for _ in 0..draws {
            let v = random_stabilizer_state(1, &mut rng).unwrap();
            *counts.entry(key(&v)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let e = draws as f64 / 6.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // χ²(5) 99.9% quantile ≈ 20.5
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }

    #[test]
    fn two_qubits_sixty_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
        for _ in 0..12_000 {
            let v = random_stabilizer_state(2, &mut rng).unwrap();
            *counts.entry(key(&v)).or_default() += 1;
        }
        assert_eq!(counts.len(), 60);
        let e = 200.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // χ²(59) 99.9% quantile ≈ 98.3
        assert!(chi2 < 98.3, "chi2 = {chi2}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_random_stabilizer(6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_random_stabilizer(6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_random_stabilizer(0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
        assert!(sample_random_stabilizer(15, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn fixed_tableaux() {
        let z = tableau_to_statevector(&StabilizerTableau::zero_state(3)).unwrap();
        assert_eq!(z.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(z.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
        let p = tableau_to_statevector(&StabilizerTableau::plus_state(4)).unwrap();
        assert!(p.amplitudes().iter().all(|a| (a - Complex64::new(0.25, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn inconsistent_tableaux_rejected() {
        let mut t = StabilizerTableau::zero_state(2);
        t.rows[1] = PauliRow { x: 1, z: 0, phase: 0 };
        assert!(tableau_to_statevector(&t).is_err());
        let mut t = StabilizerTableau::zero_state(2);
        t.rows[1] = t.rows[0];
        assert!(tableau_to_statevector(&t).is_err());
    }

    #[test]
    fn random_states_are_stabilized_and_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = 4;
            let t = sample_random_stabilizer(n, &mut rng).unwrap();
            let v = tableau_to_statevector(&t).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-12);
            for row in &t.rows {
                let gv = row.apply(&v);
                assert!(gv.iter().zip(v.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
            }
            let nz: Vec<f64> = v.iter().map(|a| a.norm()).filter(|&m| m > 1e-12).collect();
            let k = (nz.len() as f64).log2().round() as i32;
            assert_eq!(1usize << k, nz.len());
            assert!(nz.iter().all(|m| (m - (-(k as f64) / 2.0).exp2()).abs() < 1e-12));
        }
    }

    #[test]
    fn haar_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 3;
        let dim = 8.0;
        let m = 10_000;
        let samples: Vec<f64> = (0..m).map(|_| random_stabilizer_state(n, &mut rng).unwrap()[0].norm_sqr()).collect();
        let check = |vals: Vec<f64>, target: f64| {
            let mean = vals.iter().sum::<f64>() / m as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            let se = (var / m as f64).sqrt();
            assert!((mean - target).abs() <= 5.0 * se, "mean {mean} target {target} se {se}");
        };
        check(samples.clone(), 1.0 / dim);
        check(samples.iter().map(|p| p * p).collect(), 2.0 / (dim * (dim + 1.0)));
    }
}
