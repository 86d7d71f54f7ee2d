//! Normalized complex amplitude vectors over `2^n` basis states.

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;

/// Amplitude vector of an `n`-qubit register. Basis index bit `k` is the
/// state of qubit `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        assert!(
            amplitudes.len().is_power_of_two(),
            "state dimension {} is not a power of two",
            amplitudes.len()
        );
        Self(amplitudes)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[index] = Complex64::new(1.0, 0.0);
        Self(amps)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Rescales to unit norm and returns the norm it had before.
    pub fn normalize(&mut self) -> f64 {
        let nrm = self.norm();
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            self.0.iter_mut().for_each(|a| *a *= inv);
        }
        nrm
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &[Complex64]) -> Complex64 {
        inner(&self.0, other)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<StateVector> for Vec<Complex64> {
    fn from(s: StateVector) -> Self {
        s.0
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
