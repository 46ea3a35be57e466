use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense simulation is refused above this many qubits.
pub const MAX_QUBITS: usize = 20;

/// Dense `2^n` amplitude vector. Qubit 0 is the most significant bit of the
/// basis index, so basis state `|q0 q1 ... q(n-1)>` has index `q0 q1 ...` in
/// binary.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    fn check(n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidInput("state needs at least one qubit".into()));
        }
        if n > MAX_QUBITS {
            return Err(Error::TooManyQubits {
                requested: n,
                max: MAX_QUBITS,
            });
        }
        Ok(())
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        Self::check(n)?;
        if index >= 1 << n {
            return Err(Error::InvalidInput(format!(
                "basis index {index} out of range for {n} qubits"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    /// Equal, zero-phase superposition (Hadamard on every qubit of `|0...0>`).
    pub fn uniform(n: usize) -> Result<Self> {
        Self::check(n)?;
        let a = Complex64::new(1.0 / ((1usize << n) as f64).sqrt(), 0.0);
        Ok(Self {
            n,
            amps: vec![a; 1 << n],
        })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n {
            return Err(Error::InvalidInput("amplitude count must be a power of two".into()));
        }
        Self::check(n)?;
        let s = Self { n, amps };
        if (s.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput("state is not normalized".into()));
        }
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn mask(&self, qubit: usize) -> usize {
        assert!(qubit < self.n, "qubit {qubit} out of range");
        1 << (self.n - 1 - qubit)
    }

    /// `RY(theta) = [[cos(theta/2), -sin(theta/2)], [sin(theta/2), cos(theta/2)]]`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        let m = self.mask(qubit);
        let (s, c) = (theta / 2.0).sin_cos();
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | m];
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | m] = a0 * s + a1 * c;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        assert_ne!(control, target, "CNOT control equals target");
        let mc = self.mask(control);
        let mt = self.mask(target);
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                self.amps.swap(i, i | mt);
            }
        }
    }

    /// `sum_x |<x|psi>|^2 * diag[x]`.
    pub fn expectation_diagonal(&self, diag: &[f64]) -> f64 {
        assert_eq!(diag.len(), self.amps.len());
        self.amps.iter().zip(diag).map(|(a, d)| a.norm_sqr() * d).sum()
    }
}

/// Fixed set of measurement draws, reusable across states. Shot `k`
/// lands on the first basis state whose cumulative probability exceeds the
/// `k`-th uniform draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSampler {
    uniforms: Vec<f64>,
}

impl ShotSampler {
    pub fn new(shots: usize, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidInput("shots must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniforms: Vec<f64> = (0..shots).map(|_| rng.gen::<f64>()).collect();
        uniforms.sort_by(f64::total_cmp);
        Ok(Self { uniforms })
    }

    pub fn shots(&self) -> usize {
        self.uniforms.len()
    }

    /// Basis index to count.
    pub fn histogram(&self, state: &StateVector) -> BTreeMap<usize, usize> {
        let probs = state.probabilities();
        let total: f64 = probs.iter().sum();
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut hist = BTreeMap::new();
        let mut k = 0;
        let mut cum = 0.0;
        for &u in &self.uniforms {
            let target = u * total;
            while k < last && cum + probs[k] <= target {
                cum += probs[k];
                k += 1;
            }
            *hist.entry(k).or_insert(0) += 1;
        }
        hist
    }
}

/// Multinomial measurement of `shots` repetitions: basis index to count.
pub fn sample_histogram(state: &StateVector, shots: usize, seed: u64) -> Result<BTreeMap<usize, usize>> {
    Ok(ShotSampler::new(shots, seed)?.histogram(state))
}

/// Bit `i` of the returned vector is qubit `i` of basis state `index`.
pub fn basis_bits(index: usize, n: usize) -> Vec<bool> {
    (0..n).map(|q| index >> (n - 1 - q) & 1 == 1).collect()
}

pub fn basis_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| acc << 1 | b as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ry_and_cnot_on_basis() {
        let mut s = StateVector::zero(2).unwrap();
        s.apply_ry(0, std::f64::consts::PI);
        assert!((s.amplitudes()[0b10].re - 1.0).abs() < 1e-12);
        s.apply_cnot(0, 1);
        assert!((s.amplitudes()[0b11].re - 1.0).abs() < 1e-12);
        s.apply_cnot(1, 0);
        assert!((s.amplitudes()[0b01].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_limits() {
        let s = StateVector::uniform(3).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!(s.probabilities().iter().all(|p| (p - 0.125).abs() < 1e-12));
        assert!(matches!(
            StateVector::uniform(21),
            Err(Error::TooManyQubits { requested: 21, .. })
        ));
        assert!(StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn histogram_on_basis_state() {
        let s = StateVector::basis(3, 5).unwrap();
        let h = sample_histogram(&s, 1000, 1).unwrap();
        assert_eq!(h, BTreeMap::from([(5, 1000)]));
    }

    #[test]
    fn histogram_is_seeded() {
        let mut s = StateVector::uniform(3).unwrap();
        s.apply_ry(1, 0.7);
        assert_eq!(
            sample_histogram(&s, 500, 9).unwrap(),
            sample_histogram(&s, 500, 9).unwrap()
        );
        assert_eq!(sample_histogram(&s, 500, 9).unwrap().values().sum::<usize>(), 500);
    }

    #[test]
    fn uniform_histogram_chi_square() {
        let n = 4;
        let shots = 160_000;
        let h = sample_histogram(&StateVector::uniform(n).unwrap(), shots, 3).unwrap();
        let expected = shots as f64 / 16.0;
        let chi2: f64 = (0..16)
            .map(|k| {
                let o = *h.get(&k).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // chi-square, 15 degrees of freedom, upper 0.001 quantile
        assert!(chi2 < 37.697, "chi2 = {chi2}");
    }

    #[test]
    fn zero_probability_states_never_sampled() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply_ry(2, 1.0);
        let h = sample_histogram(&s, 5000, 4).unwrap();
        assert!(h.keys().all(|&k| k == 0 || k == 1));
        let p1 = s.probabilities()[1];
        let f1 = h[&1] as f64 / 5000.0;
        assert!((f1 - p1).abs() < 4.0 * (p1 * (1.0 - p1) / 5000.0).sqrt());
    }

    #[test]
    fn bit_helpers() {
        assert_eq!(basis_bits(0b110, 3), vec![true, true, false]);
        assert_eq!(basis_index(&[true, false, true]), 0b101);
    }
}
