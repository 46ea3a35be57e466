use serde::{Deserialize, Serialize};

use super::statevector::StateVector;
use crate::error::{Error, Result};

pub const DEFAULT_LAYERS: usize = 3;

/// Basic entangling layers: per layer, `RY` on every qubit then a CNOT ring.
/// `theta[l * n + q]` is the angle on qubit `q` in layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub theta: Vec<f64>,
}

impl AnsatzSpec {
    pub fn new(num_qubits: usize, num_layers: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != Self::parameter_count(num_qubits, num_layers) {
            return Err(Error::InvalidInput(format!(
                "{} qubits x {} layers needs {} angles, got {}",
                num_qubits,
                num_layers,
                num_qubits * num_layers,
                theta.len()
            )));
        }
        Ok(Self {
            num_qubits,
            num_layers,
            theta,
        })
    }

    pub fn zeros(num_qubits: usize, num_layers: usize) -> Self {
        Self {
            num_qubits,
            num_layers,
            theta: vec![0.0; num_qubits * num_layers],
        }
    }

    pub fn parameter_count(num_qubits: usize, num_layers: usize) -> usize {
        num_qubits * num_layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Ry { qubit: usize, theta: f64 },
    Cnot { control: usize, target: usize },
}

/// CNOT `(control, target)` pairs of layer `layer`, with target
/// `(c + layer + 1) mod n`. Pairs whose target wraps onto the control are
/// dropped.
pub fn cnot_pairs(n: usize, layer: usize) -> Vec<(usize, usize)> {
    (0..n)
        .map(|c| (c, (c + layer + 1) % n))
        .filter(|(c, t)| c != t)
        .collect()
}

pub fn ansatz_gates(spec: &AnsatzSpec) -> Vec<Gate> {
    let n = spec.num_qubits;
    let mut gates = Vec::with_capacity(spec.num_layers * 2 * n);
    for l in 0..spec.num_layers {
        for q in 0..n {
            gates.push(Gate::Ry {
                qubit: q,
                theta: spec.theta[l * n + q],
            });
        }
        for (control, target) in cnot_pairs(n, l) {
            gates.push(Gate::Cnot { control, target });
        }
    }
    gates
}

/// Reversed gate list with negated angles.
pub fn inverse_gates(gates: &[Gate]) -> Vec<Gate> {
    gates
        .iter()
        .rev()
        .map(|g| match *g {
            Gate::Ry { qubit, theta } => Gate::Ry { qubit, theta: -theta },
            cnot => cnot,
        })
        .collect()
}

pub fn apply_gates(state: &mut StateVector, gates: &[Gate]) {
    for g in gates {
        match *g {
            Gate::Ry { qubit, theta } => state.apply_ry(qubit, theta),
            Gate::Cnot { control, target } => state.apply_cnot(control, target),
        }
    }
}

pub fn apply_ansatz(state: &StateVector, spec: &AnsatzSpec) -> Result<StateVector> {
    if state.num_qubits() != spec.num_qubits {
        return Err(Error::InvalidInput(format!(
            "ansatz acts on {} qubits, state has {}",
            spec.num_qubits,
            state.num_qubits()
        )));
    }
    if spec.theta.len() != AnsatzSpec::parameter_count(spec.num_qubits, spec.num_layers) {
        return Err(Error::InvalidInput("ansatz parameter count mismatch".into()));
    }
    let mut out = state.clone();
    apply_gates(&mut out, &ansatz_gates(spec));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    type Matrix = Vec<Vec<Complex64>>;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.len();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
            .collect()
    }

    fn kron(a: &Matrix, b: &Matrix) -> Matrix {
        let (na, nb) = (a.len(), b.len());
        (0..na * nb)
            .map(|i| (0..na * nb).map(|j| a[i / nb][j / nb] * b[i % nb][j % nb]).collect())
            .collect()
    }

    fn ry(t: f64) -> Matrix {
        let (s, co) = (t / 2.0).sin_cos();
        vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
    }

    fn permutation(f: impl Fn(usize) -> usize) -> Matrix {
        let mut m = vec![vec![c(0.0); 4]; 4];
        for i in 0..4 {
            m[f(i)][i] = c(1.0);
        }
        m
    }

    #[test]
    fn two_qubit_layer_against_matrix_oracle() {
        // |q0 q1>, q0 is the high bit
        let cnot01 = permutation(|i| if i & 2 != 0 { i ^ 1 } else { i });
        let cnot10 = permutation(|i| if i & 1 != 0 { i ^ 2 } else { i });
        let theta = [std::f64::consts::PI, 0.0];
        let u = matmul(&cnot10, &matmul(&cnot01, &kron(&ry(theta[0]), &ry(theta[1]))));
        let spec = AnsatzSpec::new(2, 1, theta.to_vec()).unwrap();
        let out = apply_ansatz(&StateVector::zero(2).unwrap(), &spec).unwrap();
        for (i, amp) in out.amplitudes().iter().enumerate() {
            assert!((amp - u[i][0]).norm() < 1e-12);
        }
        assert!((out.amplitudes()[0b01].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wiring_examples() {
        assert!(cnot_pairs(4, 0).contains(&(3, 0)));
        assert_eq!(cnot_pairs(4, 1), vec![(0, 2), (1, 3), (2, 0), (3, 1)]);
        assert!(cnot_pairs(4, 3).is_empty());
        assert_eq!(cnot_pairs(3, 2), vec![]);
    }

    #[test]
    fn identity_parameters() {
        let out = apply_ansatz(&StateVector::zero(2).unwrap(), &AnsatzSpec::zeros(2, 1)).unwrap();
        assert_eq!(out, StateVector::zero(2).unwrap());
        assert!(AnsatzSpec::new(3, 2, vec![0.0; 5]).is_err());
        assert!(apply_ansatz(&StateVector::zero(3).unwrap(), &AnsatzSpec::zeros(2, 1)).is_err());
    }

    fn random_state(n: usize, re: &[f64], im: &[f64]) -> StateVector {
        let raw: Vec<Complex64> = (0..1 << n).map(|i| Complex64::new(re[i], im[i])).collect();
        let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn norm_preserved_and_invertible(
            n in 1usize..6,
            layers in 1usize..4,
            re in prop::collection::vec(0.1f64..1.0, 32),
            im in prop::collection::vec(-1.0f64..1.0, 32),
            angles in prop::collection::vec(-7.0f64..7.0, 18),
        ) {
            let psi = random_state(n, &re, &im);
            let spec = AnsatzSpec::new(n, layers, angles[..n * layers].to_vec()).unwrap();
            let out = apply_ansatz(&psi, &spec).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-10);
            let mut back = out.clone();
            apply_gates(&mut back, &inverse_gates(&ansatz_gates(&spec)));
            for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }
}
