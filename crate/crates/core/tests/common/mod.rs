//! Dense reference simulator: every gate is expanded to a full
//! `2^n x 2^n` matrix from Kronecker products of single-qubit operators.
#![allow(dead_code)]

use num_complex::Complex64 as C;
use qnn_importance::circuit::{CircuitTemplate, TemplateOp};
use qnn_importance::space::Activation;
use qnn_importance::statevector::{Axis, Gate};

pub type Dense = Vec<Vec<C>>;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn eye(d: usize) -> Dense {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn add(a: &Dense, b: &Dense, s: C) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + s * y).collect())
        .collect()
}

pub fn matvec(m: &Dense, v: &[C]) -> Vec<C> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn pauli(axis: char) -> Dense {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match axis {
        'I' => eye(2),
        'X' => vec![vec![z, one], vec![one, z]],
        'Y' => vec![vec![z, -i], vec![i, z]],
        'Z' => vec![vec![one, z], vec![z, -one]],
        _ => unreachable!(),
    }
}

fn hadamard() -> Dense {
    let r = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![vec![r, r], vec![r, -r]]
}

/// `exp(-i angle/2 P)`.
pub fn rotation(axis: char, angle: f64) -> Dense {
    add(
        &eye(2).iter().map(|r| r.iter().map(|v| v * (angle / 2.0).cos()).collect()).collect(),
        &pauli(axis),
        c(0.0, -(angle / 2.0).sin()),
    )
}

/// Places single-qubit operators on a register; qubit 0 is the leftmost factor.
pub fn embed(n: usize, ops: &[(usize, Dense)]) -> Dense {
    let mut m = vec![vec![c(1.0, 0.0)]];
    for q in 0..n {
        let f = ops
            .iter()
            .find(|(t, _)| *t == q)
            .map(|(_, u)| u.clone())
            .unwrap_or_else(|| eye(2));
        m = kron(&m, &f);
    }
    m
}

fn pauli_sum(n: usize, terms: &[(C, usize, char, usize, char)]) -> Dense {
    let d = 1 << n;
    let mut m = vec![vec![c(0.0, 0.0); d]; d];
    for &(coef, a, pa, b, pb) in terms {
        m = add(&m, &embed(n, &[(a, pauli(pa)), (b, pauli(pb))]), coef);
    }
    m
}

pub fn gate_matrix(n: usize, gate: &Gate) -> Dense {
    match gate {
        Gate::H { target } => embed(n, &[(*target, hadamard())]),
        Gate::X { target } => embed(n, &[(*target, pauli('X'))]),
        Gate::Y { target } => embed(n, &[(*target, pauli('Y'))]),
        Gate::Z { target } => embed(n, &[(*target, pauli('Z'))]),
        Gate::Rx { target, angle } => embed(n, &[(*target, rotation('X', *angle))]),
        Gate::Ry { target, angle } => embed(n, &[(*target, rotation('Y', *angle))]),
        Gate::Rz { target, angle } => embed(n, &[(*target, rotation('Z', *angle))]),
        // (II + IZ + ZI - ZZ) / 2
        Gate::Cz { targets: [a, b] } => {
            let q = c(0.5, 0.0);
            pauli_sum(
                n,
                &[(q, *a, 'I', *b, 'I'), (q, *a, 'I', *b, 'Z'), (q, *a, 'Z', *b, 'I'), (-q, *a, 'Z', *b, 'Z')],
            )
        }
        // (1+r)/2 II + (1-r)/2 ZZ + ir/2 (XX + YY)
        Gate::Sqiswap { targets: [a, b] } => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            pauli_sum(
                n,
                &[
                    (c((1.0 + r) / 2.0, 0.0), *a, 'I', *b, 'I'),
                    (c((1.0 - r) / 2.0, 0.0), *a, 'Z', *b, 'Z'),
                    (c(0.0, r / 2.0), *a, 'X', *b, 'X'),
                    (c(0.0, r / 2.0), *a, 'Y', *b, 'Y'),
                ],
            )
        }
        Gate::DiagonalPhase { phases } => {
            let d = phases.len();
            let mut m = vec![vec![c(0.0, 0.0); d]; d];
            for (i, p) in phases.iter().enumerate() {
                m[i][i] = *p;
            }
            m
        }
    }
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Linear => v,
        Activation::Tanh => v.tanh(),
    }
}

/// `exp(-i pi H)` for `H = sum a_i Z_i + sum_{i<j} a_i a_j Z_i Z_j`, built
/// from the diagonals of the embedded Z operators.
pub fn iqp_matrix(n: usize, x: &[f64], activation: Activation) -> Dense {
    let a: Vec<f64> = x.iter().map(|&v| act(activation, v)).collect();
    let zdiag = |ops: &[(usize, Dense)]| -> Vec<f64> {
        let m = embed(n, ops);
        (0..1 << n).map(|i| m[i][i].re).collect()
    };
    let d = 1 << n;
    let mut h = vec![0.0; d];
    for i in 0..n {
        let zi = zdiag(&[(i, pauli('Z'))]);
        h.iter_mut().zip(&zi).for_each(|(acc, z)| *acc += a[i] * z);
        for j in i + 1..n {
            let zij = zdiag(&[(i, pauli('Z')), (j, pauli('Z'))]);
            h.iter_mut().zip(&zij).for_each(|(acc, z)| *acc += a[i] * a[j] * z);
        }
    }
    let phases: Vec<C> = h.iter().map(|v| C::from_polar(1.0, -std::f64::consts::PI * v)).collect();
    gate_matrix(n, &Gate::DiagonalPhase { phases })
}

fn axis_char(a: Axis) -> char {
    match a {
        Axis::X => 'X',
        Axis::Y => 'Y',
        Axis::Z => 'Z',
    }
}

pub fn oracle_state(t: &CircuitTemplate, x: &[f64], params: &[f64]) -> Vec<C> {
    let n = t.num_qubits;
    let mut psi = vec![c(0.0, 0.0); 1 << n];
    psi[0] = c(1.0, 0.0);
    for op in &t.ops {
        let m = match op {
            TemplateOp::Fixed { gate } => gate_matrix(n, gate),
            TemplateOp::Input {
                feature,
                qubit,
                activation,
            } => embed(n, &[(*qubit, rotation('X', act(*activation, x[*feature])))]),
            TemplateOp::Param { index, axis, qubit } => {
                embed(n, &[(*qubit, rotation(axis_char(*axis), params[*index]))])
            }
            TemplateOp::IqpEncoding { activation } => iqp_matrix(n, x, *activation),
        };
        psi = matvec(&m, &psi);
    }
    psi
}

pub fn oracle_expectations(t: &CircuitTemplate, psi: &[C]) -> Vec<f64> {
    let n = t.num_qubits;
    t.observable
        .terms
        .iter()
        .map(|term| {
            let ops: Vec<(usize, Dense)> = term.iter().map(|&q| (q, pauli('Z'))).collect();
            let o = embed(n, &ops);
            let ov = matvec(&o, psi);
            psi.iter().zip(&ov).map(|(a, b)| a.conj() * b).sum::<C>().re
        })
        .collect()
}
