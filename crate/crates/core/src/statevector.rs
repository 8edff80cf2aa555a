//! Dense statevector simulation.
//!
//! Basis convention: qubit 0 is the most significant bit of the basis index,
//! so on two qubits `|10>` is the amplitude at index 2.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 24;

const UNIT_MODULUS_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub type Matrix2 = [[Complex64; 2]; 2];
pub type Matrix4 = [[Complex64; 4]; 4];

/// Rotation axis of a parameterized single-qubit gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Rx,
    Ry,
    Rz,
    Cz,
    Sqiswap,
    DiagonalPhase,
}

/// A gate together with its targets (and angle or phase table where relevant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gate {
    H { target: usize },
    X { target: usize },
    Y { target: usize },
    Z { target: usize },
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cz { targets: [usize; 2] },
    Sqiswap { targets: [usize; 2] },
    DiagonalPhase { phases: Vec<Complex64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMatrix {
    Single(Matrix2),
    Two(Matrix4),
}

impl Gate {
    pub fn rotation(axis: Axis, target: usize, angle: f64) -> Self {
        match axis {
            Axis::X => Gate::Rx { target, angle },
            Axis::Y => Gate::Ry { target, angle },
            Axis::Z => Gate::Rz { target, angle },
        }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::H { .. } => GateKind::H,
            Gate::X { .. } => GateKind::X,
            Gate::Y { .. } => GateKind::Y,
            Gate::Z { .. } => GateKind::Z,
            Gate::Rx { .. } => GateKind::Rx,
            Gate::Ry { .. } => GateKind::Ry,
            Gate::Rz { .. } => GateKind::Rz,
            Gate::Cz { .. } => GateKind::Cz,
            Gate::Sqiswap { .. } => GateKind::Sqiswap,
            Gate::DiagonalPhase { .. } => GateKind::DiagonalPhase,
        }
    }

    /// Qubits the gate acts on. Empty for a full diagonal phase.
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::H { target }
            | Gate::X { target }
            | Gate::Y { target }
            | Gate::Z { target }
            | Gate::Rx { target, .. }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. } => vec![target],
            Gate::Cz { targets } | Gate::Sqiswap { targets } => targets.to_vec(),
            Gate::DiagonalPhase { .. } => Vec::new(),
        }
    }

    /// The local 2x2 or 4x4 unitary. `None` for a diagonal phase, which acts on
    /// the whole register. For two-qubit gates the first target is the more
    /// significant index of the 4x4 matrix.
    pub fn matrix(&self) -> Option<GateMatrix> {
        let m = match *self {
            Gate::H { .. } => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                GateMatrix::Single([[h, h], [h, -h]])
            }
            Gate::X { .. } => GateMatrix::Single([[ZERO, ONE], [ONE, ZERO]]),
            Gate::Y { .. } => GateMatrix::Single([[ZERO, -I], [I, ZERO]]),
            Gate::Z { .. } => GateMatrix::Single([[ONE, ZERO], [ZERO, -ONE]]),
            Gate::Rx { angle, .. } => GateMatrix::Single(rotation_matrix(Axis::X, angle)),
            Gate::Ry { angle, .. } => GateMatrix::Single(rotation_matrix(Axis::Y, angle)),
            Gate::Rz { angle, .. } => GateMatrix::Single(rotation_matrix(Axis::Z, angle)),
            Gate::Cz { .. } => {
                let mut m = [[ZERO; 4]; 4];
                m[0][0] = ONE;
                m[1][1] = ONE;
                m[2][2] = ONE;
                m[3][3] = -ONE;
                GateMatrix::Two(m)
            }
            Gate::Sqiswap { .. } => {
                let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
                let ri = Complex64::new(0.0, FRAC_1_SQRT_2);
                let mut m = [[ZERO; 4]; 4];
                m[0][0] = ONE;
                m[1][1] = r;
                m[1][2] = ri;
                m[2][1] = ri;
                m[2][2] = r;
                m[3][3] = ONE;
                GateMatrix::Two(m)
            }
            Gate::DiagonalPhase { .. } => return None,
        };
        Some(m)
    }
}

/// `exp(-i angle/2 P)` for the Pauli matrix `P` selected by `axis`.
pub fn rotation_matrix(axis: Axis, angle: f64) -> Matrix2 {
    let (s, c) = (angle / 2.0).sin_cos();
    match axis {
        Axis::X => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        Axis::Y => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        Axis::Z => [
            [Complex64::new(c, -s), ZERO],
            [ZERO, Complex64::new(c, s)],
        ],
    }
}

/// Which Z-product observables a circuit reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservableMode {
    PairsZz,
    AllZ,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub mode: ObservableMode,
    pub terms: Vec<Vec<usize>>,
}

impl Observable {
    pub fn new(mode: ObservableMode, num_qubits: usize) -> Self {
        let terms = match mode {
            ObservableMode::PairsZz => (0..num_qubits)
                .flat_map(|i| (i + 1..num_qubits).map(move |j| vec![i, j]))
                .collect(),
            ObservableMode::AllZ => vec![(0..num_qubits).collect()],
        };
        Self { mode, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn new(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Capacity(num_qubits));
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::validation(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Capacity(num_qubits));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Basis-index bit of qubit `q`.
    #[inline]
    pub fn qubit_mask(&self, q: usize) -> usize {
        1 << (self.num_qubits - 1 - q)
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.num_qubits {
            return Err(Error::Bounds {
                index: q,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        for q in gate.targets() {
            self.check_qubit(q)?;
        }
        match gate {
            Gate::Cz { targets } | Gate::Sqiswap { targets } if targets[0] == targets[1] => {
                Err(Error::validation(format!(
                    "two-qubit gate targets must be distinct, got {targets:?}"
                )))
            }
            Gate::DiagonalPhase { phases } => self.apply_diagonal_phase(phases),
            Gate::Cz { targets } => {
                self.apply_cz(targets[0], targets[1]);
                Ok(())
            }
            Gate::Sqiswap { targets } => {
                self.apply_sqiswap(targets[0], targets[1]);
                Ok(())
            }
            _ => {
                let q = gate.targets()[0];
                match gate.matrix() {
                    Some(GateMatrix::Single(m)) => self.apply_single_unchecked(q, &m),
                    _ => unreachable!("single-qubit gate without a 2x2 matrix"),
                }
                Ok(())
            }
        }
    }

    /// Applies a 2x2 matrix to qubit `q`. The caller guarantees `q < n`.
    pub fn apply_single_unchecked(&mut self, q: usize, m: &Matrix2) {
        let stride = self.qubit_mask(q);
        let amps = &mut self.amplitudes;
        let mut base = 0;
        while base < amps.len() {
            for i in base..base + stride {
                let a0 = amps[i];
                let a1 = amps[i + stride];
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += 2 * stride;
        }
    }

    /// Applies a 4x4 matrix to qubits `(q0, q1)`, `q0` being the high index bit
    /// of the matrix. The caller guarantees distinct in-range targets.
    pub fn apply_two_unchecked(&mut self, q0: usize, q1: usize, m: &Matrix4) {
        let b0 = self.qubit_mask(q0);
        let b1 = self.qubit_mask(q1);
        let amps = &mut self.amplitudes;
        for i in 0..amps.len() {
            if i & (b0 | b1) != 0 {
                continue;
            }
            let idx = [i, i | b1, i | b0, i | b0 | b1];
            let v = idx.map(|k| amps[k]);
            for (r, &k) in idx.iter().enumerate() {
                amps[k] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        }
    }

    pub(crate) fn apply_cz(&mut self, q0: usize, q1: usize) {
        let mask = self.qubit_mask(q0) | self.qubit_mask(q1);
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *a = -*a;
            }
        }
    }

    pub(crate) fn apply_sqiswap(&mut self, q0: usize, q1: usize) {
        self.sqiswap_impl(q0, q1, 1.0);
    }

    /// Inverse of the square-root iSWAP.
    pub(crate) fn apply_sqiswap_dagger(&mut self, q0: usize, q1: usize) {
        self.sqiswap_impl(q0, q1, -1.0);
    }

    fn sqiswap_impl(&mut self, q0: usize, q1: usize, sign: f64) {
        let b0 = self.qubit_mask(q0);
        let b1 = self.qubit_mask(q1);
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let ri = Complex64::new(0.0, sign * FRAC_1_SQRT_2);
        for i in 0..self.amplitudes.len() {
            if i & (b0 | b1) != 0 {
                continue;
            }
            let (k01, k10) = (i | b1, i | b0);
            let a01 = self.amplitudes[k01];
            let a10 = self.amplitudes[k10];
            self.amplitudes[k01] = r * a01 + ri * a10;
            self.amplitudes[k10] = ri * a01 + r * a10;
        }
    }

    /// Multiplies amplitude `b` by `phases[b]`. Every phase must have unit modulus.
    pub fn apply_diagonal_phase(&mut self, phases: &[Complex64]) -> Result<()> {
        if phases.len() != self.amplitudes.len() {
            return Err(Error::validation(format!(
                "phase table has {} entries, state has {}",
                phases.len(),
                self.amplitudes.len()
            )));
        }
        if let Some((b, p)) = phases
            .iter()
            .enumerate()
            .find(|(_, p)| (p.norm() - 1.0).abs() > UNIT_MODULUS_TOL)
        {
            return Err(Error::validation(format!(
                "phase {b} has modulus {} (not unitary)",
                p.norm()
            )));
        }
        self.multiply_diagonal_unchecked(phases);
        Ok(())
    }

    pub(crate) fn multiply_diagonal_unchecked(&mut self, diag: &[Complex64]) {
        for (a, p) in self.amplitudes.iter_mut().zip(diag) {
            *a *= p;
        }
    }

    /// `<Z_{i1} Z_{i2} ...>` over the given qubit subset, computed exactly.
    pub fn expectation_z_product(&self, qubits: &[usize]) -> Result<f64> {
        if qubits.is_empty() {
            return Err(Error::validation("Z-product subset is empty"));
        }
        let mut mask = 0;
        for &q in qubits {
            self.check_qubit(q)?;
            mask |= self.qubit_mask(q);
        }
        Ok(self.parity_expectation(mask))
    }

    #[inline]
    pub(crate) fn parity_expectation(&self, mask: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let p = a.norm_sqr();
                if (b & mask).count_ones() % 2 == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum()
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }
}

/// Functional form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

/// Functional form of [`StateVector::apply_diagonal_phase`].
pub fn apply_diagonal_phase(mut state: StateVector, phases: &[Complex64]) -> Result<StateVector> {
    state.apply_diagonal_phase(phases)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_amps(state: &StateVector, expected: &[Complex64], tol: f64) {
        assert_eq!(state.amplitudes().len(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() <= tol, "{a} != {e}");
        }
    }

    #[test]
    fn init_state_is_all_zeros_basis_vector() {
        assert_amps(&StateVector::new(1).unwrap(), &[c(1., 0.), c(0., 0.)], 0.0);
        assert_amps(
            &StateVector::new(2).unwrap(),
            &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)],
            0.0,
        );
        assert_eq!(StateVector::new(3).unwrap().norm_sqr(), 1.0);
    }

    #[test]
    fn init_state_rejects_out_of_range() {
        assert!(matches!(StateVector::new(0), Err(Error::Capacity(0))));
        assert!(matches!(StateVector::new(25), Err(Error::Capacity(25))));
    }

    #[test]
    fn hadamard_on_zero() {
        let s = apply_gate(StateVector::new(1).unwrap(), &Gate::H { target: 0 }).unwrap();
        assert_amps(&s, &[c(FRAC_1_SQRT_2, 0.), c(FRAC_1_SQRT_2, 0.)], 1e-15);
    }

    #[test]
    fn cz_flips_sign_of_11() {
        let s = StateVector::from_amplitudes(vec![c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)])
            .unwrap();
        let s = apply_gate(s, &Gate::Cz { targets: [0, 1] }).unwrap();
        assert_amps(&s, &[c(0., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)], 0.0);
    }

    #[test]
    fn sqiswap_on_01() {
        let s = StateVector::from_amplitudes(vec![c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)])
            .unwrap();
        let s = apply_gate(s, &Gate::Sqiswap { targets: [0, 1] }).unwrap();
        assert_amps(
            &s,
            &[c(0., 0.), c(FRAC_1_SQRT_2, 0.), c(0., FRAC_1_SQRT_2), c(0., 0.)],
            1e-15,
        );
    }

    #[test]
    fn sqiswap_dagger_inverts() {
        let mut s = StateVector::from_amplitudes(vec![c(0.1, 0.2), c(0.5, -0.1), c(0.3, 0.3), c(0.0, 0.7)])
            .unwrap();
        let before = s.clone();
        s.apply_sqiswap(1, 0);
        s.apply_sqiswap_dagger(1, 0);
        assert_amps(&s, before.amplitudes(), 1e-15);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let s = StateVector::from_amplitudes(vec![c(0.6, 0.), c(0., 0.8)]).unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let out = apply_gate(s.clone(), &Gate::rotation(axis, 0, 0.0)).unwrap();
            assert_amps(&out, s.amplitudes(), 0.0);
        }
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let s = apply_gate(StateVector::new(2).unwrap(), &Gate::X { target: 0 }).unwrap();
        // |10> = (0, 0, 1, 0)
        assert_amps(&s, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)], 0.0);
    }

    #[test]
    fn bad_target_is_bounds_error() {
        let mut s = StateVector::new(2).unwrap();
        assert!(matches!(
            s.apply(&Gate::H { target: 2 }),
            Err(Error::Bounds { index: 2, .. })
        ));
        assert!(s.apply(&Gate::Cz { targets: [1, 1] }).is_err());
    }

    #[test]
    fn z_products_on_basis_states() {
        let s00 = StateVector::new(2).unwrap();
        assert_eq!(s00.expectation_z_product(&[0, 1]).unwrap(), 1.0);
        let s01 = apply_gate(s00, &Gate::X { target: 1 }).unwrap();
        assert_eq!(s01.expectation_z_product(&[0, 1]).unwrap(), -1.0);
        assert!(s01.expectation_z_product(&[]).is_err());
        assert!(s01.expectation_z_product(&[3]).is_err());
    }

    #[test]
    fn ry_half_pi_has_zero_z() {
        // <Z> = cos(theta) for RY(theta)|0>; dense 2x2 check of the same amplitudes.
        let theta = PI / 2.0;
        let s = apply_gate(StateVector::new(1).unwrap(), &Gate::Ry { target: 0, angle: theta })
            .unwrap();
        let m = rotation_matrix(Axis::Y, theta);
        let dense = [m[0][0], m[1][0]];
        let oracle = dense[0].norm_sqr() - dense[1].norm_sqr();
        let z = s.expectation_z_product(&[0]).unwrap();
        assert!(z.abs() <= 1e-12);
        assert!((z - oracle).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_phase_examples() {
        let plus = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2, 0.), c(FRAC_1_SQRT_2, 0.)])
            .unwrap();
        let same = apply_diagonal_phase(plus.clone(), &[c(1., 0.), c(1., 0.)]).unwrap();
        assert_amps(&same, plus.amplitudes(), 0.0);

        // n = 1, x = 0.5: exp(-i pi x Z) = diag(-i, i)
        let out = apply_diagonal_phase(plus, &[c(0., -1.), c(0., 1.)]).unwrap();
        assert_amps(&out, &[c(0., -FRAC_1_SQRT_2), c(0., FRAC_1_SQRT_2)], 1e-15);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_phase_errors() {
        let s = StateVector::new(1).unwrap();
        assert!(apply_diagonal_phase(s.clone(), &[c(1., 0.)]).is_err());
        assert!(apply_diagonal_phase(s, &[c(1., 0.), c(0.5, 0.)]).is_err());
    }

    #[test]
    fn observable_term_counts() {
        let o = Observable::new(ObservableMode::PairsZz, 4);
        assert_eq!(o.len(), 6);
        assert!(o.terms.iter().all(|t| t.len() == 2 && t[0] < t[1]));
        let m = Observable::new(ObservableMode::AllZ, 4);
        assert_eq!(m.terms, vec![vec![0, 1, 2, 3]]);
    }
}
