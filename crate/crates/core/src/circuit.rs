//! Assembles the layered classifier circuit from a [`Configuration`] and runs it.
//!
//! Layout: `[enc] (ent var)^depth` without reuploading, `(enc ent var)^depth`
//! with it. Inside a variational layer each qubit gets `RX` (unless
//! `have_less_rotations`), then `RY`, then `RZ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Activation, Configuration, Entangler, MapType, OutputCircuit};
use crate::statevector::{rotation_matrix, Axis, Gate, Observable, ObservableMode, StateVector};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntanglingMap {
    pub map_type: MapType,
    pub pairs: Vec<(usize, usize)>,
}

pub fn build_entangling_map(map_type: MapType, num_qubits: usize) -> Result<EntanglingMap> {
    if num_qubits < 2 {
        return Err(Error::validation(format!(
            "entangling map needs at least 2 qubits, got {num_qubits}"
        )));
    }
    let n = num_qubits;
    let pairs = match map_type {
        MapType::Ring if n == 2 => vec![(0, 1)],
        MapType::Ring => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        MapType::Full => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        MapType::Pairs => (0..n - 1)
            .step_by(2)
            .chain((1..n - 1).step_by(2))
            .map(|i| (i, i + 1))
            .collect(),
    };
    Ok(EntanglingMap { map_type, pairs })
}

/// One instruction of a circuit template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TemplateOp {
    Fixed { gate: Gate },
    /// `RX(activation(x[feature]))` on `qubit`.
    Input {
        feature: usize,
        qubit: usize,
        activation: Activation,
    },
    /// Trainable rotation `R_axis(params[index])` on `qubit`.
    Param { index: usize, axis: Axis, qubit: usize },
    /// Diagonal IQP phase over the whole feature vector.
    IqpEncoding { activation: Activation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitTemplate {
    pub num_qubits: usize,
    pub ops: Vec<TemplateOp>,
    pub num_parameters: usize,
    pub observable: Observable,
}

/// Encoding layer: `RX(a(x_i))` per qubit, or `H` on every qubit followed by
/// the IQP diagonal phase.
pub fn build_encoding_block(config: &Configuration, num_qubits: usize) -> Vec<TemplateOp> {
    let activation = config.input_activation_function;
    if config.is_data_encoding_hardware_efficient {
        (0..num_qubits)
            .map(|q| TemplateOp::Input {
                feature: q,
                qubit: q,
                activation,
            })
            .collect()
    } else {
        (0..num_qubits)
            .map(|q| TemplateOp::Fixed {
                gate: Gate::H { target: q },
            })
            .chain(std::iter::once(TemplateOp::IqpEncoding { activation }))
            .collect()
    }
}

pub fn assemble_circuit(config: &Configuration, num_qubits: usize) -> Result<CircuitTemplate> {
    config.validate()?;
    let map = build_entangling_map(config.map_type, num_qubits)?;
    let axes: &[Axis] = if config.have_less_rotations {
        &[Axis::Y, Axis::Z]
    } else {
        &[Axis::X, Axis::Y, Axis::Z]
    };

    let mut ops = Vec::new();
    if !config.use_reuploading {
        ops.extend(build_encoding_block(config, num_qubits));
    }
    let mut next_param = 0;
    for _ in 0..config.depth {
        if config.use_reuploading {
            ops.extend(build_encoding_block(config, num_qubits));
        }
        for &(a, b) in &map.pairs {
            let gate = match config.entangler_operation {
                Entangler::Cz => Gate::Cz { targets: [a, b] },
                Entangler::Sqiswap => Gate::Sqiswap { targets: [a, b] },
            };
            ops.push(TemplateOp::Fixed { gate });
        }
        for qubit in 0..num_qubits {
            for &axis in axes {
                ops.push(TemplateOp::Param {
                    index: next_param,
                    axis,
                    qubit,
                });
                next_param += 1;
            }
        }
    }

    let mode = match config.output_circuit {
        OutputCircuit::TwoZ => ObservableMode::PairsZz,
        OutputCircuit::MZ => ObservableMode::AllZ,
    };
    Ok(CircuitTemplate {
        num_qubits,
        ops,
        num_parameters: next_param,
        observable: Observable::new(mode, num_qubits),
    })
}

/// Per-basis phases `exp(-i pi [sum a_i z_i + sum_{i<j} a_i a_j z_i z_j])`
/// with `z_i = +1` when qubit `i` is 0 and `-1` when it is 1.
pub fn iqp_phases(x: &[f64], activation: Activation) -> Vec<Complex64> {
    let n = x.len();
    let a: Vec<f64> = x.iter().map(|&v| activation.apply(v)).collect();
    let mut z = vec![0.0; n];
    (0..1usize << n)
        .map(|b| {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = if (b >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
            }
            let mut s = 0.0;
            for i in 0..n {
                s += a[i] * z[i];
                for j in i + 1..n {
                    s += a[i] * a[j] * z[i] * z[j];
                }
            }
            Complex64::from_polar(1.0, -PI * s)
        })
        .collect()
}

impl CircuitTemplate {
    pub fn num_encoding_blocks(&self) -> usize {
        // Each block starts with the op acting on qubit 0's encoding.
        self.ops
            .iter()
            .filter(|op| match op {
                TemplateOp::Input { qubit, .. } => *qubit == 0,
                TemplateOp::IqpEncoding { .. } => true,
                _ => false,
            })
            .count()
    }

    pub fn uses_iqp(&self) -> bool {
        self.ops
            .iter()
            .any(|op| matches!(op, TemplateOp::IqpEncoding { .. }))
    }

    pub fn check_inputs(&self, x: &[f64], params: &[f64]) -> Result<()> {
        if x.len() != self.num_qubits {
            return Err(Error::validation(format!(
                "feature vector has {} entries, circuit has {} qubits",
                x.len(),
                self.num_qubits
            )));
        }
        if params.len() != self.num_parameters {
            return Err(Error::validation(format!(
                "got {} parameters, circuit needs {}",
                params.len(),
                self.num_parameters
            )));
        }
        Ok(())
    }

    /// Runs the circuit from `|0...0>`.
    pub fn realize(&self, x: &[f64], params: &[f64]) -> Result<StateVector> {
        self.check_inputs(x, params)?;
        let mut state = StateVector::new(self.num_qubits)?;
        let phases = self.iqp_table(x);
        for op in &self.ops {
            self.apply_op(&mut state, op, x, params, phases.as_deref(), false);
        }
        Ok(state)
    }

    /// Z-product expectation for every observable term.
    pub fn expectations(&self, state: &StateVector) -> Vec<f64> {
        self.observable
            .terms
            .iter()
            .map(|t| state.parity_expectation(self.term_mask(state, t)))
            .collect()
    }

    pub(crate) fn term_mask(&self, state: &StateVector, term: &[usize]) -> usize {
        term.iter().fold(0, |m, &q| m | state.qubit_mask(q))
    }

    pub(crate) fn iqp_table(&self, x: &[f64]) -> Option<Vec<Complex64>> {
        self.ops.iter().find_map(|op| match op {
            TemplateOp::IqpEncoding { activation } => Some(iqp_phases(x, *activation)),
            _ => None,
        })
    }

    /// Applies `op` (or its inverse). Inputs are assumed already checked.
    pub(crate) fn apply_op(
        &self,
        state: &mut StateVector,
        op: &TemplateOp,
        x: &[f64],
        params: &[f64],
        iqp: Option<&[Complex64]>,
        inverse: bool,
    ) {
        let sign = if inverse { -1.0 } else { 1.0 };
        match op {
            TemplateOp::Fixed { gate } => match gate {
                Gate::Cz { targets } => state.apply_cz(targets[0], targets[1]),
                Gate::Sqiswap { targets } if inverse => {
                    state.apply_sqiswap_dagger(targets[0], targets[1])
                }
                Gate::Sqiswap { targets } => state.apply_sqiswap(targets[0], targets[1]),
                Gate::Rx { target, angle } => {
                    state.apply_single_unchecked(*target, &rotation_matrix(Axis::X, sign * angle))
                }
                Gate::Ry { target, angle } => {
                    state.apply_single_unchecked(*target, &rotation_matrix(Axis::Y, sign * angle))
                }
                Gate::Rz { target, angle } => {
                    state.apply_single_unchecked(*target, &rotation_matrix(Axis::Z, sign * angle))
                }
                Gate::DiagonalPhase { phases } => {
                    if inverse {
                        let conj: Vec<_> = phases.iter().map(|p| p.conj()).collect();
                        state.multiply_diagonal_unchecked(&conj);
                    } else {
                        state.multiply_diagonal_unchecked(phases);
                    }
                }
                // H, X, Y, Z are self-inverse.
                g => state
                    .apply(g)
                    .expect("fixed gate targets validated at assembly"),
            },
            TemplateOp::Input {
                feature,
                qubit,
                activation,
            } => {
                let angle = activation.apply(x[*feature]);
                state.apply_single_unchecked(*qubit, &rotation_matrix(Axis::X, sign * angle));
            }
            TemplateOp::Param { index, axis, qubit } => {
                state.apply_single_unchecked(*qubit, &rotation_matrix(*axis, sign * params[*index]));
            }
            TemplateOp::IqpEncoding { .. } => {
                let phases = iqp.expect("IQP phase table computed before execution");
                if inverse {
                    for (a, p) in state.amplitudes_mut().iter_mut().zip(phases) {
                        *a *= p.conj();
                    }
                } else {
                    state.multiply_diagonal_unchecked(phases);
                }
            }
        }
    }

    /// Pretty JSON dump of the op list, for debugging and golden files.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Free-function form of [`CircuitTemplate::realize`].
pub fn realize_circuit(template: &CircuitTemplate, x: &[f64], params: &[f64]) -> Result<StateVector> {
    template.realize(x, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Configuration;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn entangling_maps() {
        let ring = build_entangling_map(MapType::Ring, 4).unwrap();
        assert_eq!(ring.pairs, vec![(0, 1), (1, 2), (2, 3), (3, 0)]);
        let full = build_entangling_map(MapType::Full, 3).unwrap();
        assert_eq!(full.pairs, vec![(0, 1), (0, 2), (1, 2)]);
        let pairs = build_entangling_map(MapType::Pairs, 5).unwrap();
        assert_eq!(pairs.pairs, vec![(0, 1), (2, 3), (1, 2), (3, 4)]);
        let ring2 = build_entangling_map(MapType::Ring, 2).unwrap();
        assert_eq!(ring2.pairs, vec![(0, 1)]);
        assert!(build_entangling_map(MapType::Full, 1).is_err());
    }

    #[test]
    fn entangling_map_sizes() {
        for n in 2..10 {
            let full = build_entangling_map(MapType::Full, n).unwrap();
            assert_eq!(full.pairs.len(), n * (n - 1) / 2);
            let pairs = build_entangling_map(MapType::Pairs, n).unwrap();
            assert_eq!(pairs.pairs.len(), n - 1);
            let ring = build_entangling_map(MapType::Ring, n).unwrap();
            assert_eq!(ring.pairs.len(), if n == 2 { 1 } else { n });
        }
    }

    #[test]
    fn parameter_count() {
        let config = Configuration {
            depth: 2,
            have_less_rotations: false,
            ..Default::default()
        };
        let t = assemble_circuit(&config, 3).unwrap();
        assert_eq!(t.num_parameters, 18);
        let mut seen: Vec<usize> = t
            .ops
            .iter()
            .filter_map(|op| match op {
                TemplateOp::Param { index, .. } => Some(*index),
                _ => None,
            })
            .collect();
        seen.sort();
        assert_eq!(seen, (0..18).collect::<Vec<_>>());
    }

    #[test]
    fn pairs_observable_has_six_terms_on_four_qubits() {
        let t = assemble_circuit(&Configuration::default(), 4).unwrap();
        assert_eq!(t.observable.len(), 6);
        let mz = Configuration {
            output_circuit: OutputCircuit::MZ,
            ..Default::default()
        };
        assert_eq!(assemble_circuit(&mz, 4).unwrap().observable.len(), 1);
    }

    #[test]
    fn ring_cz_layout_matches_reference_diagram() {
        let config = Configuration {
            depth: 1,
            map_type: MapType::Ring,
            entangler_operation: Entangler::Cz,
            have_less_rotations: true,
            is_data_encoding_hardware_efficient: true,
            use_reuploading: false,
            ..Default::default()
        };
        let t = assemble_circuit(&config, 4).unwrap();
        let shape: Vec<String> = t
            .ops
            .iter()
            .map(|op| match op {
                TemplateOp::Input { .. } => "RX(x)".to_string(),
                TemplateOp::Fixed { gate } => format!("{:?}", gate.kind()),
                TemplateOp::Param { axis, .. } => format!("R{axis:?}"),
                TemplateOp::IqpEncoding { .. } => "IQP".into(),
            })
            .collect();
        let mut expected = vec!["RX(x)".to_string(); 4];
        expected.extend(vec!["Cz".to_string(); 4]);
        for _ in 0..4 {
            expected.push("RY".into());
            expected.push("RZ".into());
        }
        assert_eq!(shape, expected);
    }

    #[test]
    fn reuploading_repeats_encoding() {
        for reupload in [false, true] {
            for hw in [false, true] {
                let config = Configuration {
                    depth: 4,
                    use_reuploading: reupload,
                    is_data_encoding_hardware_efficient: hw,
                    ..Default::default()
                };
                let t = assemble_circuit(&config, 3).unwrap();
                assert_eq!(t.num_encoding_blocks(), if reupload { 4 } else { 1 });
            }
        }
    }

    #[test]
    fn entangler_substitution_only_changes_kind() {
        let cz = assemble_circuit(&Configuration::default(), 4).unwrap();
        let sq = assemble_circuit(
            &Configuration {
                entangler_operation: Entangler::Sqiswap,
                ..Default::default()
            },
            4,
        )
        .unwrap();
        assert_eq!(cz.ops.len(), sq.ops.len());
        for (a, b) in cz.ops.iter().zip(&sq.ops) {
            match (a, b) {
                (
                    TemplateOp::Fixed {
                        gate: Gate::Cz { targets: ta },
                    },
                    TemplateOp::Fixed {
                        gate: Gate::Sqiswap { targets: tb },
                    },
                ) => assert_eq!(ta, tb),
                _ => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn hardware_efficient_zero_input_is_identity() {
        let config = Configuration::default();
        let block = build_encoding_block(&config, 2);
        let t = CircuitTemplate {
            num_qubits: 2,
            ops: block,
            num_parameters: 0,
            observable: Observable::new(ObservableMode::AllZ, 2),
        };
        let s = t.realize(&[0.0, 0.0], &[]).unwrap();
        assert_eq!(s, StateVector::new(2).unwrap());
    }

    #[test]
    fn iqp_single_qubit_block() {
        let config = Configuration {
            is_data_encoding_hardware_efficient: false,
            ..Default::default()
        };
        let t = CircuitTemplate {
            num_qubits: 1,
            ops: build_encoding_block(&config, 1),
            num_parameters: 0,
            observable: Observable::new(ObservableMode::AllZ, 1),
        };
        let s = t.realize(&[0.5], &[]).unwrap();
        let expected = [Complex64::new(0.0, -FRAC_1_SQRT_2), Complex64::new(0.0, FRAC_1_SQRT_2)];
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() < 1e-15);
        }
    }

    #[test]
    fn tanh_saturates_rotation_angle() {
        let angle = Activation::Tanh.apply(1000.0);
        assert!(angle > 0.9999 && angle <= 1.0);
        // The same angle reaches the gate.
        let config = Configuration {
            input_activation_function: Activation::Tanh,
            ..Default::default()
        };
        let t = CircuitTemplate {
            num_qubits: 1,
            ops: build_encoding_block(&config, 1),
            num_parameters: 0,
            observable: Observable::new(ObservableMode::AllZ, 1),
        };
        let z = t.realize(&[1000.0], &[]).unwrap().expectation_z_product(&[0]).unwrap();
        assert!((z - angle.cos()).abs() < 1e-14);
    }

    #[test]
    fn zero_params_zero_input_gives_unit_parity() {
        for map_type in [MapType::Ring, MapType::Full, MapType::Pairs] {
            let config = Configuration {
                depth: 3,
                map_type,
                output_circuit: OutputCircuit::MZ,
                have_less_rotations: false,
                ..Default::default()
            };
            let t = assemble_circuit(&config, 4).unwrap();
            let s = t.realize(&[0.0; 4], &vec![0.0; t.num_parameters]).unwrap();
            assert!((t.expectations(&s)[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn realize_rejects_length_mismatch() {
        let t = assemble_circuit(&Configuration::default(), 3).unwrap();
        assert!(t.realize(&[0.0; 2], &vec![0.0; t.num_parameters]).is_err());
        assert!(t.realize(&[0.0; 3], &[0.0]).is_err());
    }

    #[test]
    fn assembly_is_deterministic_and_serializable() {
        let config = Configuration {
            is_data_encoding_hardware_efficient: false,
            use_reuploading: true,
            depth: 2,
            ..Default::default()
        };
        let a = assemble_circuit(&config, 3).unwrap();
        let b = assemble_circuit(&config, 3).unwrap();
        assert_eq!(a, b);
        let json = a.to_json().unwrap();
        assert!(json.contains("\"op\": \"iqp_encoding\""));
        let back: CircuitTemplate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
