//! Circuit + sigmoid-neuron binary classifier trained with Adam.
//!
//! Gradients are exact. Two routes are provided: the parameter-shift rule
//! (two shifted circuit runs per parameter) and an adjoint sweep that gets
//! the same derivatives from one forward and one backward pass. Training uses
//! the adjoint sweep by default; tests hold both routes to each other.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{assemble_circuit, CircuitTemplate, TemplateOp};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::space::Configuration;
use crate::statevector::{Axis, StateVector};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;
pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_EPOCHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub circuit_params: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl ModelParameters {
    pub fn zeros(template: &CircuitTemplate) -> Self {
        Self {
            circuit_params: vec![0.0; template.num_parameters],
            head_weights: vec![0.0; template.observable.len()],
            head_bias: 0.0,
        }
    }

    /// Circuit angles uniform in `[0, 2pi)`, head weights uniform in
    /// `+-sqrt(6 / (fan_in + 1))`, bias zero.
    pub fn init<R: Rng + ?Sized>(template: &CircuitTemplate, rng: &mut R) -> Self {
        let circuit_params = (0..template.num_parameters)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        let fan_in = template.observable.len();
        let limit = (6.0 / (fan_in as f64 + 1.0)).sqrt();
        let head_weights = (0..fan_in).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            circuit_params,
            head_weights,
            head_bias: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.circuit_params.len() + self.head_weights.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.circuit_params
            .iter()
            .chain(&self.head_weights)
            .chain(std::iter::once(&self.head_bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.circuit_params
            .iter_mut()
            .chain(self.head_weights.iter_mut())
            .chain(std::iter::once(&mut self.head_bias))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn check_shape(&self, template: &CircuitTemplate) -> Result<()> {
        if self.circuit_params.len() != template.num_parameters
            || self.head_weights.len() != template.observable.len()
        {
            return Err(Error::validation(format!(
                "model has {} circuit params / {} head weights, circuit needs {} / {}",
                self.circuit_params.len(),
                self.head_weights.len(),
                template.num_parameters,
                template.observable.len()
            )));
        }
        Ok(())
    }

    fn add_scaled(&mut self, other: &ModelParameters, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(template: &CircuitTemplate, model: &ModelParameters, expectations: &[f64]) -> f64 {
    debug_assert_eq!(expectations.len(), template.observable.len());
    model.head_bias
        + model
            .head_weights
            .iter()
            .zip(expectations)
            .map(|(w, e)| w * e)
            .sum::<f64>()
}

/// Probability of class 1 for input `x`.
pub fn forward(template: &CircuitTemplate, model: &ModelParameters, x: &[f64]) -> Result<f64> {
    model.check_shape(template)?;
    let state = template.realize(x, &model.circuit_params)?;
    Ok(sigmoid(logit(template, model, &template.expectations(&state))))
}

/// Binary cross-entropy with `p` clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `dL/dp` of [`loss`] (zero where the clamp is active).
pub fn loss_grad_p(p: f64, y: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    ParameterShift,
    #[default]
    Adjoint,
}

/// Derivative of each observable term with respect to each circuit parameter,
/// by the parameter-shift rule: `(<O>(t + pi/2) - <O>(t - pi/2)) / 2`.
/// Returned as `[param][term]`.
pub fn parameter_shift_jacobian(
    template: &CircuitTemplate,
    x: &[f64],
    params: &[f64],
) -> Result<Vec<Vec<f64>>> {
    template.check_inputs(x, params)?;
    let mut shifted = params.to_vec();
    (0..params.len())
        .map(|i| {
            shifted[i] = params[i] + FRAC_PI_2;
            let plus = template.expectations(&template.realize(x, &shifted)?);
            shifted[i] = params[i] - FRAC_PI_2;
            let minus = template.expectations(&template.realize(x, &shifted)?);
            shifted[i] = params[i];
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / 2.0).collect())
        })
        .collect()
}

/// Gradient of `sum_k weights[k] <O_k>` with respect to every circuit
/// parameter via a single adjoint sweep.
pub fn adjoint_weighted_gradient(
    template: &CircuitTemplate,
    x: &[f64],
    params: &[f64],
    weights: &[f64],
) -> Result<(StateVector, Vec<f64>)> {
    let final_state = template.realize(x, params)?;
    let grad = adjoint_sweep(template, x, params, weights, final_state.clone());
    Ok((final_state, grad))
}

fn adjoint_sweep(
    template: &CircuitTemplate,
    x: &[f64],
    params: &[f64],
    weights: &[f64],
    mut psi: StateVector,
) -> Vec<f64> {
    let masks: Vec<usize> = template
        .observable
        .terms
        .iter()
        .map(|t| template.term_mask(&psi, t))
        .collect();
    let mut lambda = psi.clone();
    for (b, a) in lambda.amplitudes_mut().iter_mut().enumerate() {
        let m: f64 = masks
            .iter()
            .zip(weights)
            .map(|(&mask, w)| if (b & mask).count_ones() % 2 == 0 { *w } else { -*w })
            .sum();
        *a *= m;
    }

    let iqp = template.iqp_table(x);
    let mut grad = vec![0.0; template.num_parameters];
    for op in template.ops.iter().rev() {
        if let TemplateOp::Param { index, axis, qubit } = op {
            grad[*index] = pauli_overlap(&lambda, &psi, *axis, *qubit).im;
        }
        template.apply_op(&mut psi, op, x, params, iqp.as_deref(), true);
        template.apply_op(&mut lambda, op, x, params, iqp.as_deref(), true);
    }
    grad
}

/// `<lambda| P_qubit |psi>` for Pauli `P` selected by `axis`.
fn pauli_overlap(lambda: &StateVector, psi: &StateVector, axis: Axis, qubit: usize) -> Complex64 {
    let stride = psi.qubit_mask(qubit);
    let (l, s) = (lambda.amplitudes(), psi.amplitudes());
    let i_unit = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut base = 0;
    while base < s.len() {
        for i in base..base + stride {
            let j = i + stride;
            let (p0, p1) = match axis {
                Axis::X => (s[j], s[i]),
                Axis::Y => (-i_unit * s[j], i_unit * s[i]),
                Axis::Z => (s[i], -s[j]),
            };
            acc += l[i].conj() * p0 + l[j].conj() * p1;
        }
        base += 2 * stride;
    }
    acc
}

/// Loss and gradient of the loss for one labelled example.
pub fn circuit_gradient(
    template: &CircuitTemplate,
    model: &ModelParameters,
    x: &[f64],
    y: f64,
    method: GradientMethod,
) -> Result<(f64, ModelParameters)> {
    model.check_shape(template)?;
    let (state, circuit_grad_h) = match method {
        GradientMethod::Adjoint => {
            adjoint_weighted_gradient(template, x, &model.circuit_params, &model.head_weights)?
        }
        GradientMethod::ParameterShift => {
            let state = template.realize(x, &model.circuit_params)?;
            let jac = parameter_shift_jacobian(template, x, &model.circuit_params)?;
            let g = jac
                .iter()
                .map(|row| row.iter().zip(&model.head_weights).map(|(d, w)| d * w).sum())
                .collect();
            (state, g)
        }
    };
    let expectations = template.expectations(&state);
    let p = sigmoid(logit(template, model, &expectations));
    // dL/dz for z the pre-sigmoid logit.
    let dz = loss_grad_p(p, y) * p * (1.0 - p);
    let grads = ModelParameters {
        circuit_params: circuit_grad_h.iter().map(|g| dz * g).collect(),
        head_weights: expectations.iter().map(|e| dz * e).collect(),
        head_bias: dz,
    };
    Ok((loss(p, y), grads))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, model: &mut ModelParameters, grads: &ModelParameters, lr: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in model
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Feature rows plus binary labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn validate(&self, num_features: usize) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::validation("feature and label counts differ"));
        }
        if let Some(bad) = self.y.iter().find(|&&v| v > 1) {
            return Err(Error::validation(format!("non-binary label {bad}")));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != num_features) {
            return Err(Error::validation(format!(
                "row has {} features, expected {num_features}",
                row.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub per_epoch_val_accuracy: Vec<f64>,
    pub per_epoch_train_loss: Vec<f64>,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub gradient: GradientMethod,
    /// Starting point; drawn from `seed` when absent.
    pub init: Option<ModelParameters>,
}

impl TrainOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            seed,
            gradient: GradientMethod::default(),
            init: None,
        }
    }
}

pub fn accuracy(template: &CircuitTemplate, model: &ModelParameters, data: &LabeledSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::validation("empty evaluation set"));
    }
    let mut correct = 0usize;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let predicted = u8::from(forward(template, model, x)? >= 0.5);
        correct += usize::from(predicted == y);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains on `train` with mini-batch Adam and records validation accuracy
/// after each epoch.
pub fn train_fold(
    config: &Configuration,
    train: &LabeledSet,
    validation: &LabeledSet,
    opts: &TrainOptions,
) -> Result<TrainingRecord> {
    let num_features = train
        .x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::validation("empty training set"))?;
    train.validate(num_features)?;
    validation.validate(num_features)?;
    let template = assemble_circuit(config, num_features)?;

    let mut model = match &opts.init {
        Some(m) => {
            m.check_shape(&template)?;
            m.clone()
        }
        None => ModelParameters::init(&template, &mut ChaCha8Rng::seed_from_u64(opts.seed)),
    };
    let mut adam = Adam::new(model.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut per_epoch_val_accuracy = Vec::with_capacity(opts.epochs);
    let mut per_epoch_train_loss = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[epoch as u64 + 1]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batchsize) {
            let mut acc = ModelParameters {
                circuit_params: vec![0.0; model.circuit_params.len()],
                head_weights: vec![0.0; model.head_weights.len()],
                head_bias: 0.0,
            };
            for &i in batch {
                let (l, g) =
                    circuit_gradient(&template, &model, &train.x[i], f64::from(train.y[i]), opts.gradient)?;
                epoch_loss += l;
                acc.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            if !epoch_loss.is_finite() || !acc.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {}", epoch + 1)));
            }
            adam.step(&mut model, &acc, config.learning_rate);
            if !model.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite parameters in epoch {}",
                    epoch + 1
                )));
            }
        }
        per_epoch_train_loss.push(epoch_loss / train.len() as f64);
        per_epoch_val_accuracy.push(accuracy(&template, &model, validation)?);
    }

    let best_val_accuracy = per_epoch_val_accuracy.iter().copied().fold(0.0, f64::max);
    Ok(TrainingRecord {
        best_val_accuracy,
        epochs_run: per_epoch_val_accuracy.len(),
        per_epoch_val_accuracy,
        per_epoch_train_loss,
        seed: opts.seed,
    })
}
