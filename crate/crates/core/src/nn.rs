//! From-scratch multilayer perceptron: ReLU hidden layers, softmax output,
//! mean cross-entropy with an L2 penalty, and momentum SGD.
//!
//! Parameters flatten layer by layer: the `in x out` weight matrix in
//! row-major order, then the `out` biases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::ParameterVector;
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

/// Number of parameters of an MLP with the given layer sizes.
pub fn parameter_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive: {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl<T: Scalar> MlpModel<T> {
    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![T::zero(); w[0] * w[1]])
            .collect();
        let biases = layer_sizes
            .windows(2)
            .map(|w| vec![T::zero(); w[1]])
            .collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn init_uniform<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        for (k, w) in model.weights.iter_mut().enumerate() {
            let bound = 1.0 / (layer_sizes[k] as f64).sqrt();
            for x in w.iter_mut() {
                *x = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.layer_sizes)
    }

    /// Weights of layer `k`, row-major `layer_sizes[k] x layer_sizes[k+1]`.
    pub fn weights(&self, k: usize) -> &[T] {
        &self.weights[k]
    }

    pub fn weights_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.weights[k]
    }

    pub fn biases(&self, k: usize) -> &[T] {
        &self.biases[k]
    }

    pub fn biases_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.biases[k]
    }

    pub fn flatten(&self) -> ParameterVector<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        ParameterVector::new(out)
    }

    pub fn unflatten(params: &[T], layer_sizes: &[usize]) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        model.load(params)?;
        Ok(model)
    }

    /// Overwrites all parameters from a flat vector in flatten order.
    pub fn load(&mut self, params: &[T]) -> Result<()> {
        let d = self.parameter_count();
        if params.len() != d {
            return Err(Error::Shape(format!(
                "model {:?} has {d} parameters, vector has {}",
                self.layer_sizes,
                params.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (wl, bl) = (w.len(), b.len());
            w.copy_from_slice(&params[off..off + wl]);
            off += wl;
            b.copy_from_slice(&params[off..off + bl]);
            off += bl;
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry holds the output logits.
    fn pre_activations(&self, batch: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut input = batch.clone();
        for k in 0..layers {
            let mut z = affine(
                &input,
                &self.weights[k],
                &self.biases[k],
                self.layer_sizes[k + 1],
            );
            pre.push(z.clone());
            if k + 1 < layers {
                relu_in_place(&mut z);
                input = z;
            }
        }
        Ok(pre)
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        let mut logits = self
            .pre_activations(batch)?
            .pop()
            .expect("at least one layer");
        for r in 0..logits.rows() {
            softmax_in_place(logits.row_mut(r));
        }
        Ok(logits)
    }

    /// Index of the most probable class per row; ties go to the lower index.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Vec<usize>> {
        let logits = self
            .pre_activations(batch)?
            .pop()
            .expect("at least one layer");
        Ok(logits.iter_rows().map(argmax).collect())
    }

    /// Gradient of `mean cross-entropy + l2_weight * ||params||^2` in flatten
    /// order, together with that loss.
    pub fn backward(
        &self,
        batch: &Matrix<T>,
        targets: &[usize],
        l2_weight: T,
    ) -> Result<(ParameterVector<T>, T)> {
        let rows = batch.rows();
        if targets.len() != rows {
            return Err(Error::Shape(format!(
                "{} targets for a batch of {rows}",
                targets.len()
            )));
        }
        if rows == 0 {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        let classes = self.class_count();
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Shape(format!("target {bad} outside [0, {classes})")));
        }

        let pre = self.pre_activations(batch)?;
        let layers = self.weights.len();
        let inv_rows = T::one() / T::of_usize(rows);

        // output delta (p - onehot) / B, loss -mean log p[target]
        let mut delta = pre[layers - 1].clone();
        let mut loss = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            let row = delta.row_mut(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss = loss + (log_sum - row[t]);
            for v in row.iter_mut() {
                *v = (*v - log_sum).exp() * inv_rows;
            }
            row[t] = row[t] - inv_rows;
        }
        loss = loss * inv_rows;

        let mut grad_w: Vec<Vec<T>> = Vec::with_capacity(layers);
        let mut grad_b: Vec<Vec<T>> = Vec::with_capacity(layers);
        for k in (0..layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let input = if k == 0 {
                batch.clone()
            } else {
                let mut a = pre[k - 1].clone();
                relu_in_place(&mut a);
                a
            };
            let mut gw = vec![T::zero(); fan_in * fan_out];
            let mut gb = vec![T::zero(); fan_out];
            for r in 0..rows {
                let x = input.row(r);
                let d = delta.row(r);
                for (i, &xi) in x.iter().enumerate() {
                    let g = &mut gw[i * fan_out..(i + 1) * fan_out];
                    for (gv, &dv) in g.iter_mut().zip(d) {
                        *gv = *gv + xi * dv;
                    }
                }
                for (gv, &dv) in gb.iter_mut().zip(d) {
                    *gv = *gv + dv;
                }
            }
            if k > 0 {
                let w = &self.weights[k];
                let mut next = Matrix::zeros(rows, fan_in);
                for r in 0..rows {
                    let d = delta.row(r);
                    let z = pre[k - 1].row(r);
                    let out = next.row_mut(r);
                    for i in 0..fan_in {
                        if z[i] > T::zero() {
                            let wr = &w[i * fan_out..(i + 1) * fan_out];
                            out[i] = wr.iter().zip(d).map(|(&a, &b)| a * b).sum();
                        }
                    }
                }
                delta = next;
            }
            grad_w.push(gw);
            grad_b.push(gb);
        }
        grad_w.reverse();
        grad_b.reverse();

        let mut grad = Vec::with_capacity(self.parameter_count());
        for (gw, gb) in grad_w.into_iter().zip(grad_b) {
            grad.extend(gw);
            grad.extend(gb);
        }
        if l2_weight > T::zero() {
            let params = self.flatten();
            let two_l2 = l2_weight + l2_weight;
            let mut sq = T::zero();
            for (g, &p) in grad.iter_mut().zip(params.iter()) {
                *g = *g + two_l2 * p;
                sq = sq + p * p;
            }
            loss = loss + l2_weight * sq;
        }
        Ok((ParameterVector::new(grad), loss))
    }

    /// Mean cross-entropy plus the L2 term, without the gradient.
    pub fn loss(&self, batch: &Matrix<T>, targets: &[usize], l2_weight: T) -> Result<T> {
        if targets.len() != batch.rows() || batch.rows() == 0 {
            return Err(Error::Shape(format!(
                "{} targets for a batch of {}",
                targets.len(),
                batch.rows()
            )));
        }
        let logits = self
            .pre_activations(batch)?
            .pop()
            .expect("at least one layer");
        let mut loss = T::zero();
        for (row, &t) in logits.iter_rows().zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss = loss + (log_sum - row[t]);
        }
        loss = loss / T::of_usize(targets.len());
        if l2_weight > T::zero() {
            let sq: T = self.flatten().iter().map(|&p| p * p).sum();
            loss = loss + l2_weight * sq;
        }
        Ok(loss)
    }
}

fn affine<T: Scalar>(input: &Matrix<T>, w: &[T], b: &[T], fan_out: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(input.rows(), fan_out);
    for r in 0..input.rows() {
        let o = out.row_mut(r);
        o.copy_from_slice(b);
        for (i, &x) in input.row(r).iter().enumerate() {
            let wr = &w[i * fan_out..(i + 1) * fan_out];
            for (ov, &wv) in o.iter_mut().zip(wr) {
                *ov = *ov + x * wv;
            }
        }
    }
    out
}

fn relu_in_place<T: Scalar>(m: &mut Matrix<T>) {
    for r in 0..m.rows() {
        for v in m.row_mut(r) {
            if v.is_nan() || *v <= T::zero() {
                *v = T::zero();
            }
        }
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if cmp_scalar(v, &row[best]) == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            l2_weight: 1e-4,
            batch_size: 83,
            epochs: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.l2_weight.is_nan() || self.l2_weight < 0.0 {
            return Err(Error::Config(format!(
                "l2 weight must be non-negative, got {}",
                self.l2_weight
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Momentum SGD: `velocity <- momentum * velocity + gradient`, then
/// `params <- params - lr * velocity`.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    gradient: &[T],
    velocity: &mut [T],
    config: &TrainingConfig,
) -> Result<()> {
    if gradient.len() != params.len() || velocity.len() != params.len() {
        return Err(Error::Shape(format!(
            "sgd step over {} parameters with gradient {} and velocity {}",
            params.len(),
            gradient.len(),
            velocity.len()
        )));
    }
    let lr = T::of(config.learning_rate);
    let mom = T::of(config.momentum);
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(gradient) {
        *v = mom * *v + g;
        *p = *p - lr * *v;
    }
    Ok(())
}

/// Same step applied to a model in place.
pub fn sgd_step_model<T: Scalar>(
    model: &mut MlpModel<T>,
    gradient: &[T],
    velocity: &mut [T],
    config: &TrainingConfig,
) -> Result<()> {
    let mut params = model.flatten();
    sgd_step(&mut params, gradient, velocity, config)?;
    model.load(&params)
}

/// Runs `config.epochs` passes of mini-batch momentum SGD over the `chunk`
/// rows of `data`, starting from `model` with zero velocity. The visiting
/// order of every epoch is a shuffle drawn from `seed`.
pub fn train_local<T: Scalar>(
    model: &MlpModel<T>,
    data: &Dataset<T>,
    chunk: &[usize],
    config: &TrainingConfig,
    seed: u64,
) -> Result<ParameterVector<T>> {
    config.validate()?;
    if chunk.is_empty() {
        return Err(Error::InsufficientData("empty training chunk".into()));
    }
    let mut model = model.clone();
    let mut params = model.flatten();
    let mut velocity = vec![T::zero(); params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = chunk.to_vec();
    let l2 = T::of(config.l2_weight);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(config.batch_size) {
            let batch = data.inputs().select_rows(batch_idx);
            let targets: Vec<usize> = batch_idx.iter().map(|&i| data.labels()[i]).collect();
            let (grad, _) = model.backward(&batch, &targets, l2)?;
            sgd_step(&mut params, &grad, &mut velocity, config)?;
            model.load(&params)?;
        }
    }
    Ok(params)
}
