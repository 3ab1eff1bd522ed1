//! Small dense network core: residual MLPs in 64-bit floats with analytic
//! backpropagation, a central finite-difference checker, Adam, and a binary
//! checkpoint format.
//!
//! A `ResidualMlp` is
//!
//! ```text
//! h0 = act(x W0 + b0)
//! h_{k+1} = h_k + act(act(h_k W1 + b1) W2 + b2)      (block_count times)
//! y  = h_last Wout + bout
//! ```
//!
//! and a `Linear` network is the single affine map `y = x W + b`.
//!
//! # Checkpoint format
//!
//! One line of JSON (the header) terminated by `\n`:
//! `{"format_version":1,"spec":{..},"frozen":bool,"param_count":N,"meta":{..}}`,
//! then `N` little-endian `f64` values. Parameters are laid out layer by
//! layer (stem, then each block's two layers, then the output head); within
//! a layer the weight matrix comes first in row-major `(fan_in, fan_out)`
//! order, followed by the bias.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| if v < 0.0 { 0.0 } else { v }),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiplies `grad` in place by the derivative at `z`.
    fn backprop(self, z: &Array2<f64>, grad: &mut Array2<f64>) {
        if self == Activation::Relu {
            Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    ResidualMlp,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Ignored by `Linear` networks.
    pub hidden_dim: usize,
    pub block_count: usize,
    pub activation: Activation,
    pub layout: Layout,
}

impl NetSpec {
    pub fn residual(
        input_dim: usize,
        output_dim: usize,
        hidden_dim: usize,
        block_count: usize,
    ) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_dim,
            block_count,
            activation: Activation::Relu,
            layout: Layout::ResidualMlp,
        }
    }

    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_dim: 0,
            block_count: 0,
            activation: Activation::Identity,
            layout: Layout::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let hidden_ok = self.layout == Layout::Linear || self.hidden_dim >= 1;
        if self.input_dim == 0 || self.output_dim == 0 || !hidden_ok {
            return Err(Error::Config(format!(
                "network dimensions must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each dense layer in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match self.layout {
            Layout::Linear => vec![(self.input_dim, self.output_dim)],
            Layout::ResidualMlp => {
                let h = self.hidden_dim;
                let mut shapes = vec![(self.input_dim, h)];
                shapes.extend(std::iter::repeat_n((h, h), 2 * self.block_count));
                shapes.push((h, self.output_dim));
                shapes
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(fan_in, fan_out)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Per-parameter gradients, shaped like a network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self {
            layers: spec
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Dense::values)
            .copied()
            .collect()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetSpec,
    layers: Vec<Dense>,
    frozen: bool,
}

/// Intermediate values kept from a forward pass for backpropagation.
struct Trace {
    /// Input of every dense layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of every dense layer except the head.
    preacts: Vec<Array2<f64>>,
}

impl Network {
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self {
            spec,
            layers,
            frozen: false,
        })
    }

    /// He-style uniform init, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn init(spec: NetSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = rng::keyed(seed, Stream::Init, 0, 0);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.weight.nrows() as f64).sqrt();
            layer
                .weight
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn from_params(spec: NetSpec, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count(),
                found: params.len(),
            });
        }
        net.values_mut().zip(params).for_each(|(p, v)| *p = *v);
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Dense::values)
            .copied()
            .collect()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::values_mut)
    }

    /// Mutable parameter access for checkers and tests; refuses frozen networks.
    pub fn params_mut(&mut self) -> Result<impl Iterator<Item = &mut f64>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(self.values_mut())
    }

    /// Parameter `index` in checkpoint order.
    fn param_at(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let w = layer.weight.len();
            if index < w {
                return &mut layer.weight.as_slice_mut().expect("standard layout")[index];
            }
            index -= w;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                found: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Row-wise forward pass over a `(batch, input_dim)` matrix.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let act = self.spec.activation;
        let (head, body) = self.layers.split_last().expect("at least one layer");
        let Some((stem, blocks)) = body.split_first() else {
            return Ok(head.apply(&x));
        };
        let mut h = act.apply(&stem.apply(&x));
        for pair in blocks.chunks_exact(2) {
            let a1 = act.apply(&pair[0].apply(&h.view()));
            h += &act.apply(&pair[1].apply(&a1.view()));
        }
        Ok(head.apply(&h.view()))
    }

    fn forward_traced(&self, x: ArrayView2<f64>) -> (Array2<f64>, Trace) {
        let act = self.spec.activation;
        let mut trace = Trace {
            inputs: Vec::new(),
            preacts: Vec::new(),
        };
        let (head, body) = self.layers.split_last().expect("at least one layer");
        let mut h = x.to_owned();
        if let Some((stem, blocks)) = body.split_first() {
            let z0 = stem.apply(&h.view());
            trace.inputs.push(h);
            h = act.apply(&z0);
            trace.preacts.push(z0);
            for pair in blocks.chunks_exact(2) {
                let z1 = pair[0].apply(&h.view());
                let a1 = act.apply(&z1);
                let z2 = pair[1].apply(&a1.view());
                let next = &h + &act.apply(&z2);
                trace.inputs.push(std::mem::replace(&mut h, next));
                trace.inputs.push(a1);
                trace.preacts.push(z1);
                trace.preacts.push(z2);
            }
        }
        let y = head.apply(&h.view());
        trace.inputs.push(h);
        (y, trace)
    }

    /// Gradients of `sum(output * upstream)` over a batch, plus the gradient
    /// with respect to the input rows.
    pub fn backward_batch(
        &self,
        x: ArrayView2<f64>,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.check_input(x.ncols())?;
        if upstream.ncols() != self.spec.output_dim || upstream.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.output_dim,
                found: upstream.ncols(),
            });
        }
        let (_, trace) = self.forward_traced(x);
        Ok(self.backward_traced(&trace, upstream.to_owned()))
    }

    fn backward_traced(&self, trace: &Trace, upstream: Array2<f64>) -> (Gradients, Array2<f64>) {
        let act = self.spec.activation;
        let n = self.layers.len();
        let mut grads = Gradients::zeros(&self.spec);
        let fill = |g: &mut Dense, input: &Array2<f64>, delta: &Array2<f64>| {
            g.weight = input.t().dot(delta);
            g.bias = delta.sum_axis(Axis(0));
        };

        fill(&mut grads.layers[n - 1], &trace.inputs[n - 1], &upstream);
        let mut dh = upstream.dot(&self.layers[n - 1].weight.t());
        if n == 1 {
            return (grads, dh);
        }
        let blocks = (n - 2) / 2;
        for b in (0..blocks).rev() {
            let (l1, l2) = (1 + 2 * b, 2 + 2 * b);
            let mut dz2 = dh.clone();
            act.backprop(&trace.preacts[l2], &mut dz2);
            fill(&mut grads.layers[l2], &trace.inputs[l2], &dz2);
            let mut dz1 = dz2.dot(&self.layers[l2].weight.t());
            act.backprop(&trace.preacts[l1], &mut dz1);
            fill(&mut grads.layers[l1], &trace.inputs[l1], &dz1);
            dh += &dz1.dot(&self.layers[l1].weight.t());
        }
        act.backprop(&trace.preacts[0], &mut dh);
        fill(&mut grads.layers[0], &trace.inputs[0], &dh);
        let dx = dh.dot(&self.layers[0].weight.t());
        (grads, dx)
    }

    /// Single-sample gradients of `output · upstream_grad` w.r.t. every parameter.
    pub fn backward(&self, input: &[f64], upstream_grad: &[f64]) -> Result<Gradients> {
        if upstream_grad.len() != self.spec.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.output_dim,
                found: upstream_grad.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let g = ArrayView2::from_shape((1, upstream_grad.len()), upstream_grad).expect("row view");
        Ok(self.backward_batch(x, g)?.0)
    }

    /// Smallest |pre-activation| over all rectified units for one input.
    pub fn min_kink_distance(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let (_, trace) = self.forward_traced(x);
        Ok(trace
            .preacts
            .iter()
            .flat_map(|z| z.iter())
            .map(|z| z.abs())
            .fold(f64::INFINITY, f64::min))
    }

    /// Folds `x_norm = (x - mean) / scale` into the first layer so the network
    /// accepts raw inputs.
    pub fn fold_input_normalization(&mut self, mean: &[f64], scale: &[f64]) -> Result<()> {
        self.check_input(mean.len())?;
        self.check_input(scale.len())?;
        let first = &mut self.layers[0];
        for (i, mut row) in first.weight.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|w| w / scale[i]);
            first.bias.scaled_add(-mean[i], &row);
        }
        Ok(())
    }

    /// Folds `y = y_net * scale + offset` into the output head.
    pub fn fold_output_affine(&mut self, scale: f64, offset: &[f64]) -> Result<()> {
        if offset.len() != self.spec.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.output_dim,
                found: offset.len(),
            });
        }
        let head = self.layers.last_mut().expect("at least one layer");
        head.weight.mapv_inplace(|w| w * scale);
        head.bias
            .iter_mut()
            .zip(offset)
            .for_each(|(b, o)| *b = *b * scale + o);
        Ok(())
    }
}

/// Scalar training objectives over a network's output.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `output · weights`.
    Dot(Vec<f64>),
    /// Mean squared error against a target.
    Mse(Vec<f64>),
    /// Mean absolute error against a target.
    L1(Vec<f64>),
}

impl Loss {
    pub fn value(&self, output: &[f64]) -> f64 {
        match self {
            Loss::Dot(w) => output.iter().zip(w).map(|(o, w)| o * w).sum(),
            Loss::Mse(t) => {
                output
                    .iter()
                    .zip(t)
                    .map(|(o, x)| (o - x).powi(2))
                    .sum::<f64>()
                    / t.len() as f64
            }
            Loss::L1(t) => {
                output
                    .iter()
                    .zip(t)
                    .map(|(o, x)| (o - x).abs())
                    .sum::<f64>()
                    / t.len() as f64
            }
        }
    }

    pub fn gradient(&self, output: &[f64]) -> Vec<f64> {
        match self {
            Loss::Dot(w) => w.clone(),
            Loss::Mse(t) => output
                .iter()
                .zip(t)
                .map(|(o, x)| 2.0 * (o - x) / t.len() as f64)
                .collect(),
            Loss::L1(t) => output
                .iter()
                .zip(t)
                .map(|(o, x)| sign(o - x) / t.len() as f64)
                .collect(),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central finite-difference estimate of d loss / d parameter for every parameter.
pub fn numeric_gradient(net: &Network, input: &[f64], loss: &Loss, step: f64) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..net.param_count()).collect();
    numeric_gradient_at(net, input, loss, step, &all)
}

/// Central finite-difference estimate for the parameters at `indices` (flat order).
pub fn numeric_gradient_at(
    net: &Network,
    input: &[f64],
    loss: &Loss,
    step: f64,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    probe.frozen = false;
    let n = probe.param_count();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "parameter index {i} out of range {n}"
            )));
        }
        let base = *probe.param_at(i);
        let (up, down) = (base + step, base - step);
        *probe.param_at(i) = up;
        let f_up = loss.value(&probe.forward(input)?);
        *probe.param_at(i) = down;
        let f_down = loss.value(&probe.forward(input)?);
        *probe.param_at(i) = base;
        out.push((f_up - f_down) / (up - down));
    }
    Ok(out)
}

/// Output and ReLU on/off pattern for one input row.
fn probe_row(net: &Network, input: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    net.check_input(input.len())?;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    let (y, trace) = net.forward_traced(x);
    let pattern = match net.spec.activation {
        Activation::Relu => trace
            .preacts
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0))
            .collect(),
        Activation::Identity => Vec::new(),
    };
    Ok((y.into_raw_vec_and_offset().0, pattern))
}

/// Central differences that never straddle a ReLU kink. For each parameter
/// the step starts at `max_step` and shrinks tenfold while either probe flips
/// an activation; `None` marks a parameter with no kink-free step down to
/// `min_step`. Within one activation pattern the network is affine in any
/// single parameter, so the estimate carries only rounding error.
pub fn kink_free_numeric_gradient(
    net: &Network,
    input: &[f64],
    loss: &Loss,
    indices: &[usize],
    max_step: f64,
    min_step: f64,
) -> Result<Vec<Option<f64>>> {
    let (_, base_pattern) = probe_row(net, input)?;
    let mut probe = net.clone();
    probe.frozen = false;
    let n = probe.param_count();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "parameter index {i} out of range {n}"
            )));
        }
        let base = *probe.param_at(i);
        let mut step = max_step;
        let mut estimate = None;
        while step >= min_step {
            let (up, down) = (base + step, base - step);
            *probe.param_at(i) = up;
            let (y_up, p_up) = probe_row(&probe, input)?;
            *probe.param_at(i) = down;
            let (y_down, p_down) = probe_row(&probe, input)?;
            *probe.param_at(i) = base;
            if p_up == base_pattern && p_down == base_pattern {
                estimate = Some((loss.value(&y_up) - loss.value(&y_down)) / (up - down));
                break;
            }
            step /= 10.0;
        }
        out.push(estimate);
    }
    Ok(out)
}

/// Max relative error between analytic and central-difference gradients of `loss`.
pub fn grad_check(net: &Network, input: &[f64], loss: &Loss, step: f64) -> Result<f64> {
    let output = net.forward(input)?;
    let analytic = net.backward(input, &loss.gradient(&output))?.flat();
    grad_check_against(net, input, loss, step, &analytic)
}

/// Like [`grad_check`] but compares against caller-supplied analytic gradients.
pub fn grad_check_against(
    net: &Network,
    input: &[f64],
    loss: &Loss,
    step: f64,
    analytic: &[f64],
) -> Result<f64> {
    let numeric = numeric_gradient(net, input, loss, step)?;
    if analytic.len() != numeric.len() {
        return Err(Error::DimensionMismatch {
            expected: numeric.len(),
            found: analytic.len(),
        });
    }
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl OptimizerState {
    pub fn adam(spec: &NetSpec, learning_rate: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Gradients::zeros(spec),
            second_moment: Gradients::zeros(spec),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut OptimizerState, net: &mut Network, grads: &Gradients) -> Result<()> {
    if net.frozen {
        return Err(Error::Frozen);
    }
    if grads.layers.len() != net.layers.len()
        || grads
            .layers
            .iter()
            .zip(&net.layers)
            .any(|(g, l)| g.weight.dim() != l.weight.dim())
    {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            found: grads.flat().len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.learning_rate, state.epsilon);
    let params = net.layers.iter_mut().flat_map(Dense::values_mut);
    let gs = grads.layers.iter().flat_map(Dense::values);
    let ms = state
        .first_moment
        .layers
        .iter_mut()
        .flat_map(Dense::values_mut);
    let vs = state
        .second_moment
        .layers
        .iter_mut()
        .flat_map(Dense::values_mut);
    for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    L1,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by `decay_factor` from this epoch on.
    pub decay_epoch: Option<usize>,
    pub decay_factor: f64,
    pub seed: u64,
}

/// Mini-batch Adam on `(inputs, targets)` rows; returns the mean loss of each epoch.
///
/// Loss reduction is the mean over every coordinate of the batch.
pub fn fit(
    net: &mut Network,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    objective: Objective,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if inputs.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            expected: inputs.nrows(),
            found: targets.nrows(),
        });
    }
    net.check_input(inputs.ncols())?;
    if targets.ncols() != net.spec.output_dim {
        return Err(Error::DimensionMismatch {
            expected: net.spec.output_dim,
            found: targets.ncols(),
        });
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut opt = OptimizerState::adam(&net.spec, config.learning_rate);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.decay_epoch == Some(epoch) {
            opt.learning_rate *= config.decay_factor;
        }
        order.shuffle(&mut rng::keyed(
            config.seed,
            Stream::Shuffle,
            epoch as u64,
            0,
        ));
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = inputs.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let (pred, trace) = net.forward_traced(x.view());
            let diff = pred - &y;
            let count = diff.len() as f64;
            let (loss, upstream) = match objective {
                Objective::L1 => (
                    diff.mapv(f64::abs).sum() / count,
                    diff.mapv(|d| sign(d) / count),
                ),
                Objective::Mse => (
                    diff.mapv(|d| d * d).sum() / count,
                    diff.mapv(|d| 2.0 * d / count),
                ),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            let (grads, _) = net.backward_traced(&trace, upstream);
            adam_step(&mut opt, net, &grads)?;
        }
        history.push(total / inputs.nrows() as f64);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    spec: NetSpec,
    frozen: bool,
    param_count: usize,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Serializes a network and free-form metadata into checkpoint bytes.
pub fn encode_checkpoint(net: &Network, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        spec: net.spec,
        frozen: net.frozen,
        param_count: net.param_count(),
        meta: meta.clone(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.reserve(8 * net.param_count());
    for v in net.layers.iter().flat_map(Dense::values) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, BTreeMap<String, String>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
            header.format_version
        )));
    }
    header
        .spec
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.param_count != header.spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters but spec implies {}",
            header.param_count,
            header.spec.param_count()
        )));
    }
    let body = &bytes[newline + 1..];
    if body.len() != 8 * header.param_count {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * header.param_count,
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut net = Network::from_params(header.spec, &params)?;
    net.frozen = header.frozen;
    Ok((net, header.meta))
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    save_checkpoint_with_meta(net, &BTreeMap::new(), path)
}

pub fn save_checkpoint_with_meta(
    net: &Network,
    meta: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    crate::io::write_atomic(path, &encode_checkpoint(net, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    load_checkpoint_with_meta(path).map(|(net, _)| net)
}

pub fn load_checkpoint_with_meta(path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
