//! Positioning network: an MLP with ReLU hidden layers and a softmax over
//! the digital-twin grid points, with hand-written reverse-mode gradients.

mod adam;
mod expect;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use expect::{expected_feature, expected_features, expected_position, expected_positions, DtDatabase, ProbVector};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn he_uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Dense {
        let limit = (6.0 / input as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Dense {
            weight: Array2::from_shape_simple_fn((input, output), || dist.sample(rng)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// The learnable map from CSI features to a probability vector over `P`
/// grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartModel {
    layers: Vec<Dense>,
    dropout: f64,
    generation: u64,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input of each layer (after dropout for hidden outputs).
    inputs: Vec<Array2<f64>>,
    /// `relu'(z) * dropout_scale` for each hidden layer.
    gates: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    /// Row-stochastic output, `batch x P`.
    pub probs: Array2<f64>,
}

/// Per-parameter gradient accumulators with the model's exact shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &ChartModel) -> Self {
        Self {
            layers: model.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

impl ChartModel {
    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, dropout: f64, rng: &mut R) -> Result<Self> {
        if input == 0 || output == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths.windows(2).map(|w| Dense::he_uniform(w[0], w[1], rng)).collect();
        Ok(Self {
            layers,
            dropout,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::Dimension(format!("layer {i}: bias length does not match weight columns")));
            }
            if i > 0 && layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::Dimension(format!("layer {i}: input width does not match previous output")));
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {dropout} outside [0, 1)")));
        }
        Ok(Self {
            layers,
            dropout,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    /// Swap the output layer for a fresh one with `output` units; hidden
    /// layers are kept.
    pub fn replace_output_layer<R: Rng + ?Sized>(&mut self, output: usize, rng: &mut R) {
        let last = self.layers.len() - 1;
        let input = self.layers[last].weight.nrows();
        self.layers[last] = Dense::he_uniform(input, output, rng);
        self.generation += 1;
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward_batch<R: Rng + ?Sized>(&self, x: ArrayView2<'_, f64>, mode: Mode, rng: &mut R) -> Result<ForwardCache> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "feature width {} does not match model input {}",
                x.ncols(),
                self.input_width()
            )));
        }
        let hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(hidden);
        let mut a = x.to_owned();
        let keep = 1.0 - self.dropout;
        for layer in &self.layers[..hidden] {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if mode == Mode::Training && self.dropout > 0.0 {
                let scale = 1.0 / keep;
                gate.mapv_inplace(|g| if rng.gen::<f64>() < keep { g * scale } else { 0.0 });
            }
            z *= &gate;
            inputs.push(std::mem::replace(&mut a, z));
            gates.push(gate);
        }
        let last = &self.layers[hidden];
        let mut logits = a.dot(&last.weight);
        logits += &last.bias;
        inputs.push(a);
        let probs = softmax_rows(&logits);
        Ok(ForwardCache {
            generation: self.generation,
            inputs,
            gates,
            logits,
            probs,
        })
    }

    /// Single-sample forward pass.
    pub fn forward<R: Rng + ?Sized>(&self, features: &[f64], mode: Mode, rng: &mut R) -> Result<(ProbVector, ForwardCache)> {
        let x = ArrayView2::from_shape((1, features.len()), features)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let cache = self.forward_batch(x, mode, rng)?;
        let p = ProbVector::new(cache.probs.row(0).to_vec())?;
        Ok((p, cache))
    }

    /// Inference-mode probabilities for every row of `x`.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        // dropout is off, the rng is never drawn from
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(self.forward_batch(x, Mode::Inference, &mut rng)?.probs)
    }

    /// Reverse-mode gradients of a scalar loss given `dL/dp` (`batch x P`).
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache {
                model: self.generation,
                cache: cache.generation,
            });
        }
        if upstream.dim() != cache.probs.dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                cache.probs.dim()
            )));
        }
        // softmax Jacobian: dz = p * (g - <g, p>)
        let inner = (&upstream * &cache.probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut dz = &cache.probs * &(&upstream - &inner);

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let weight = input.t().dot(&dz);
            let bias = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.layers[l].weight.t());
                da *= &cache.gates[l - 1];
                dz = da;
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Apply one Adam update to every parameter of `model`.
pub fn adam_step(model: &mut ChartModel, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.layers.len() != model.layers.len()
        || grads
            .layers
            .iter()
            .zip(&model.layers)
            .any(|(g, p)| g.weight.dim() != p.weight.dim() || g.bias.dim() != p.bias.dim())
    {
        return Err(Error::Dimension("gradient shapes do not match the model".into()));
    }
    for (i, g) in grads.layers.iter().enumerate() {
        if let Some(v) = g.weight.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: format!("layer{i}.weight"),
                value: *v,
            });
        }
        if let Some(v) = g.bias.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: format!("layer{i}.bias"),
                value: *v,
            });
        }
    }
    state.ensure_shapes(model);
    state.step += 1;
    let t = state.step;
    let cfg = state.config;
    for (i, (layer, g)) in model.layers.iter_mut().zip(&grads.layers).enumerate() {
        let (mw, vw) = state.moments_mut(2 * i);
        adam_update(
            layer.weight.as_slice_mut().expect("contiguous"),
            g.weight.as_slice().expect("contiguous"),
            mw,
            vw,
            t,
            lr,
            &cfg,
        );
        let (mb, vb) = state.moments_mut(2 * i + 1);
        adam_update(
            layer.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            mb,
            vb,
            t,
            lr,
            &cfg,
        );
    }
    model.generation += 1;
    Ok(())
}

/// Row-wise `dL/dp` from gradients with respect to the expected positions
/// (`batch x 2`) and expected features (`batch x D_v`).
pub fn chain_through_expectations(
    grad_pos: Option<ArrayView2<'_, f64>>,
    grad_feat: Option<ArrayView2<'_, f64>>,
    dt: &DtDatabase,
    batch: usize,
) -> Array2<f64> {
    let mut out = Array2::zeros((batch, dt.len()));
    if let Some(gp) = grad_pos {
        // x_hat = X p  =>  dL/dp = X^T dL/dx_hat
        out += &gp.dot(&dt.position_matrix());
    }
    if let Some(gv) = grad_feat {
        out += &gv.dot(&dt.features);
    }
    out
}
