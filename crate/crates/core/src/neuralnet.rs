//! Bias-free encoder-decoder MLP with leaky-ReLU activations, trained with
//! Adam on a mean-squared-error loss.
//!
//! Every layer is `h ← φ(W h)` with `φ(u) = u` for `u ≥ 0` and `slope · u`
//! otherwise, including the last decoder layer. Outputs are clamped at zero
//! only at inference time.
//!
//! Weight file layout (little-endian): magic `b"TSNW"`, version u32, layer
//! count u32, then per layer `rows: u64`, `cols: u64` and `rows · cols` f64
//! values in row-major order, and finally the leaky slope as f64.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TomoError};
use crate::simulator::{Dataset, ReflectivityProfile};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_LATENT: usize = 5;

const MAGIC: &[u8; 4] = b"TSNW";
const VERSION: u32 = 1;

/// Encoder widths `n_z → n_z/2 → n_z/8 → max(n_z/32, 2·latent) → latent`,
/// mirrored by the decoder. For 512 heights and latent 5 this is
/// 512→256→64→16→5→16→64→256→512.
pub fn default_layer_sizes(n_z: usize, latent: usize) -> Vec<usize> {
    let enc = [n_z, n_z / 2, n_z / 8, (n_z / 32).max(2 * latent), latent];
    enc.iter().chain(enc.iter().rev().skip(1)).copied().collect()
}

/// Checks the 4 + 4 layer mirrored encoder-decoder shape.
pub fn validate_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() != 9 {
        return Err(TomoError::invalid(format!(
            "encoder-decoder needs 9 layer sizes (4 + 4 layers), got {}",
            sizes.len()
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(TomoError::invalid("layer sizes must be positive"));
    }
    if !sizes[..5].windows(2).all(|w| w[0] > w[1]) {
        return Err(TomoError::invalid(format!("encoder sizes must strictly decrease: {sizes:?}")));
    }
    if (0..9).any(|i| sizes[i] != sizes[8 - i]) {
        return Err(TomoError::invalid(format!("decoder must mirror encoder: {sizes:?}")));
    }
    Ok(())
}

#[inline]
fn leaky(u: f64, slope: f64) -> f64 {
    if u >= 0.0 {
        u
    } else {
        slope * u
    }
}

/// Derivative of the activation; at `u = 0` the slope is used.
#[inline]
fn leaky_grad(u: f64, slope: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        slope
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    /// `layers[k]` has shape `(out_k, in_k)`.
    layers: Vec<Array2<f64>>,
    leaky_slope: f64,
}

impl NetworkWeights {
    /// Arbitrary chain of bias-free layers (used for small test networks).
    pub fn from_layers(layers: Vec<Array2<f64>>, leaky_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(TomoError::invalid("network needs at least one layer"));
        }
        for (k, w) in layers.windows(2).enumerate() {
            if w[1].ncols() != w[0].nrows() {
                return Err(TomoError::dim(format!(
                    "layer {} expects {} inputs but layer {k} produces {}",
                    k + 1,
                    w[1].ncols(),
                    w[0].nrows()
                )));
            }
        }
        if !(leaky_slope >= 0.0 && leaky_slope.is_finite()) {
            return Err(TomoError::invalid("leaky slope must be a nonnegative number"));
        }
        if layers.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(TomoError::invalid("weights must be finite"));
        }
        Ok(NetworkWeights { layers, leaky_slope })
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.layers
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].ncols())
            .chain(self.layers.iter().map(|w| w.nrows()))
            .collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("nonempty").nrows()
    }

    /// Smallest layer width.
    pub fn latent_size(&self) -> usize {
        self.layer_sizes().into_iter().min().expect("nonempty")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|w| w.len()).sum()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.nrows() as u64).to_le_bytes())?;
            w.write_all(&(layer.ncols() as u64).to_le_bytes())?;
            for row in layer.rows() {
                for v in row {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.write_all(&self.leaky_slope.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        let fmt = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                TomoError::Format("weight file truncated".into())
            } else {
                TomoError::Io(e)
            }
        };
        r.read_exact(&mut buf4).map_err(fmt)?;
        if &buf4 != MAGIC {
            return Err(TomoError::Format("not a weight file (bad magic)".into()));
        }
        r.read_exact(&mut buf4).map_err(fmt)?;
        let version = u32::from_le_bytes(buf4);
        if version != VERSION {
            return Err(TomoError::Format(format!("unsupported weight file version {version}")));
        }
        r.read_exact(&mut buf4).map_err(fmt)?;
        let count = u32::from_le_bytes(buf4) as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf8).map_err(fmt)?;
            let rows = u64::from_le_bytes(buf8) as usize;
            r.read_exact(&mut buf8).map_err(fmt)?;
            let cols = u64::from_le_bytes(buf8) as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&n| n <= 1 << 28)
                .ok_or_else(|| TomoError::Format("implausible layer dimensions".into()))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut buf8).map_err(fmt)?;
                data.push(f64::from_le_bytes(buf8));
            }
            layers.push(Array2::from_shape_vec((rows, cols), data).expect("length checked"));
        }
        r.read_exact(&mut buf8).map_err(fmt)?;
        let slope = f64::from_le_bytes(buf8);
        NetworkWeights::from_layers(layers, slope).map_err(|e| TomoError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path).map_err(|e| {
            TomoError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?)
    }
}

/// Uniform init on `±√(6 / (fan_in · (1 + slope²)))`.
pub fn init_network(layer_sizes: &[usize], leaky_slope: f64, seed: u64) -> Result<NetworkWeights> {
    validate_layer_sizes(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in as f64 * (1.0 + leaky_slope * leaky_slope))).sqrt();
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound))
        })
        .collect();
    NetworkWeights::from_layers(layers, leaky_slope)
}

/// Per-layer inputs and pre-activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn check_input_width(weights: &NetworkWeights, width: usize) -> Result<()> {
    if width != weights.n_inputs() {
        return Err(TomoError::dim(format!(
            "network expects {} inputs, got {width}",
            weights.n_inputs()
        )));
    }
    Ok(())
}

/// Batched forward pass; rows of `x` are examples.
pub fn forward_batch(weights: &NetworkWeights, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    check_input_width(weights, x.ncols())?;
    let slope = weights.leaky_slope;
    let mut inputs = Vec::with_capacity(weights.layers.len());
    let mut preacts = Vec::with_capacity(weights.layers.len());
    let mut h = x.to_owned();
    for w in &weights.layers {
        let u = h.dot(&w.t());
        let next = u.mapv(|v| leaky(v, slope));
        inputs.push(h);
        preacts.push(u);
        h = next;
    }
    Ok((
        h.clone(),
        ForwardCache {
            inputs,
            preacts,
            output: h,
        },
    ))
}

/// Single-example forward pass.
pub fn forward(weights: &NetworkWeights, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let xb = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (out, cache) = forward_batch(weights, xb)?;
    Ok((out.row(0).to_vec(), cache))
}

/// Forward pass without caches.
pub fn infer_batch(weights: &NetworkWeights, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input_width(weights, x.ncols())?;
    let slope = weights.leaky_slope;
    let mut h = x.dot(&weights.layers[0].t());
    h.mapv_inplace(|v| leaky(v, slope));
    for w in &weights.layers[1..] {
        h = h.dot(&w.t());
        h.mapv_inplace(|v| leaky(v, slope));
    }
    Ok(h)
}

/// Mean of squared differences over every entry.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "prediction/target shape mismatch");
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    Zip::from(&pred)
        .and(&target)
        .fold(0.0, |acc, p, t| acc + (p - t) * (p - t))
        / n as f64
}

pub fn mse_loss_vec(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "prediction/target length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

/// Gradients of [`mse_loss`] with respect to every layer.
pub fn backward(weights: &NetworkWeights, cache: &ForwardCache, target: ArrayView2<f64>) -> Vec<Array2<f64>> {
    assert_eq!(cache.output.dim(), target.dim(), "target shape mismatch");
    let slope = weights.leaky_slope;
    let scale = 2.0 / cache.output.len() as f64;
    let mut grad_h = (&cache.output - &target) * scale;
    let mut grads = vec![Array2::zeros((0, 0)); weights.layers.len()];
    for k in (0..weights.layers.len()).rev() {
        Zip::from(&mut grad_h)
            .and(&cache.preacts[k])
            .for_each(|g, &u| *g *= leaky_grad(u, slope));
        grads[k] = grad_h.t().dot(&cache.inputs[k]);
        if k > 0 {
            grad_h = grad_h.dot(&weights.layers[k]);
        }
    }
    grads
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(weights: &NetworkWeights) -> Self {
        Self::with_moments(weights, 0.9, 0.999, 1e-8)
    }

    pub fn with_moments(weights: &NetworkWeights, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<_> = weights.layers.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(weights: &mut NetworkWeights, grads: &[Array2<f64>], state: &mut AdamState, lr: f64) {
    assert_eq!(grads.len(), weights.layers.len(), "one gradient per layer");
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (k, w) in weights.layers.iter_mut().enumerate() {
        Zip::from(w)
            .and(&grads[k])
            .and(&mut state.m[k])
            .and(&mut state.v[k])
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset used for training; the rest is validation.
    pub split: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            split: 0.75,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TomoError::invalid("epochs and batch size must be at least 1"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(TomoError::invalid("training split must lie strictly between 0 and 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TomoError::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(TomoError::invalid("invalid Adam moment parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub leaky_slope: f64,
}

impl Architecture {
    pub fn default_for(n_z: usize, latent: usize) -> Self {
        Architecture {
            layer_sizes: default_layer_sizes(n_z, latent),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

impl LossHistory {
    pub fn final_validation(&self) -> Option<f64> {
        self.validation.last().copied()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "epoch,train_mse,validation_mse")?;
        for (e, (t, v)) in self.train.iter().zip(&self.validation).enumerate() {
            writeln!(w, "{},{t:e},{v:e}", e + 1)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stacks the selected examples into (inputs, targets) matrices.
pub fn gather(dataset: &Dataset, indices: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let n_z = dataset.n_z;
    let mut x = Array2::zeros((indices.len(), n_z));
    let mut t = Array2::zeros((indices.len(), n_z));
    for (row, &i) in indices.iter().enumerate() {
        let ex = &dataset.examples[i];
        x.row_mut(row).assign(&Array1::from(ex.input.clone()));
        t.row_mut(row).assign(&Array1::from(ex.target.clone()));
    }
    (x, t)
}

/// Mean squared error of the network over a stacked set, evaluated in chunks.
pub fn evaluate_mse(weights: &NetworkWeights, x: ArrayView2<f64>, t: ArrayView2<f64>) -> Result<f64> {
    let mut sum = 0.0;
    let chunk = 512;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let pred = infer_batch(weights, x.slice(s![start..end, ..]))?;
        sum += mse_loss(pred.view(), t.slice(s![start..end, ..])) * pred.len() as f64;
        start = end;
    }
    Ok(sum / (x.nrows() * x.ncols()).max(1) as f64)
}

/// Trains from a fresh initialization seeded by `config.seed`. The
/// train/validation split comes from the dataset seed, so every run on the
/// same dataset sees the same validation set.
pub fn train(dataset: &Dataset, arch: &Architecture, config: &TrainingConfig) -> Result<(NetworkWeights, LossHistory)> {
    config.validate()?;
    if arch.layer_sizes.first() != Some(&dataset.n_z) || arch.layer_sizes.last() != Some(&dataset.n_z) {
        return Err(TomoError::dim(format!(
            "architecture {:?} does not match {} heights",
            arch.layer_sizes, dataset.n_z
        )));
    }
    let (train_idx, val_idx) = dataset.split(config.split);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(TomoError::invalid(format!(
            "split {} of {} examples leaves an empty training or validation set",
            config.split,
            dataset.len()
        )));
    }
    let weights = init_network(&arch.layer_sizes, arch.leaky_slope, config.seed)?;
    let (x_train, t_train) = gather(dataset, &train_idx);
    let (x_val, t_val) = gather(dataset, &val_idx);
    train_on(weights, x_train.view(), t_train.view(), x_val.view(), t_val.view(), config)
}

/// Training loop on pre-stacked matrices.
pub fn train_on(
    mut weights: NetworkWeights,
    x_train: ArrayView2<f64>,
    t_train: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    t_val: ArrayView2<f64>,
    config: &TrainingConfig,
) -> Result<(NetworkWeights, LossHistory)> {
    config.validate()?;
    let mut state = AdamState::with_moments(&weights, config.beta1, config.beta2, config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    let mut history = LossHistory::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let tb = t_train.select(Axis(0), batch);
            let (pred, cache) = forward_batch(&weights, xb.view())?;
            let loss = mse_loss(pred.view(), tb.view());
            if !loss.is_finite() {
                return Err(TomoError::numerical(format!("training loss became {loss} in epoch {}", epoch + 1)));
            }
            sum += loss * batch.len() as f64;
            let grads = backward(&weights, &cache, tb.view());
            adam_step(&mut weights, &grads, &mut state, config.learning_rate);
        }
        let train_mse = sum / order.len() as f64;
        let val_mse = if x_val.nrows() > 0 {
            evaluate_mse(&weights, x_val, t_val)?
        } else {
            f64::NAN
        };
        if !train_mse.is_finite() || (x_val.nrows() > 0 && !val_mse.is_finite()) {
            return Err(TomoError::numerical(format!("loss became non-finite in epoch {}", epoch + 1)));
        }
        history.train.push(train_mse);
        history.validation.push(val_mse);
    }
    Ok((weights, history))
}

/// Network output clamped at zero and rescaled by `Tr(Σ̂)/N`.
pub fn predict_profile(weights: &NetworkWeights, input: &[f64], trace_scale: f64) -> Result<ReflectivityProfile> {
    if !(trace_scale > 0.0 && trace_scale.is_finite()) {
        return Err(TomoError::invalid(format!("trace scale must be positive, got {trace_scale}")));
    }
    let xb = ArrayView2::from_shape((1, input.len()), input).map_err(|e| TomoError::dim(e.to_string()))?;
    let out = infer_batch(weights, xb)?;
    ReflectivityProfile::new(out.iter().map(|v| v.max(0.0) * trace_scale).collect())
}
