//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Hidden layers use a leaky rectifier; the last layer is affine (a logit
//! for the discriminator, a data point for the generator). Batches are
//! row-major `n x d` matrices and weights are stored `out x in`, so a layer
//! computes `X W^T + b`.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// One affine layer. Also used as the gradient and moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug)]
pub struct DenseNet {
    layers: Vec<Dense>,
    leaky_slope: f64,
    // identity and mutation counter, so stale or foreign caches are detectable
    id: u64,
    version: u64,
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), leaky_slope: self.leaky_slope, id: next_id(), version: 0 }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.leaky_slope == other.leaky_slope
    }
}

/// Activations kept from [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    // inputs[l] is the input of layer l; pre[l] its affine output
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    version: u64,
    net_id: u64,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    /// Which hidden pre-activations are positive, layer by layer. Two
    /// inputs with the same pattern lie on the same linear piece.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden].iter().flat_map(|p| p.iter().map(|&v| v > 0.0)).collect()
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Flattened view in layer order, weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied()).collect()
    }
}

impl DenseNet {
    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, leaky_slope: LEAKY_SLOPE, id: next_id(), version: 0 })
    }

    /// Parameters drawn uniformly from `[-scale, scale]`, biases included.
    pub fn uniform<R: Rng + ?Sized>(sizes: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let mut draw = || rng.random_range(-scale..=scale);
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weight: Array2::from_shape_fn((w[1], w[0]), |_| draw()),
                bias: Array1::from_shape_fn(w[1], |_| draw()),
            })
            .collect();
        Ok(Self { layers, leaky_slope: LEAKY_SLOPE, id: next_id(), version: 0 })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Self::from_layers(sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(), LEAKY_SLOPE)
    }

    pub fn from_layers(layers: Vec<Dense>, leaky_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape(format!("bias of length {} in layer {i}", l.fan_out()), l.bias.len()));
            }
            if !l.is_finite() {
                return Err(Error::Param(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::shape(
                    format!("layer {} input width {}", i + 1, pair[0].fan_out()),
                    pair[1].fan_in(),
                ));
            }
        }
        if !leaky_slope.is_finite() {
            return Err(Error::Param("leaky slope must be finite".into()));
        }
        Ok(Self { layers, leaky_slope, id: next_id(), version: 0 })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Dense::fan_out)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("batch width {}", self.input_dim()),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        Ok(())
    }

    /// Forward pass without retaining intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = affine(h.view(), layer);
            if i < last {
                leaky_in_place(&mut h, self.leaky_slope);
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(h.view(), layer);
            inputs.push(h);
            h = z.clone();
            if i < last {
                leaky_in_place(&mut h, self.leaky_slope);
            }
            pre.push(z);
        }
        let cache = ForwardCache { inputs, pre, version: self.version, net_id: self.id };
        Ok((h, cache))
    }

    /// Gradients of `sum(out_grad .* output)` with respect to parameters and input.
    pub fn backward(&self, cache: &ForwardCache, out_grad: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.net_id != self.id || cache.version != self.version || cache.pre.len() != self.layers.len() {
            return Err(Error::Usage("forward cache does not belong to the current parameters of this network".into()));
        }
        let n = cache.batch_size();
        if out_grad.dim() != (n, self.output_dim()) {
            return Err(Error::shape(
                format!("{}x{}", n, self.output_dim()),
                format!("{}x{}", out_grad.nrows(), out_grad.ncols()),
            ));
        }

        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = out_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i < last {
                let slope = self.leaky_slope;
                Zip::from(&mut g).and(&cache.pre[i]).for_each(|gv, &z| {
                    if z <= 0.0 {
                        *gv *= slope;
                    }
                });
            }
            let weight = g.t().dot(&cache.inputs[i]);
            let bias = g.sum_axis(Axis(0));
            g = g.dot(&layer.weight);
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(Dense::zeros_like).collect() }
    }

    /// Flattened parameters in the same order as [`Gradients::flatten`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied()).collect()
    }

    /// Adds `delta` to the flattened parameter at `index`.
    pub fn nudge_param(&mut self, index: usize, delta: f64) {
        let mut idx = index;
        for layer in self.layers_mut() {
            if idx < layer.weight.len() {
                let cols = layer.weight.ncols();
                layer.weight[[idx / cols, idx % cols]] += delta;
                return;
            }
            idx -= layer.weight.len();
            if idx < layer.bias.len() {
                layer.bias[idx] += delta;
                return;
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            leaky_slope: self.leaky_slope,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        let layers = ckpt
            .layers
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let weight = Array2::from_shape_vec((rec.fan_out, rec.fan_in), rec.weight.clone()).map_err(|_| {
                    Error::Data(format!(
                        "layer {i}: weight has {} values, header says {}x{}",
                        rec.weight.len(),
                        rec.fan_out,
                        rec.fan_in
                    ))
                })?;
                Ok(Dense { weight, bias: Array1::from(rec.bias.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, ckpt.leaky_slope).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(&ckpt)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Param(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

fn affine(x: ArrayView2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

fn leaky_in_place(h: &mut Array2<f64>, slope: f64) {
    h.mapv_inplace(|v| if v > 0.0 { v } else { slope * v });
}

pub const CHECKPOINT_FORMAT: &str = "diffgan-dense-v1";

/// JSON checkpoint: a format tag, the hidden-layer slope and, per layer,
/// its shape header followed by the row-major `fan_out x fan_in` weight
/// and the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub leaky_slope: f64,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Dense>,
    second: Vec<Dense>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        Self {
            config,
            first: net.layers.iter().map(Dense::zeros_like).collect(),
            second: net.layers.iter().map(Dense::zeros_like).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Dense] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Dense] {
        &self.second
    }

    /// One Adam update of `net` along `grads`.
    pub fn apply(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, p)| g.weight.dim() != p.weight.dim() || g.bias.len() != p.bias.len())
        {
            return Err(Error::shape(format!("gradients for {:?}", net.sizes()), "different layout"));
        }
        if self.first.len() != net.layers.len() {
            return Err(Error::Usage("optimizer state belongs to a different network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient passed to Adam".into()));
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (((param, m), v), g) in
            net.layers_mut().iter_mut().zip(&mut self.first).zip(&mut self.second).zip(&grads.layers)
        {
            Zip::from(&mut param.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut param.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

/// Appends the normalized timestep `t / t_max` to `y`.
pub fn cond_input(y: &[f64], t: usize, t_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len() + 1);
    out.extend_from_slice(y);
    out.push(t as f64 / t_max as f64);
    out
}

/// Row-wise [`cond_input`] for a batch.
pub fn cond_batch(ys: ArrayView2<f64>, ts: &[usize], t_max: usize) -> Result<Array2<f64>> {
    if ts.len() != ys.nrows() {
        return Err(Error::shape(format!("{} timesteps", ys.nrows()), ts.len()));
    }
    let d = ys.ncols();
    let mut out = Array2::zeros((ys.nrows(), d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(&ys);
    for (row, &t) in ts.iter().enumerate() {
        out[[row, d]] = t as f64 / t_max as f64;
    }
    Ok(out)
}
