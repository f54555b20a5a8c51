//! The quantized MLP itself: ReLU hidden layers, softmax cross-entropy
//! output, weights stored as integer codes times a per-layer alpha.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SmgdError};
use crate::rng::substream;

/// Row work threshold below which the parallel matmul paths fall back to
/// plain loops (rayon overhead dominates tiny layers).
const PAR_WORK_THRESHOLD: usize = 1 << 16;

/// Real-valued view of the network: plain f64 weights, same architecture.
/// Forward/backward live here; the quantized net delegates after decoding,
/// and the full-precision SGD baseline uses it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMlp {
    pub layer_dims: Vec<usize>,
    /// weights[l] is layer_dims[l+1] x layer_dims[l], row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations recorded by a forward pass: `activations[0]` is the input
/// batch, `activations[L]` the logits. ReLU derivative is recovered from
/// the sign of the stored hidden activations.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub n: usize,
    pub activations: Vec<Vec<f64>>,
}

/// Per-layer gradient of the mean cross-entropy with respect to the
/// real-valued weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradient {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn affine(
    weights: &[f64],
    biases: &[f64],
    input: &[f64],
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let n = input.len() / in_dim;
    let mut out = vec![0.0; n * out_dim];
    let body = |(row_out, x): (&mut [f64], &[f64])| {
        for (o, slot) in row_out.iter_mut().enumerate() {
            let wrow = &weights[o * in_dim..(o + 1) * in_dim];
            *slot = biases[o] + wrow.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    };
    if n * in_dim * out_dim >= PAR_WORK_THRESHOLD {
        out.par_chunks_mut(out_dim)
            .zip(input.par_chunks(in_dim))
            .for_each(body);
    } else {
        out.chunks_mut(out_dim).zip(input.chunks(in_dim)).for_each(body);
    }
    out
}

/// Stable softmax cross-entropy: returns the mean loss and the logit
/// gradient `(softmax - onehot) / n`.
fn softmax_cross_entropy(logits: &[f64], labels: &[u32], k: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut delta = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits[s * k..(s + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &v in row {
            z += (v - max).exp();
        }
        loss += z.ln() + max - row[label as usize];
        let d = &mut delta[s * k..(s + 1) * k];
        for (i, &v) in row.iter().enumerate() {
            d[i] = (v - max).exp() / z / n as f64;
        }
        d[label as usize] -= 1.0 / n as f64;
    }
    (loss / n as f64, delta)
}

impl RealMlp {
    pub fn zeros(layer_dims: Vec<usize>) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let weights = (0..layer_dims.len() - 1)
            .map(|l| vec![0.0; layer_dims[l + 1] * layer_dims[l]])
            .collect();
        let biases = (1..layer_dims.len()).map(|l| vec![0.0; layer_dims[l]]).collect();
        Ok(Self { layer_dims, weights, biases })
    }

    /// He-style uniform init on the real weights (for the SGD baseline).
    pub fn he_init(layer_dims: Vec<usize>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_dims)?;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let mut rng = substream(seed, l as u64, 8);
            let bound = (6.0 / net.layer_dims[l] as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn forward(&self, batch: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let in_dim = self.layer_dims[0];
        if batch.is_empty() || batch.len() % in_dim != 0 {
            return Err(SmgdError::DimensionMismatch {
                expected: in_dim,
                got: batch.len(),
            });
        }
        let n = batch.len() / in_dim;
        let mut activations = vec![batch.to_vec()];
        let layers = self.num_layers();
        for l in 0..layers {
            let mut z = affine(
                &self.weights[l],
                &self.biases[l],
                &activations[l],
                self.layer_dims[l],
                self.layer_dims[l + 1],
            );
            if let Some(i) = z.iter().position(|v| !v.is_finite()) {
                return Err(SmgdError::NonFinite {
                    context: format!("layer {l} pre-activation"),
                    index: i,
                });
            }
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let logits = activations.last().unwrap().clone();
        Ok((logits, ForwardCache { n, activations }))
    }

    /// Mean cross-entropy over the batch plus its exact gradient; the
    /// gradient of a size-k batch is the mean of the k per-sample
    /// gradients, i.e. the mini-batch estimator fed to SMGD.
    pub fn backward(&self, cache: &ForwardCache, labels: &[u32]) -> Result<(f64, MlpGradient)> {
        if labels.len() != cache.n {
            return Err(SmgdError::DimensionMismatch {
                expected: cache.n,
                got: labels.len(),
            });
        }
        let layers = self.num_layers();
        let k = self.layer_dims[layers];
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= k) {
            return Err(SmgdError::InvalidArgument(format!(
                "label {l} out of range for {k} outputs"
            )));
        }
        let logits = &cache.activations[layers];
        let (loss, mut delta) = softmax_cross_entropy(logits, labels, k);

        let mut grad = MlpGradient {
            weights: Vec::with_capacity(layers),
            biases: Vec::with_capacity(layers),
        };
        for l in (0..layers).rev() {
            let in_dim = self.layer_dims[l];
            let out_dim = self.layer_dims[l + 1];
            let prev = &cache.activations[l];

            // dW[o][j] = sum_s delta[s][o] * prev[s][j]; rows independent,
            // so the parallel path is still a fixed-order reduction.
            let mut dw = vec![0.0; out_dim * in_dim];
            let body = |(o, row): (usize, &mut [f64])| {
                for s in 0..cache.n {
                    let d = delta[s * out_dim + o];
                    if d != 0.0 {
                        let x = &prev[s * in_dim..(s + 1) * in_dim];
                        for (slot, &v) in row.iter_mut().zip(x) {
                            *slot += d * v;
                        }
                    }
                }
            };
            if cache.n * in_dim * out_dim >= PAR_WORK_THRESHOLD {
                dw.par_chunks_mut(in_dim).enumerate().for_each(body);
            } else {
                dw.chunks_mut(in_dim).enumerate().for_each(body);
            }
            let mut db = vec![0.0; out_dim];
            for s in 0..cache.n {
                for (slot, &d) in db.iter_mut().zip(&delta[s * out_dim..(s + 1) * out_dim]) {
                    *slot += d;
                }
            }

            if l > 0 {
                let w = &self.weights[l];
                let mut prev_delta = vec![0.0; cache.n * in_dim];
                let body = |(s, row): (usize, &mut [f64])| {
                    let d = &delta[s * out_dim..(s + 1) * out_dim];
                    let a = &prev[s * in_dim..(s + 1) * in_dim];
                    for o in 0..out_dim {
                        if d[o] != 0.0 {
                            let wrow = &w[o * in_dim..(o + 1) * in_dim];
                            for j in 0..in_dim {
                                row[j] += d[o] * wrow[j];
                            }
                        }
                    }
                    // ReLU gate: the stored activation is max(z, 0), so
                    // z > 0 exactly where the activation is positive.
                    for (slot, &av) in row.iter_mut().zip(a) {
                        if av <= 0.0 {
                            *slot = 0.0;
                        }
                    }
                };
                if cache.n * in_dim * out_dim >= PAR_WORK_THRESHOLD {
                    prev_delta.par_chunks_mut(in_dim).enumerate().for_each(body);
                } else {
                    prev_delta.chunks_mut(in_dim).enumerate().for_each(body);
                }
                delta = prev_delta;
            }
            grad.weights.push(dw);
            grad.biases.push(db);
        }
        grad.weights.reverse();
        grad.biases.reverse();
        Ok((loss, grad))
    }

    pub fn loss(&self, batch: &[f64], labels: &[u32]) -> Result<f64> {
        let (logits, _) = self.forward(batch)?;
        let k = *self.layer_dims.last().unwrap();
        Ok(softmax_cross_entropy(&logits, labels, k).0)
    }

    pub fn sgd_step(&mut self, grad: &MlpGradient, gamma: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            w.iter_mut().zip(g).for_each(|(v, gi)| *v -= gamma * gi);
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            b.iter_mut().zip(g).for_each(|(v, gi)| *v -= gamma * gi);
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let (logits, _) = self.forward(&data.features)?;
        let k = *self.layer_dims.last().unwrap();
        let correct: usize = (0..data.n_samples)
            .filter(|&s| {
                let row = &logits[s * k..(s + 1) * k];
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                best == data.labels[s] as usize
            })
            .count();
        Ok(correct as f64 / data.n_samples as f64)
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
        return Err(SmgdError::InvalidArgument(format!(
            "layer_dims must list at least input and output sizes, all positive: {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Choice of lattice resolution at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum AlphaMode {
    /// One alpha for every layer.
    Shared(f64),
}

/// MLP whose parameters are integer codes on a per-layer lattice: real
/// weight = code * alpha, with every code saturated to the q-bit range
/// [-2^{q-1}, 2^{q-1} - 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMlp {
    layer_dims: Vec<usize>,
    q_bits: u32,
    /// weight_codes[l] is layer_dims[l+1] x layer_dims[l], row-major.
    weight_codes: Vec<Vec<i32>>,
    bias_codes: Vec<Vec<i32>>,
    alphas: Vec<f64>,
}

impl QuantizedMlp {
    pub fn from_parts(
        layer_dims: Vec<usize>,
        q_bits: u32,
        weight_codes: Vec<Vec<i32>>,
        bias_codes: Vec<Vec<i32>>,
        alphas: Vec<f64>,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        if !(1..=16).contains(&q_bits) {
            return Err(SmgdError::InvalidArgument(format!(
                "q_bits must be in 1..=16, got {q_bits}"
            )));
        }
        let layers = layer_dims.len() - 1;
        if weight_codes.len() != layers || bias_codes.len() != layers || alphas.len() != layers {
            return Err(SmgdError::InvalidArgument(
                "per-layer arrays must match the layer count".into(),
            ));
        }
        let net = Self { layer_dims, q_bits, weight_codes, bias_codes, alphas };
        let (lo, hi) = net.code_range();
        for l in 0..layers {
            if net.weight_codes[l].len() != net.layer_dims[l + 1] * net.layer_dims[l]
                || net.bias_codes[l].len() != net.layer_dims[l + 1]
            {
                return Err(SmgdError::InvalidArgument(format!(
                    "layer {l} code arrays do not match its dimensions"
                )));
            }
            if !(net.alphas[l].is_finite() && net.alphas[l] > 0.0) {
                return Err(SmgdError::InvalidArgument(format!(
                    "layer {l} alpha must be positive and finite, got {}",
                    net.alphas[l]
                )));
            }
            if let Some(&c) = net.codes(l).find(|&&c| c < lo || c > hi) {
                return Err(SmgdError::InvalidArgument(format!(
                    "layer {l} code {c} outside the {q_bits}-bit range [{lo}, {hi}]"
                )));
            }
        }
        Ok(net)
    }

    /// All-zero network on a shared lattice.
    pub fn zeros(layer_dims: Vec<usize>, q_bits: u32, alpha: f64) -> Result<Self> {
        let layers = layer_dims.len().saturating_sub(1);
        let weight_codes = (0..layers)
            .map(|l| vec![0; layer_dims[l + 1] * layer_dims[l]])
            .collect();
        let bias_codes = (0..layers).map(|l| vec![0; layer_dims[l + 1]]).collect();
        Self::from_parts(layer_dims, q_bits, weight_codes, bias_codes, vec![alpha; layers])
    }

    /// Random init: weight codes uniform on a centered sub-range sized so
    /// the real weights approximate variance 2/fan_in, never wider than
    /// the central half of the q-bit range; biases start at zero.
    pub fn random(layer_dims: Vec<usize>, q_bits: u32, alpha: AlphaMode, seed: u64) -> Result<Self> {
        let AlphaMode::Shared(a) = alpha;
        let layers = layer_dims.len().saturating_sub(1);
        Self::random_with_alphas(layer_dims, q_bits, vec![a; layers], seed)
    }

    /// Random init with the per-layer alpha chosen so the central-half
    /// uniform code distribution itself has variance 2/fan_in.
    pub fn random_auto(layer_dims: Vec<usize>, q_bits: u32, seed: u64) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let alphas = (0..layer_dims.len() - 1)
            .map(|l| auto_alpha(q_bits, layer_dims[l]))
            .collect();
        Self::random_with_alphas(layer_dims, q_bits, alphas, seed)
    }

    fn random_with_alphas(
        layer_dims: Vec<usize>,
        q_bits: u32,
        alphas: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, q_bits, 1.0)?;
        net.alphas = alphas.clone();
        let half = central_half_bound(q_bits);
        for l in 0..net.num_layers() {
            let target_std = (2.0 / net.layer_dims[l] as f64).sqrt();
            // discrete uniform on [-c, c-1] has std sqrt((4c^2 - 1)/12)
            let c = ((target_std * 12f64.sqrt() / 2.0 / alphas[l]).round() as i32).clamp(1, half);
            let mut rng = substream(seed, l as u64, 8);
            for w in net.weight_codes[l].iter_mut() {
                *w = rng.gen_range(-c..c);
            }
        }
        Self::from_parts(net.layer_dims, q_bits, net.weight_codes, net.bias_codes, alphas)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn q_bits(&self) -> u32 {
        self.q_bits
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn num_params(&self) -> u64 {
        (0..self.num_layers())
            .map(|l| (self.layer_dims[l + 1] * (self.layer_dims[l] + 1)) as u64)
            .sum()
    }

    /// Inclusive saturated code range [-2^{q-1}, 2^{q-1} - 1].
    pub fn code_range(&self) -> (i32, i32) {
        let half = 1i32 << (self.q_bits - 1);
        (-half, half - 1)
    }

    fn codes(&self, layer: usize) -> impl Iterator<Item = &i32> {
        self.weight_codes[layer].iter().chain(self.bias_codes[layer].iter())
    }

    pub fn weight_codes(&self, layer: usize) -> &[i32] {
        &self.weight_codes[layer]
    }

    pub fn bias_codes(&self, layer: usize) -> &[i32] {
        &self.bias_codes[layer]
    }

    /// Decode to real values; the product code * alpha is exact for the
    /// magnitudes in play (codes < 2^16, alpha a normal f64).
    pub fn to_real(&self) -> RealMlp {
        RealMlp {
            layer_dims: self.layer_dims.clone(),
            weights: self
                .weight_codes
                .iter()
                .zip(&self.alphas)
                .map(|(codes, &a)| codes.iter().map(|&c| c as f64 * a).collect())
                .collect(),
            biases: self
                .bias_codes
                .iter()
                .zip(&self.alphas)
                .map(|(codes, &a)| codes.iter().map(|&c| c as f64 * a).collect())
                .collect(),
        }
    }

    pub fn forward(&self, batch: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.to_real().forward(batch)
    }

    pub fn backward(&self, cache: &ForwardCache, labels: &[u32]) -> Result<(f64, MlpGradient)> {
        self.to_real().backward(cache, labels)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.to_real().accuracy(data)
    }

    /// Apply a drawn update with saturation: a flip that would leave the
    /// q-bit range is suppressed and the coordinate stays put. Returns the
    /// number of applied flips.
    pub(crate) fn apply_update(&mut self, layer: usize, update_w: &[i8], update_b: &[i8]) -> usize {
        let (lo, hi) = self.code_range();
        let mut applied = 0;
        for (code, &u) in self.weight_codes[layer]
            .iter_mut()
            .chain(self.bias_codes[layer].iter_mut())
            .zip(update_w.iter().chain(update_b.iter()))
        {
            if u != 0 {
                let next = *code + u as i32;
                if (lo..=hi).contains(&next) {
                    *code = next;
                    applied += 1;
                }
            }
        }
        applied
    }

    /// True when every code of some layer sits on the range boundary, so
    /// no inward flip can occur on that layer.
    pub fn any_layer_saturated(&self) -> Option<usize> {
        let (lo, hi) = self.code_range();
        (0..self.num_layers()).find(|&l| self.codes(l).all(|&c| c == lo || c == hi))
    }
}

/// Central-half bound: codes drawn from [-bound, bound - 1] at init.
fn central_half_bound(q_bits: u32) -> i32 {
    if q_bits == 1 {
        1
    } else {
        (1i32 << (q_bits - 1)) / 2
    }
}

/// Alpha making the central-half uniform code distribution match the
/// He-style weight standard deviation sqrt(2 / fan_in).
pub fn auto_alpha(q_bits: u32, fan_in: usize) -> f64 {
    let c = central_half_bound(q_bits) as f64;
    let code_std = ((4.0 * c * c - 1.0) / 12.0).sqrt();
    (2.0 / fan_in as f64).sqrt() / code_std
}
