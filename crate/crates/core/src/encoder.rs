//! The per-ray weight encoder.
//!
//! Pipeline per ray: `conv1 (6 -> C) -> [batch norm] -> leaky ReLU ->
//! conv2 (C -> 1) -> square`, convolving along the hit sequence with width 3,
//! stride 1 and zero padding 1, so every hit gets one non-negative weight.
//!
//! Signals are stored position-major (`data[pos * channels + ch]`).
//!
//! The batch engine can evaluate only the "active" part of each ray: weights
//! for the `n` real hits need hidden activations at positions `0..=n`, and in
//! the bias-free variants every position past that is an exact zero before
//! normalization, so it enters the batch statistics only through the count.
//! The result is identical to evaluating all `N` positions.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{param_err, shape_err, Error, Result};
use crate::features::{PaddedInput, FEATURES};
use crate::math;

/// Convolution width.
pub const KERNEL: usize = 3;

/// How the encoder keeps the zero extension from producing spurious weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EncoderVariant {
    /// Bias-free convolutions, nothing else.
    NoBias,
    /// Convolutions with bias; weights past `n` are masked to zero.
    BiasMask,
    /// Bias-free convolutions with batch normalization after the first.
    NoBiasBn,
}

impl EncoderVariant {
    pub fn has_bias(self) -> bool {
        matches!(self, Self::BiasMask)
    }

    pub fn has_mask(self) -> bool {
        matches!(self, Self::BiasMask)
    }

    pub fn has_bn(self) -> bool {
        matches!(self, Self::NoBiasBn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NoBias => "no_bias",
            Self::BiasMask => "bias_mask",
            Self::NoBiasBn => "no_bias_bn",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "no_bias" => Some(Self::NoBias),
            "bias_mask" => Some(Self::BiasMask),
            "no_bias_bn" => Some(Self::NoBiasBn),
            _ => None,
        }
    }
}

/// Position-major multichannel sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn get(&self, ch: usize, pos: usize) -> f64 {
        self.data[pos * self.channels + ch]
    }

    pub fn set(&mut self, ch: usize, pos: usize, v: f64) {
        self.data[pos * self.channels + ch] = v;
    }

    /// The 6 x N matrix of a padded input.
    pub fn from_padded(input: &PaddedInput) -> Self {
        let mut s = Self::zeros(FEATURES, input.capacity());
        for (j, col) in input.columns().iter().enumerate() {
            s.data[j * FEATURES..(j + 1) * FEATURES].copy_from_slice(col);
        }
        s
    }
}

/// Width-3 convolution, weights laid out `[out][tap][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, bias: bool) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * KERNEL * in_channels],
            bias: bias.then(|| vec![0.0; out_channels]),
        }
    }

    /// Weights uniform in `±1/sqrt(in_channels * KERNEL)`, biases zero.
    pub fn init<R: Rng>(in_channels: usize, out_channels: usize, bias: bool, rng: &mut R) -> Self {
        let mut c = Self::zeros(in_channels, out_channels, bias);
        let bound = init_bound(in_channels);
        for w in &mut c.weight {
            *w = bound * (2.0 * rng.random::<f64>() - 1.0);
        }
        c
    }

    fn window(&self) -> usize {
        KERNEL * self.in_channels
    }

    pub fn weight_at(&self, out: usize, tap: usize, inp: usize) -> f64 {
        self.weight[(out * KERNEL + tap) * self.in_channels + inp]
    }
}

/// Bound of the uniform weight initialization for a layer with `fan_in` inputs.
pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / math::sqrt((fan_in * KERNEL) as f64)
}

/// Same-length convolution of `input` (zero-padded at both ends).
pub fn conv1d_forward(conv: &Conv1d, input: &Signal) -> Result<Signal> {
    if input.channels != conv.in_channels {
        return Err(shape_err!(
            "convolution expects {} input channels, got {}",
            conv.in_channels,
            input.channels
        ));
    }
    if input.len == 0 {
        return Err(shape_err!("convolution input is empty"));
    }
    let mut padded = vec![0.0; (input.len + 2) * conv.in_channels];
    padded[conv.in_channels..(input.len + 1) * conv.in_channels].copy_from_slice(&input.data);
    let mut out = Signal::zeros(conv.out_channels, input.len);
    for j in 0..input.len {
        let win = &padded[j * conv.in_channels..(j + KERNEL) * conv.in_channels];
        conv_position(conv, win, &mut out.data[j * conv.out_channels..(j + 1) * conv.out_channels]);
    }
    Ok(out)
}

#[inline]
fn conv_position(conv: &Conv1d, win: &[f64], out: &mut [f64]) {
    let w = conv.window();
    for (c, o) in out.iter_mut().enumerate() {
        let kernel = &conv.weight[c * w..(c + 1) * w];
        let mut acc = conv.bias.as_ref().map_or(0.0, |b| b[c]);
        for (k, x) in kernel.iter().zip(win) {
            acc += k * x;
        }
        *o = acc;
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Per-channel batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Folds one batch's statistics into the running estimates.
    /// `var` is the biased batch variance over `count` samples.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let m = self.momentum;
        let unbias = if count > 1 {
            count as f64 / (count - 1) as f64
        } else {
            1.0
        };
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * var[c] * unbias;
        }
    }
}

/// Whether batch normalization uses batch or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Normalizes a batch of signals over (batch, position) per channel.
/// Returns the normalized batch and the batch mean and biased variance.
pub fn batchnorm_forward(
    bn: &BatchNorm1d,
    batch: &[Signal],
    mode: BnMode,
) -> Result<(Vec<Signal>, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(param_err!("batch normalization needs a non-empty batch"));
    }
    let ch = bn.channels();
    if batch.iter().any(|s| s.channels != ch) {
        return Err(shape_err!("batch normalization expects {ch} channels"));
    }
    let (mean, var) = match mode {
        BnMode::Train => {
            let count: usize = batch.iter().map(|s| s.len).sum();
            if count == 0 {
                return Err(param_err!("batch normalization over zero positions"));
            }
            let mut mean = vec![0.0; ch];
            for s in batch {
                for p in 0..s.len {
                    for c in 0..ch {
                        mean[c] += s.get(c, p);
                    }
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            let mut var = vec![0.0; ch];
            for s in batch {
                for p in 0..s.len {
                    for c in 0..ch {
                        let d = s.get(c, p) - mean[c];
                        var[c] += d * d;
                    }
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            (mean, var)
        }
        BnMode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let out = batch
        .iter()
        .map(|s| {
            let mut o = s.clone();
            for p in 0..s.len {
                for c in 0..ch {
                    let xhat = (s.get(c, p) - mean[c]) / math::sqrt(var[c] + bn.eps);
                    o.set(c, p, bn.gamma[c] * xhat + bn.beta[c]);
                }
            }
            o
        })
        .collect();
    Ok((out, mean, var))
}

/// Hyperparameters fixing the encoder's shape.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub hidden_channels: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            variant: EncoderVariant::NoBiasBn,
            hidden_channels: 32,
            leaky_slope: 0.01,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_channels == 0 {
            return Err(param_err!("encoder needs at least one hidden channel"));
        }
        if !(self.leaky_slope.is_finite() && self.bn_eps > 0.0) {
            return Err(param_err!("invalid leaky slope or batch-norm epsilon"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(param_err!("batch-norm momentum must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// All encoder parameters, including batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub variant: EncoderVariant,
    pub leaky_slope: f64,
    pub conv1: Conv1d,
    pub bn: Option<BatchNorm1d>,
    pub conv2: Conv1d,
}

/// Gradients with the same layout as the trainable encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub conv1_weight: Vec<f64>,
    pub conv1_bias: Option<Vec<f64>>,
    pub bn_gamma: Option<Vec<f64>>,
    pub bn_beta: Option<Vec<f64>>,
    pub conv2_weight: Vec<f64>,
    pub conv2_bias: Option<Vec<f64>>,
}

impl EncoderGrads {
    fn zeros_like(p: &EncoderParams) -> Self {
        Self {
            conv1_weight: vec![0.0; p.conv1.weight.len()],
            conv1_bias: p.conv1.bias.as_ref().map(|b| vec![0.0; b.len()]),
            bn_gamma: p.bn.as_ref().map(|b| vec![0.0; b.channels()]),
            bn_beta: p.bn.as_ref().map(|b| vec![0.0; b.channels()]),
            conv2_weight: vec![0.0; p.conv2.weight.len()],
            conv2_bias: p.conv2.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    /// Tensors in the order of [`EncoderParams::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.conv1_weight];
        v.extend(self.conv1_bias.as_deref());
        v.extend(self.bn_gamma.as_deref());
        v.extend(self.bn_beta.as_deref());
        v.push(&self.conv2_weight);
        v.extend(self.conv2_bias.as_deref());
        v
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(
            self.tensors()
                .iter()
                .flat_map(|t| t.iter())
                .map(|g| g * g)
                .sum::<f64>(),
        )
    }
}

impl EncoderParams {
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bias = config.variant.has_bias();
        let h = config.hidden_channels;
        Ok(Self {
            variant: config.variant,
            leaky_slope: config.leaky_slope,
            conv1: Conv1d::init(FEATURES, h, bias, rng),
            bn: config
                .variant
                .has_bn()
                .then(|| BatchNorm1d::new(h, config.bn_momentum, config.bn_eps)),
            conv2: Conv1d::init(h, 1, bias, rng),
        })
    }

    pub fn hidden_channels(&self) -> usize {
        self.conv1.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.conv1.out_channels;
        let ok = self.conv1.in_channels == FEATURES
            && self.conv1.weight.len() == h * KERNEL * FEATURES
            && self.conv2.in_channels == h
            && self.conv2.out_channels == 1
            && self.conv2.weight.len() == h * KERNEL
            && self.conv1.bias.is_some() == self.variant.has_bias()
            && self.conv2.bias.is_some() == self.variant.has_bias()
            && self.conv1.bias.as_ref().map_or(true, |b| b.len() == h)
            && self.conv2.bias.as_ref().map_or(true, |b| b.len() == 1)
            && self.bn.is_some() == self.variant.has_bn();
        if !ok {
            return Err(shape_err!("encoder parameters do not match variant {:?}", self.variant));
        }
        if let Some(bn) = &self.bn {
            let ok = bn.gamma.len() == h
                && bn.beta.len() == h
                && bn.running_mean.len() == h
                && bn.running_var.len() == h
                && bn.eps > 0.0
                && bn.running_var.iter().all(|&v| v >= 0.0);
            if !ok {
                return Err(shape_err!("batch-norm parameters are inconsistent"));
            }
        }
        Ok(())
    }

    /// Trainable tensors in a fixed order: conv1 weight, conv1 bias, BN
    /// scale, BN shift, conv2 weight, conv2 bias (absent ones skipped).
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.conv1.weight];
        if let Some(b) = self.conv1.bias.as_mut() {
            v.push(b);
        }
        if let Some(bn) = self.bn.as_mut() {
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v.push(&mut self.conv2.weight);
        if let Some(b) = self.conv2.bias.as_mut() {
            v.push(b);
        }
        v
    }

    pub fn trainable_len(&mut self) -> Vec<usize> {
        self.trainable_mut().iter().map(|t| t.len()).collect()
    }

    /// Full-capacity weights for a batch of rays (one `N`-vector per ray).
    pub fn encoder_forward(&self, inputs: &[PaddedInput], mode: BnMode) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&PaddedInput> = inputs.iter().collect();
        let cache = self.forward_batch(&refs, Extent::Full, mode)?;
        Ok((0..refs.len()).map(|r| cache.weights(r).to_vec()).collect())
    }
}

/// Which positions of each ray the batch engine evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// All `N` positions; weights have length `N`.
    Full,
    /// Only what the `n` real weights depend on; weights have length `n`.
    Active,
}

/// Forward activations of one batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: BnMode,
    hidden: usize,
    /// Per ray: real hit count, evaluated hidden span, weight count.
    n: Vec<usize>,
    span: Vec<usize>,
    out_len: Vec<usize>,
    /// Offsets into the per-position buffers (in positions).
    span_off: Vec<usize>,
    out_off: Vec<usize>,
    /// Zero-bordered inputs, `span + 2` positions per ray.
    input: Vec<f64>,
    /// Normalized conv1 output (batch-norm variant only).
    xhat: Vec<f64>,
    /// Activation input and output.
    pre: Vec<f64>,
    act: Vec<f64>,
    /// conv2 output before squaring.
    out: Vec<f64>,
    weights: Vec<f64>,
    /// Per ray: sum of squared weights at padded positions `n..N`.
    pad_sq: Vec<f64>,
    /// Batch-norm normalization statistics used by this pass.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    inv_std: Vec<f64>,
    /// Sample count behind the batch statistics, `B * N`.
    pub bn_count: usize,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Weights of ray `r`.
    pub fn weights(&self, r: usize) -> &[f64] {
        &self.weights[self.out_off[r]..self.out_off[r] + self.out_len[r]]
    }

    /// Euclidean norm of ray `r`'s full length-`N` weight vector, whatever
    /// the extent evaluated.
    pub fn weight_norm(&self, r: usize) -> f64 {
        let real = &self.weights(r)[..self.n[r]];
        math::sqrt(real.iter().map(|w| w * w).sum::<f64>() + self.pad_sq[r])
    }
}

impl EncoderParams {
    /// Batched forward pass. All rays must share one capacity.
    pub fn forward_batch(
        &self,
        rays: &[&PaddedInput],
        extent: Extent,
        mode: BnMode,
    ) -> Result<ForwardCache> {
        self.validate()?;
        if rays.is_empty() {
            return Err(param_err!("encoder batch is empty"));
        }
        let capacity = rays[0].capacity();
        if capacity == 0 || rays.iter().any(|r| r.capacity() != capacity) {
            return Err(shape_err!("rays in a batch must share a positive capacity"));
        }
        let h = self.hidden_channels();
        let b = rays.len();
        let mut n = Vec::with_capacity(b);
        let mut span = Vec::with_capacity(b);
        let mut out_len = Vec::with_capacity(b);
        let mut span_off = Vec::with_capacity(b);
        let mut out_off = Vec::with_capacity(b);
        let (mut total_span, mut total_out) = (0, 0);
        for r in rays {
            let (s, o) = match extent {
                Extent::Full => (capacity, capacity),
                Extent::Active => ((r.len() + 1).min(capacity), r.len()),
            };
            n.push(r.len());
            span.push(s);
            out_len.push(o);
            span_off.push(total_span);
            out_off.push(total_out);
            total_span += s;
            total_out += o;
        }

        let mut input = vec![0.0; (total_span + 2 * b) * FEATURES];
        let mut pre = vec![0.0; total_span * h];
        for (r, ray) in rays.iter().enumerate() {
            let base = (span_off[r] + 2 * r) * FEATURES;
            let real = ray.len().min(span[r] + 1);
            for (j, col) in ray.columns()[..real].iter().enumerate() {
                let at = base + (j + 1) * FEATURES;
                input[at..at + FEATURES].copy_from_slice(col);
            }
            let x = &input[base..base + (span[r] + 2) * FEATURES];
            for j in 0..span[r] {
                let p = span_off[r] + j;
                conv_position(
                    &self.conv1,
                    &x[j * FEATURES..(j + KERNEL) * FEATURES],
                    &mut pre[p * h..(p + 1) * h],
                );
            }
        }

        let bn_count = b * capacity;
        let (mut mean, mut var, mut inv_std) = (Vec::new(), Vec::new(), Vec::new());
        let mut xhat = Vec::new();
        if let Some(bn) = &self.bn {
            (mean, var) = match mode {
                BnMode::Train => {
                    let mut mean = vec![0.0; h];
                    for p in 0..total_span {
                        for c in 0..h {
                            mean[c] += pre[p * h + c];
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= bn_count as f64);
                    let mut var = vec![0.0; h];
                    for p in 0..total_span {
                        for c in 0..h {
                            let d = pre[p * h + c] - mean[c];
                            var[c] += d * d;
                        }
                    }
                    // Unevaluated positions are exact zeros.
                    let implicit = (bn_count - total_span) as f64;
                    for c in 0..h {
                        var[c] = (var[c] + implicit * mean[c] * mean[c]) / bn_count as f64;
                    }
                    (mean, var)
                }
                BnMode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            inv_std = var.iter().map(|v| 1.0 / math::sqrt(v + bn.eps)).collect();
            xhat = vec![0.0; total_span * h];
            for p in 0..total_span {
                for c in 0..h {
                    let xh = (pre[p * h + c] - mean[c]) * inv_std[c];
                    xhat[p * h + c] = xh;
                    pre[p * h + c] = bn.gamma[c] * xh + bn.beta[c];
                }
            }
        }
        let slope = self.leaky_slope;
        let act: Vec<f64> = pre.iter().map(|&a| leaky_relu(a, slope)).collect();

        let mut out = vec![0.0; total_out];
        let mut weights = vec![0.0; total_out];
        let b2 = self.conv2.bias.as_ref().map_or(0.0, |b| b[0]);
        for r in 0..b {
            let hs = &act[span_off[r] * h..(span_off[r] + span[r]) * h];
            for j in 0..out_len[r] {
                let mut acc = b2;
                for k in 0..KERNEL {
                    let Some(p) = (j + k).checked_sub(1) else { continue };
                    if p >= span[r] {
                        continue;
                    }
                    let kw = &self.conv2.weight[k * h..(k + 1) * h];
                    let hv = &hs[p * h..(p + 1) * h];
                    for (w, x) in kw.iter().zip(hv) {
                        acc += w * x;
                    }
                }
                let o = out_off[r] + j;
                out[o] = acc;
                weights[o] = if self.variant.has_mask() && j >= n[r] {
                    0.0
                } else {
                    acc * acc
                };
            }
        }

        // Squared norm of each ray's weights past `n`. Hidden positions past
        // the evaluated span all see an all-zero window.
        let mut pad_sq = vec![0.0; b];
        if !self.variant.has_mask() {
            let mut pad_act = vec![0.0; h];
            for c in 0..h {
                let mut z = self.conv1.bias.as_ref().map_or(0.0, |b| b[c]);
                if let Some(bn) = &self.bn {
                    z = bn.gamma[c] * (z - mean[c]) * inv_std[c] + bn.beta[c];
                }
                pad_act[c] = leaky_relu(z, slope);
            }
            let tail: [f64; KERNEL] = core::array::from_fn(|k| {
                let kw = &self.conv2.weight[k * h..(k + 1) * h];
                kw.iter().zip(&pad_act).map(|(w, a)| w * a).sum()
            });
            for r in 0..b {
                let o = out_off[r];
                pad_sq[r] = weights[o + n[r]..o + out_len[r]].iter().map(|w| w * w).sum();
                let hs = &act[span_off[r] * h..(span_off[r] + span[r]) * h];
                for j in out_len[r]..capacity {
                    let mut acc = b2;
                    for k in 0..KERNEL {
                        let Some(p) = (j + k).checked_sub(1) else { continue };
                        if p >= capacity {
                            continue;
                        }
                        acc += if p < span[r] {
                            let kw = &self.conv2.weight[k * h..(k + 1) * h];
                            kw.iter().zip(&hs[p * h..(p + 1) * h]).map(|(w, x)| w * x).sum::<f64>()
                        } else {
                            tail[k]
                        };
                    }
                    pad_sq[r] += acc * acc * acc * acc;
                }
            }
        }

        Ok(ForwardCache {
            mode,
            hidden: h,
            n,
            span,
            out_len,
            span_off,
            out_off,
            input,
            xhat,
            pre,
            act,
            out,
            weights,
            pad_sq,
            mean,
            var,
            inv_std,
            bn_count,
        })
    }

    /// Reverse-mode gradients of all trainable encoder scalars, given the
    /// loss gradient with respect to every weight the forward pass produced.
    pub fn encoder_backward(&self, cache: &ForwardCache, grad_weights: &[Vec<f64>]) -> Result<EncoderGrads> {
        if grad_weights.len() != cache.len() {
            return Err(shape_err!(
                "{} weight gradients for a batch of {}",
                grad_weights.len(),
                cache.len()
            ));
        }
        let mut flat = Vec::with_capacity(cache.weights.len());
        for (r, g) in grad_weights.iter().enumerate() {
            if g.len() != cache.out_len[r] {
                return Err(shape_err!("ray {r}: {} gradients for {} weights", g.len(), cache.out_len[r]));
            }
            flat.extend_from_slice(g);
        }
        self.backward_flat(cache, &flat)
    }

    /// As [`encoder_backward`](Self::encoder_backward) with the weight
    /// gradients concatenated ray after ray.
    pub fn backward_flat(&self, cache: &ForwardCache, grad_weights: &[f64]) -> Result<EncoderGrads> {
        let h = self.hidden_channels();
        if cache.hidden != h || grad_weights.len() != cache.weights.len() {
            return Err(Error::State("forward cache does not belong to this batch".into()));
        }
        let mut grads = EncoderGrads::zeros_like(self);
        let total_span: usize = cache.span.iter().sum();
        let mut dpre = vec![0.0; total_span * h];

        for r in 0..cache.len() {
            let span = cache.span[r];
            let so = cache.span_off[r];
            let hs = &cache.act[so * h..(so + span) * h];
            for j in 0..cache.out_len[r] {
                let o = cache.out_off[r] + j;
                if self.variant.has_mask() && j >= cache.n[r] {
                    continue;
                }
                let g_out = 2.0 * cache.out[o] * grad_weights[o];
                if g_out == 0.0 {
                    continue;
                }
                if let Some(b) = grads.conv2_bias.as_mut() {
                    b[0] += g_out;
                }
                for k in 0..KERNEL {
                    let Some(p) = (j + k).checked_sub(1) else { continue };
                    if p >= span {
                        continue;
                    }
                    let kw = &self.conv2.weight[k * h..(k + 1) * h];
                    let gw = &mut grads.conv2_weight[k * h..(k + 1) * h];
                    let hv = &hs[p * h..(p + 1) * h];
                    let dh = &mut dpre[(so + p) * h..(so + p + 1) * h];
                    for c in 0..h {
                        gw[c] += g_out * hv[c];
                        dh[c] += g_out * kw[c];
                    }
                }
            }
        }

        let slope = self.leaky_slope;
        for (d, &a) in dpre.iter_mut().zip(&cache.pre) {
            *d *= leaky_relu_grad(a, slope);
        }

        if let Some(bn) = &self.bn {
            let mut dgamma = vec![0.0; h];
            let mut dbeta = vec![0.0; h];
            for p in 0..total_span {
                for c in 0..h {
                    let d = dpre[p * h + c];
                    dgamma[c] += d * cache.xhat[p * h + c];
                    dbeta[c] += d;
                }
            }
            match cache.mode {
                BnMode::Train => {
                    let m = cache.bn_count as f64;
                    for p in 0..total_span {
                        for c in 0..h {
                            let i = p * h + c;
                            dpre[i] = bn.gamma[c]
                                * cache.inv_std[c]
                                * (dpre[i] - dbeta[c] / m - cache.xhat[i] * dgamma[c] / m);
                        }
                    }
                }
                BnMode::Eval => {
                    for p in 0..total_span {
                        for c in 0..h {
                            dpre[p * h + c] *= bn.gamma[c] * cache.inv_std[c];
                        }
                    }
                }
            }
            grads.bn_gamma = Some(dgamma);
            grads.bn_beta = Some(dbeta);
        }

        let w = KERNEL * FEATURES;
        for r in 0..cache.len() {
            let so = cache.span_off[r];
            let base = (so + 2 * r) * FEATURES;
            for j in 0..cache.span[r] {
                let win = &cache.input[base + j * FEATURES..base + (j + KERNEL) * FEATURES];
                let dz = &dpre[(so + j) * h..(so + j + 1) * h];
                for (c, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    if let Some(b) = grads.conv1_bias.as_mut() {
                        b[c] += d;
                    }
                    let gw = &mut grads.conv1_weight[c * w..(c + 1) * w];
                    for (g, x) in gw.iter_mut().zip(win) {
                        *g += d * x;
                    }
                }
            }
        }
        Ok(grads)
    }
}
