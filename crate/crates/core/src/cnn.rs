//! Small convolutional classifier trained end to end.
//!
//! Layer stack: conv(f₁, 3×3, valid) → ReLU → maxpool 2×2 → conv(f₂) → ReLU →
//! maxpool 2×2 → conv(f₃) → ReLU → flatten → dense(h) → ReLU → dense(classes)
//! → softmax. Activations are stored channel-major (CHW) and flattened in
//! that order. Pooling floors odd dimensions.
//!
//! All parameters live in one list of flat tensors (see [`TENSOR_NAMES`]), so
//! gradients, Adam moments and the on-disk format share a single layout.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svm::argmax_first;

const KSIZE: usize = 3;
const POOL: usize = 2;
/// Lower clamp applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

pub const TENSOR_NAMES: [&str; 10] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn conv(self, filters: usize) -> Option<Shape3> {
        (self.h >= KSIZE && self.w >= KSIZE).then(|| Shape3 {
            c: filters,
            h: self.h - KSIZE + 1,
            w: self.w - KSIZE + 1,
        })
    }

    fn pool(self) -> Option<Shape3> {
        (self.h >= POOL && self.w >= POOL).then_some(Shape3 {
            c: self.c,
            h: self.h / POOL,
            w: self.w / POOL,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    pub input: Shape3,
    pub conv_filters: [usize; 3],
    pub dense_units: usize,
    pub n_classes: usize,
}

impl Default for CnnArchitecture {
    /// 128×128×3 input, 32/64/128 filters, 64 hidden units, 4 classes.
    fn default() -> Self {
        CnnArchitecture {
            input: Shape3 {
                c: 3,
                h: 128,
                w: 128,
            },
            conv_filters: [32, 64, 128],
            dense_units: 64,
            n_classes: 4,
        }
    }
}

/// Activation shapes of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShapes {
    pub input: Shape3,
    pub conv1: Shape3,
    pub pool1: Shape3,
    pub conv2: Shape3,
    pub pool2: Shape3,
    pub conv3: Shape3,
    pub flatten: usize,
    pub dense1: usize,
    pub output: usize,
}

impl CnnArchitecture {
    /// Same stack with a different class count.
    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    pub fn shapes(&self) -> Result<LayerShapes> {
        let too_small = || {
            Error::Shape(format!(
                "input {}x{} too small for three valid 3x3 convolutions and two 2x2 pools",
                self.input.h, self.input.w
            ))
        };
        if self.conv_filters.contains(&0)
            || self.dense_units == 0
            || self.n_classes < 2
            || self.input.c == 0
        {
            return Err(Error::Config(
                "filter counts, hidden units, channels must be positive and classes at least 2"
                    .into(),
            ));
        }
        let conv1 = self.input.conv(self.conv_filters[0]).ok_or_else(too_small)?;
        let pool1 = conv1.pool().ok_or_else(too_small)?;
        let conv2 = pool1.conv(self.conv_filters[1]).ok_or_else(too_small)?;
        let pool2 = conv2.pool().ok_or_else(too_small)?;
        let conv3 = pool2.conv(self.conv_filters[2]).ok_or_else(too_small)?;
        Ok(LayerShapes {
            input: self.input,
            conv1,
            pool1,
            conv2,
            pool2,
            conv3,
            flatten: conv3.len(),
            dense1: self.dense_units,
            output: self.n_classes,
        })
    }

    /// Shapes of the parameter tensors, in [`TENSOR_NAMES`] order.
    pub fn tensor_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let s = self.shapes()?;
        let [f1, f2, f3] = self.conv_filters;
        Ok(vec![
            vec![f1, self.input.c, KSIZE, KSIZE],
            vec![f1],
            vec![f2, f1, KSIZE, KSIZE],
            vec![f2],
            vec![f3, f2, KSIZE, KSIZE],
            vec![f3],
            vec![s.dense1, s.flatten],
            vec![s.dense1],
            vec![s.output, s.dense1],
            vec![s.output],
        ])
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .tensor_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Learnable tensors plus Adam moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub tensors: Vec<Vec<f64>>,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl CnnParams {
    fn zeros_like(tensors: &[Vec<f64>]) -> Vec<Vec<f64>> {
        tensors.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    pub fn from_tensors(tensors: Vec<Vec<f64>>) -> CnnParams {
        CnnParams {
            first_moment: Self::zeros_like(&tensors),
            second_moment: Self::zeros_like(&tensors),
            tensors,
            step: 0,
        }
    }
}

/// Gradient of the loss for every tensor, same layout as [`CnnParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// One-hot targets `y_{i,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    rows: Vec<Vec<f64>>,
}

impl OneHotLabels {
    pub fn from_indices(labels: &[usize], n_classes: usize) -> Result<Self> {
        let rows = labels
            .iter()
            .map(|&l| {
                if l >= n_classes {
                    return Err(Error::LabelOutOfRange {
                        label: l,
                        n_classes,
                    });
                }
                let mut r = vec![0.0; n_classes];
                r[l] = 1.0;
                Ok(r)
            })
            .collect::<Result<_>>()?;
        Ok(OneHotLabels { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−(1/N) Σᵢ Σₖ yᵢₖ log max(pᵢₖ, 1e-12)`.
pub fn cross_entropy(probs: &[Vec<f64>], y: &OneHotLabels) -> Result<f64> {
    if probs.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: probs.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("cross-entropy batch".into()));
    }
    let mut total = 0.0;
    for (p, t) in probs.iter().zip(y.rows()) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: p.len(),
            });
        }
        for (pk, yk) in p.iter().zip(t) {
            if *yk != 0.0 {
                total -= yk * pk.max(PROB_FLOOR).ln();
            }
        }
    }
    Ok(total / probs.len() as f64)
}

/// One Adam update in place. The step counter is incremented before bias correction.
pub fn adam_step(params: &mut CnnParams, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.0.len() != params.tensors.len()
        || grads
            .0
            .iter()
            .zip(&params.tensors)
            .any(|(g, t)| g.len() != t.len())
    {
        return Err(Error::Shape("gradient layout does not match parameters".into()));
    }
    for (name, g) in TENSOR_NAMES.iter().zip(&grads.0) {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name} at index {i}")));
        }
    }
    params.step += 1;
    let t = params.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((theta, m), v), g) in params
        .tensors
        .iter_mut()
        .zip(params.first_moment.iter_mut())
        .zip(params.second_moment.iter_mut())
        .zip(&grads.0)
    {
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

fn conv_forward(input: &[f64], s: Shape3, weights: &[f64], bias: &[f64], out_c: usize) -> Vec<f64> {
    let (oh, ow) = (s.h - KSIZE + 1, s.w - KSIZE + 1);
    let plane = oh * ow;
    let mut out = vec![0.0; out_c * plane];
    for oc in 0..out_c {
        let dst = &mut out[oc * plane..(oc + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..s.c {
            let src = &input[ic * s.h * s.w..(ic + 1) * s.h * s.w];
            let wbase = (oc * s.c + ic) * KSIZE * KSIZE;
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let w = weights[wbase + ky * KSIZE + kx];
                    for y in 0..oh {
                        let srow = &src[(y + ky) * s.w + kx..(y + ky) * s.w + kx + ow];
                        let drow = &mut dst[y * ow..(y + 1) * ow];
                        for (d, v) in drow.iter_mut().zip(srow) {
                            *d += w * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and, when requested, the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    s: Shape3,
    dout: &[f64],
    weights: &[f64],
    out_c: usize,
    dw: &mut [f64],
    db: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (oh, ow) = (s.h - KSIZE + 1, s.w - KSIZE + 1);
    let plane = oh * ow;
    for oc in 0..out_c {
        let g = &dout[oc * plane..(oc + 1) * plane];
        db[oc] += g.iter().sum::<f64>();
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        for ic in 0..s.c {
            let src = &input[ic * s.h * s.w..(ic + 1) * s.h * s.w];
            let wbase = (oc * s.c + ic) * KSIZE * KSIZE;
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let srow = &src[(y + ky) * s.w + kx..(y + ky) * s.w + kx + ow];
                        let grow = &g[y * ow..(y + 1) * ow];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    dw[wbase + ky * KSIZE + kx] += acc;
                    if let Some(din) = dinput.as_deref_mut() {
                        let w = weights[wbase + ky * KSIZE + kx];
                        let dplane = &mut din[ic * s.h * s.w..(ic + 1) * s.h * s.w];
                        for y in 0..oh {
                            let drow =
                                &mut dplane[(y + ky) * s.w + kx..(y + ky) * s.w + kx + ow];
                            let grow = &g[y * ow..(y + 1) * ow];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += w * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 max pooling; records the flat input index of each window maximum
/// (first in raster order on ties).
fn maxpool_forward(input: &[f64], s: Shape3) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (s.h / POOL, s.w / POOL);
    let mut out = Vec::with_capacity(s.c * oh * ow);
    let mut idx = Vec::with_capacity(s.c * oh * ow);
    for c in 0..s.c {
        let base = c * s.h * s.w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + (y * POOL) * s.w + x * POOL;
                for dy in 0..POOL {
                    for dx in 0..POOL {
                        let i = base + (y * POOL + dy) * s.w + x * POOL + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

fn maxpool_backward(dout: &[f64], idx: &[u32], in_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; in_len];
    for (g, &i) in dout.iter().zip(idx) {
        din[i as usize] += g;
    }
    din
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries whose ReLU output was not positive.
fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(j, b)| {
            let row = &weights[j * input.len()..(j + 1) * input.len()];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

/// Accumulates `dW += dout ⊗ input`, `db += dout`; returns `Wᵀ·dout`.
fn dense_backward(input: &[f64], dout: &[f64], weights: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = input.len();
    let mut din = vec![0.0; n];
    for (j, &g) in dout.iter().enumerate() {
        db[j] += g;
        if g == 0.0 {
            continue;
        }
        let wrow = &weights[j * n..(j + 1) * n];
        let dwrow = &mut dw[j * n..(j + 1) * n];
        for q in 0..n {
            dwrow[q] += g * input[q];
            din[q] += g * wrow[q];
        }
    }
    din
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Clone)]
struct SampleCache {
    input: Vec<f64>,
    conv1: Vec<f64>,
    pool1: Vec<f64>,
    pool1_idx: Vec<u32>,
    conv2: Vec<f64>,
    pool2: Vec<f64>,
    pool2_idx: Vec<u32>,
    conv3: Vec<f64>,
    dense1: Vec<f64>,
}

/// Output of [`Cnn::forward`]; valid for backward only while the parameters are unchanged.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    step: u64,
    samples: Vec<SampleCache>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// Activation lengths of the first sample, for shape audits.
    pub fn activation_lengths(&self) -> Option<[usize; 8]> {
        self.samples.first().map(|s| {
            [
                s.conv1.len(),
                s.pool1.len(),
                s.conv2.len(),
                s.pool2.len(),
                s.conv3.len(),
                s.dense1.len(),
                self.logits[0].len(),
                self.probs[0].len(),
            ]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub arch: CnnArchitecture,
    pub params: CnnParams,
}

impl Cnn {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: CnnArchitecture, rng: &mut impl Rng) -> Result<Cnn> {
        let shapes = arch.tensor_shapes()?;
        let tensors = shapes
            .iter()
            .map(|shape| {
                let len: usize = shape.iter().product();
                if shape.len() == 1 {
                    return vec![0.0; len];
                }
                let receptive: usize = shape[2..].iter().product();
                let fan_in = shape[1] * receptive;
                let fan_out = shape[0] * receptive;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-limit..limit)).collect()
            })
            .collect();
        Ok(Cnn {
            arch,
            params: CnnParams::from_tensors(tensors),
        })
    }

    pub fn from_tensors(arch: CnnArchitecture, tensors: Vec<Vec<f64>>) -> Result<Cnn> {
        let shapes = arch.tensor_shapes()?;
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in TENSOR_NAMES.iter().zip(&shapes).zip(&tensors) {
            let len: usize = shape.iter().product();
            if t.len() != len {
                return Err(Error::Shape(format!("{name}: expected {len} values, got {}", t.len())));
            }
        }
        Ok(Cnn {
            arch,
            params: CnnParams::from_tensors(tensors),
        })
    }

    fn forward_sample(&self, input: &[f64], shapes: &LayerShapes) -> SampleCache {
        let t = &self.params.tensors;
        let [f1, f2, f3] = self.arch.conv_filters;
        let mut conv1 = conv_forward(input, shapes.input, &t[0], &t[1], f1);
        relu_in_place(&mut conv1);
        let (pool1, pool1_idx) = maxpool_forward(&conv1, shapes.conv1);
        let mut conv2 = conv_forward(&pool1, shapes.pool1, &t[2], &t[3], f2);
        relu_in_place(&mut conv2);
        let (pool2, pool2_idx) = maxpool_forward(&conv2, shapes.conv2);
        let mut conv3 = conv_forward(&pool2, shapes.pool2, &t[4], &t[5], f3);
        relu_in_place(&mut conv3);
        let mut dense1 = dense_forward(&conv3, &t[6], &t[7]);
        relu_in_place(&mut dense1);
        SampleCache {
            input: input.to_vec(),
            conv1,
            pool1,
            pool1_idx,
            conv2,
            pool2,
            pool2_idx,
            conv3,
            dense1,
        }
    }

    fn check_batch(&self, batch: &[Vec<f64>]) -> Result<LayerShapes> {
        let shapes = self.arch.shapes()?;
        let len = shapes.input.len();
        for (i, x) in batch.iter().enumerate() {
            if x.len() != len {
                return Err(Error::Shape(format!(
                    "sample {i} has {} values, expected {len} ({}x{}x{})",
                    x.len(),
                    shapes.input.c,
                    shapes.input.h,
                    shapes.input.w
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("cnn input sample {i}")));
            }
        }
        Ok(shapes)
    }

    /// Forward pass over CHW inputs.
    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<ForwardCache> {
        let shapes = self.check_batch(batch)?;
        let t = &self.params.tensors;
        let samples: Vec<SampleCache> =
            batch.iter().map(|x| self.forward_sample(x, &shapes)).collect();
        let logits: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| dense_forward(&s.dense1, &t[8], &t[9]))
            .collect();
        let probs = logits.iter().map(|z| softmax(z)).collect();
        Ok(ForwardCache {
            step: self.params.step,
            samples,
            logits,
            probs,
        })
    }

    /// Mean cross-entropy of a batch.
    pub fn loss(&self, batch: &[Vec<f64>], y: &OneHotLabels) -> Result<f64> {
        cross_entropy(&self.forward(batch)?.probs, y)
    }

    /// Exact gradients of the mean cross-entropy for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, y: &OneHotLabels) -> Result<Gradients> {
        if cache.step != self.params.step || cache.samples.is_empty() {
            return Err(Error::StaleCache);
        }
        if y.len() != cache.samples.len() {
            return Err(Error::DimensionMismatch {
                expected: cache.samples.len(),
                got: y.len(),
            });
        }
        let shapes = self.arch.shapes()?;
        let t = &self.params.tensors;
        let [f1, f2, f3] = self.arch.conv_filters;
        let mut g: Vec<Vec<f64>> = t.iter().map(|x| vec![0.0; x.len()]).collect();
        let [gw1, gb1, gw2, gb2, gw3, gb3, gd1w, gd1b, gd2w, gd2b] = g.as_mut_slice() else {
            unreachable!("tensor layout has ten entries");
        };
        let n = cache.samples.len() as f64;
        for ((s, p), yt) in cache.samples.iter().zip(&cache.probs).zip(y.rows()) {
            let dz: Vec<f64> = p.iter().zip(yt).map(|(pk, yk)| (pk - yk) / n).collect();
            let mut dh = dense_backward(&s.dense1, &dz, &t[8], gd2w, gd2b);
            relu_mask(&mut dh, &s.dense1);
            let mut da3 = dense_backward(&s.conv3, &dh, &t[6], gd1w, gd1b);
            relu_mask(&mut da3, &s.conv3);

            let mut dp2 = vec![0.0; shapes.pool2.len()];
            conv_backward(&s.pool2, shapes.pool2, &da3, &t[4], f3, gw3, gb3, Some(&mut dp2));
            let mut da2 = maxpool_backward(&dp2, &s.pool2_idx, shapes.conv2.len());
            relu_mask(&mut da2, &s.conv2);

            let mut dp1 = vec![0.0; shapes.pool1.len()];
            conv_backward(&s.pool1, shapes.pool1, &da2, &t[2], f2, gw2, gb2, Some(&mut dp1));
            let mut da1 = maxpool_backward(&dp1, &s.pool1_idx, shapes.conv1.len());
            relu_mask(&mut da1, &s.conv1);
            conv_backward(&s.input, shapes.input, &da1, &t[0], f1, gw1, gb1, None);
        }
        Ok(Gradients(g))
    }

    /// Class probabilities, processed in chunks to bound cache memory.
    pub fn predict_proba(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(8) {
            out.extend(self.forward(chunk)?.probs);
        }
        Ok(out)
    }

    /// Argmax class per input; ties go to the lowest index.
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(inputs)?
            .iter()
            .map(|p| argmax_first(p))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        CnnTrainConfig {
            epochs: 5,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss of every mini-batch before its update.
    pub batch_losses: Vec<f64>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

impl TrainHistory {
    /// `epoch,step,loss` rows.
    pub fn to_csv(&self, batches_per_epoch: usize) -> String {
        let mut s = String::from("epoch,step,loss\n");
        for (i, l) in self.batch_losses.iter().enumerate() {
            let epoch = i.checked_div(batches_per_epoch).unwrap_or(0);
            s.push_str(&format!("{},{},{}\n", epoch + 1, i + 1, l));
        }
        s
    }
}

/// Trains from seeded initialization: one RNG stream drives the weight
/// init and then a fresh shuffle every epoch. The last partial batch is kept.
pub fn train_cnn(
    arch: CnnArchitecture,
    inputs: &[Vec<f64>],
    labels: &[usize],
    cfg: &CnnTrainConfig,
) -> Result<(Cnn, TrainHistory)> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("cnn training split".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: labels.len(),
        });
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Cnn::init(arch, &mut rng)?;
    model.check_batch(inputs)?;
    let targets = OneHotLabels::from_indices(labels, arch.n_classes)?;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let y = OneHotLabels {
                rows: chunk.iter().map(|&i| targets.rows[i].clone()).collect(),
            };
            let cache = model.forward(&batch)?;
            let loss = cross_entropy(&cache.probs, &y)?;
            let grads = model.backward(&cache, &y)?;
            adam_step(&mut model.params, &grads, &cfg.adam)?;
            history.batch_losses.push(loss);
            epoch_total += loss;
            n_batches += 1;
        }
        let mean = epoch_total / n_batches as f64;
        log::debug!("cnn epoch {} loss {mean:.6}", epoch + 1);
        history.epoch_losses.push(mean);
    }
    history.steps = model.params.step;
    Ok((model, history))
}

/// Interleaved HWC image data to the CHW layout used by the network.
pub fn hwc_to_chw(data: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[ch * h * w + y * w + x] = data[(y * w + x) * c + ch];
            }
        }
    }
    out
}
