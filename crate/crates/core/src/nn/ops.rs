//! Layer primitives with explicit forward and backward passes.
//!
//! Image tensors are `[batch, channels, height, width]`; feature tensors are
//! `[batch, features]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul, Real, Tensor};

fn dims4<T: Real>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [b, c, h, w] => Ok((b, c, h, w)),
        ref s => Err(Error::shape(format!("{what}: expected 4-D tensor, got {s:?}"))),
    }
}

fn dims2<T: Real>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [b, f] => Ok((b, f)),
        ref s => Err(Error::shape(format!("{what}: expected 2-D tensor, got {s:?}"))),
    }
}

fn conv_out(len: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("conv2d: stride must be >= 1"));
    }
    let padded = len + 2 * padding;
    if padded < k {
        return Err(Error::shape(format!(
            "conv2d: kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new<T: Real>(
        input: &Tensor<T>,
        kernels: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<(usize, usize, Self)> {
        let (b, c, h, w) = dims4(input, "conv2d input")?;
        let (o, kc, kh, kw) = dims4(kernels, "conv2d kernels")?;
        if kc != c {
            return Err(Error::shape(format!(
                "conv2d: kernels expect {kc} input channels, input has {c}"
            )));
        }
        let oh = conv_out(h, kh, stride, pad)?;
        let ow = conv_out(w, kw, stride, pad)?;
        Ok((b, o, Self { c, h, w, kh, kw, stride, pad, oh, ow }))
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample into a `[c*kh*kw, oh*ow]` column matrix.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let area = self.out_area();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * area..(row + 1) * area];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back, accumulating.
    fn col2im<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let area = self.out_area();
        for ci in 0..self.c {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * area..(row + 1) * area];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, &v) in src[oy * self.ow..(oy + 1) * self.ow].iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] = dst[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation. `kernels` is `[out, in, kh, kw]`, `bias` is `[out]`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (b, o, g) = ConvGeom::new(input, kernels, stride, padding)?;
    if bias.shape() != [o] {
        return Err(Error::shape(format!(
            "conv2d: bias shape {:?}, expected [{o}]",
            bias.shape()
        )));
    }
    let (patch, area) = (g.patch(), g.out_area());
    let mut out = Tensor::zeros(&[b, o, g.oh, g.ow]);
    let mut cols = vec![T::zero(); patch * area];
    let in_stride = g.c * g.h * g.w;
    for n in 0..b {
        g.im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &mut cols);
        let dst = &mut out.data_mut()[n * o * area..(n + 1) * o * area];
        for (oc, row) in dst.chunks_mut(area).enumerate() {
            row.fill(bias.data()[oc]);
        }
        matmul(o, patch, area, kernels.data(), false, &cols, false, dst, true);
    }
    Ok(out)
}

pub struct Conv2dGrads<T: Real> {
    pub input: Tensor<T>,
    /// `None` when parameter gradients were not requested.
    pub kernels: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
    param_grads: bool,
) -> Result<Conv2dGrads<T>> {
    let (b, o, g) = ConvGeom::new(input, kernels, stride, padding)?;
    if grad_out.shape() != [b, o, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv2d backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [b, o, g.oh, g.ow]
        )));
    }
    let (patch, area) = (g.patch(), g.out_area());
    let in_stride = g.c * g.h * g.w;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_k = param_grads.then(|| Tensor::zeros(kernels.shape()));
    let mut grad_b = param_grads.then(|| Tensor::zeros(&[o]));
    let mut cols = vec![T::zero(); patch * area];
    let mut dcols = vec![T::zero(); patch * area];
    for n in 0..b {
        let go = &grad_out.data()[n * o * area..(n + 1) * o * area];
        if let (Some(gk), Some(gb)) = (grad_k.as_mut(), grad_b.as_mut()) {
            g.im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &mut cols);
            matmul(o, area, patch, go, false, &cols, true, gk.data_mut(), true);
            for (oc, row) in go.chunks(area).enumerate() {
                let s: T = row.iter().copied().sum();
                gb.data_mut()[oc] = gb.data()[oc] + s;
            }
        }
        matmul(patch, o, area, kernels.data(), true, go, false, &mut dcols, false);
        g.col2im(&dcols, &mut grad_in.data_mut()[n * in_stride..(n + 1) * in_stride]);
    }
    Ok(Conv2dGrads {
        input: grad_in,
        kernels: grad_k,
        bias: grad_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnMode {
    Train,
    Infer,
}

/// Running statistics maintained by a batch-norm layer.
#[derive(Debug, Clone)]
pub struct RunningStats<T: Real> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub momentum: f64,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize, momentum: f64) -> Self {
        Self {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], T::one()),
            momentum,
        }
    }
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T: Real> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn bn_layout<T: Real>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = input.shape();
    if s.len() < 2 {
        return Err(Error::shape(format!("batchnorm: input shape {s:?}")));
    }
    let (b, c) = (s[0], s[1]);
    let spatial: usize = s[2..].iter().product();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "batchnorm: gamma {:?} / beta {:?} do not match {c} channels",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok((b, c, spatial))
}

/// Training-mode batch norm: per-channel statistics over batch×spatial with
/// the population variance.
pub fn batchnorm_train<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (b, c, spatial) = bn_layout(input, gamma, beta)?;
    if b < 2 {
        return Err(Error::shape(
            "batchnorm: training mode needs a batch of at least 2",
        ));
    }
    let count = (b * spatial) as f64;
    let x = input.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * spatial;
            mean[ch] += x[base..base + spatial].iter().map(|v| v.f64()).sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * spatial;
            var[ch] += x[base..base + spatial]
                .iter()
                .map(|v| (v.f64() - mean[ch]).powi(2))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();

    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * spatial;
            let (gm, bt) = (gamma.data()[ch].f64(), beta.data()[ch].f64());
            for i in base..base + spatial {
                let h = (x[i].f64() - mean[ch]) * inv_std[ch];
                x_hat.data_mut()[i] = T::of(h);
                out.data_mut()[i] = T::of(gm * h + bt);
            }
        }
    }
    Ok((
        out,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

pub fn batchnorm_infer<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (b, c, spatial) = bn_layout(input, gamma, beta)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(Error::shape("batchnorm: running statistics do not match channels"));
    }
    let mut out = Tensor::zeros(input.shape());
    for ch in 0..c {
        let scale = gamma.data()[ch].f64() / (running_var.data()[ch].f64() + eps).sqrt();
        let shift = beta.data()[ch].f64() - running_mean.data()[ch].f64() * scale;
        let (scale, shift) = (T::of(scale), T::of(shift));
        for n in 0..b {
            let base = (n * c + ch) * spatial;
            for i in base..base + spatial {
                out.data_mut()[i] = input.data()[i] * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Batch norm with running-statistics bookkeeping. Train mode normalizes
/// with batch statistics and folds them into `stats` by exponential moving
/// average; infer mode normalizes with `stats`.
pub fn batchnorm<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    stats: &mut RunningStats<T>,
    mode: BnMode,
    eps: f64,
) -> Result<Tensor<T>> {
    match mode {
        BnMode::Train => {
            let (out, cache) = batchnorm_train(input, gamma, beta, eps)?;
            stats.update(&cache);
            Ok(out)
        }
        BnMode::Infer => batchnorm_infer(input, gamma, beta, &stats.mean, &stats.var, eps),
    }
}

impl<T: Real> RunningStats<T> {
    pub fn update(&mut self, cache: &BnCache<T>) {
        let m = self.momentum;
        for (r, &b) in self.mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = T::of((1.0 - m) * r.f64() + m * b);
        }
        for (r, &b) in self.var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = T::of((1.0 - m) * r.f64() + m * b);
        }
    }
}

pub struct BnGrads<T: Real> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batchnorm_train_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(Error::shape("batchnorm backward: gradient shape mismatch"));
    }
    let s = grad_out.shape();
    let (b, c) = (s[0], s[1]);
    let spatial: usize = s[2..].iter().product();
    let count = (b * spatial) as f64;
    let (dy, xh) = (grad_out.data(), cache.x_hat.data());
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xh = vec![0.0f64; c];
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * spatial;
            for i in base..base + spatial {
                sum_dy[ch] += dy[i].f64();
                sum_dy_xh[ch] += dy[i].f64() * xh[i].f64();
            }
        }
    }
    let mut dx = Tensor::zeros(s);
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * spatial;
            let k = gamma.data()[ch].f64() * cache.inv_std[ch] / count;
            for i in base..base + spatial {
                let v = k * (count * dy[i].f64() - sum_dy[ch] - xh[i].f64() * sum_dy_xh[ch]);
                dx.data_mut()[i] = T::of(v);
            }
        }
    }
    Ok(BnGrads {
        input: dx,
        gamma: Tensor::from_parts(vec![c], sum_dy_xh.into_iter().map(T::of).collect())?,
        beta: Tensor::from_parts(vec![c], sum_dy.into_iter().map(T::of).collect())?,
    })
}

/// Backward of [`batchnorm_infer`], where the layer is a per-channel affine map.
pub fn batchnorm_infer_backward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let s = input.shape();
    if grad_out.shape() != s {
        return Err(Error::shape("batchnorm backward: gradient shape mismatch"));
    }
    let (b, c) = (s[0], s[1]);
    let spatial: usize = s[2..].iter().product();
    let mut dx = Tensor::zeros(s);
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for ch in 0..c {
        let inv = 1.0 / (running_var.data()[ch].f64() + eps).sqrt();
        let scale = T::of(gamma.data()[ch].f64() * inv);
        let mu = running_mean.data()[ch].f64();
        for n in 0..b {
            let base = (n * c + ch) * spatial;
            for i in base..base + spatial {
                let g = grad_out.data()[i];
                dx.data_mut()[i] = g * scale;
                dbeta[ch] += g.f64();
                dgamma[ch] += g.f64() * (input.data()[i].f64() - mu) * inv;
            }
        }
    }
    Ok(BnGrads {
        input: dx,
        gamma: Tensor::from_parts(vec![c], dgamma.into_iter().map(T::of).collect())?,
        beta: Tensor::from_parts(vec![c], dbeta.into_iter().map(T::of).collect())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => input.map(|v| v.max(T::zero())),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// Needs the forward input for ReLU and the forward output for sigmoid.
pub fn activation_backward<T: Real>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(Error::shape("activation backward: gradient shape mismatch"));
    }
    let data = match kind {
        Activation::Relu => input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect(),
        Activation::Sigmoid => output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&y, &g)| g * y * (T::one() - y))
            .collect(),
    };
    Tensor::from_parts(input.shape().to_vec(), data)
}

/// Non-overlapping `size×size` max pooling (floor on ragged edges).
/// Returns the output and the flat input index of each selected maximum.
pub fn maxpool2d<T: Real>(input: &Tensor<T>, size: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (b, c, h, w) = dims4(input, "maxpool input")?;
    if size == 0 || h < size || w < size {
        return Err(Error::shape(format!(
            "maxpool: window {size} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = (h / size, w / size);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut idx = vec![0usize; b * c * oh * ow];
    let x = input.data();
    for p in 0..b * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = p * h * w + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = p * h * w + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                out.data_mut()[o] = x[best];
                idx[o] = best;
            }
        }
    }
    Ok((out, idx))
}

pub fn maxpool2d_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape("maxpool backward: gradient shape mismatch"));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        dx.data_mut()[i] = dx.data()[i] + g;
    }
    Ok(dx)
}

/// Affine map `y = x·Wᵀ + b` with `weights` shaped `[out, in]`.
pub fn linear<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, f) = dims2(input, "linear input")?;
    let (o, wf) = dims2(weights, "linear weights")?;
    if wf != f {
        return Err(Error::shape(format!(
            "linear: input has {f} features, weights expect {wf}"
        )));
    }
    if bias.shape() != [o] {
        return Err(Error::shape(format!(
            "linear: bias shape {:?}, expected [{o}]",
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[b, o]);
    for row in out.data_mut().chunks_mut(o) {
        row.copy_from_slice(bias.data());
    }
    matmul(b, f, o, input.data(), false, weights.data(), true, out.data_mut(), true);
    Ok(out)
}

pub struct LinearGrads<T: Real> {
    pub input: Tensor<T>,
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    param_grads: bool,
) -> Result<LinearGrads<T>> {
    let (b, f) = dims2(input, "linear input")?;
    let (o, _) = dims2(weights, "linear weights")?;
    if grad_out.shape() != [b, o] {
        return Err(Error::shape("linear backward: gradient shape mismatch"));
    }
    let mut dx = Tensor::zeros(&[b, f]);
    matmul(b, o, f, grad_out.data(), false, weights.data(), false, dx.data_mut(), false);
    let (dw, db) = if param_grads {
        let mut dw = Tensor::zeros(&[o, f]);
        matmul(o, b, f, grad_out.data(), true, input.data(), false, dw.data_mut(), false);
        let mut db = Tensor::zeros(&[o]);
        for row in grad_out.data().chunks(o) {
            for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        (Some(dw), Some(db))
    } else {
        (None, None)
    };
    Ok(LinearGrads {
        input: dx,
        weights: dw,
        bias: db,
    })
}

/// Row-wise softmax, computed in f64 with max subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = dims2(logits, "softmax")?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        out.extend(softmax_row(row).into_iter().map(T::of));
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

fn softmax_row<T: Real>(row: &[T]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
    let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of one row, `-log softmax(row)[label]`, via log-sum-exp.
/// Stays accurate when the true class dominates.
pub fn cross_entropy_row<T: Real>(row: &[T], label: usize) -> f64 {
    let zy = row[label].f64();
    // log(1 + Σ_{c≠y} exp(z_c − z_y)) when z_y is the maximum
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
    if zy >= max {
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label)
            .map(|(_, v)| (v.f64() - zy).exp())
            .sum();
        rest.ln_1p()
    } else {
        let lse = max + row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
        lse - zy
    }
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelRange { label, classes });
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits,
/// `(P − onehot) / batch`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (b, c) = dims2(logits, "softmax_cross_entropy")?;
    check_labels(labels, b, c)?;
    if b == 0 {
        return Err(Error::Empty("softmax_cross_entropy on empty batch".into()));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * c);
    for (row, &y) in logits.data().chunks(c).zip(labels) {
        loss += cross_entropy_row(row, y);
        let mut p = softmax_row(row);
        // P_y − 1 = −Σ_{c≠y} P_c, without cancellation
        p[y] = -p.iter().enumerate().filter(|&(i, _)| i != y).map(|(_, v)| v).sum::<f64>();
        grad.extend(p.into_iter().map(|v| T::of(v / b as f64)));
    }
    Ok((loss / b as f64, Tensor::from_parts(vec![b, c], grad)?))
}

/// Per-sample cross-entropy losses.
pub fn cross_entropy_per_sample<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<Vec<f64>> {
    let (b, c) = dims2(logits, "cross_entropy")?;
    check_labels(labels, b, c)?;
    Ok(logits
        .data()
        .chunks(c)
        .zip(labels)
        .map(|(row, &y)| cross_entropy_row(row, y))
        .collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
