//! Layer kinds and their per-sample forward/backward kernels.
//!
//! Kernels operate on one sample at a time. Activations of a sample are flat
//! row-major slices; convolution activations are laid out `(channels, h, w)`
//! and convolution weights `(out_channels, in_channels, kernel_h, kernel_w)`.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution.
    Conv2d {
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    FullyConnected {
        out_features: usize,
        in_features: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Relu,
    Flatten,
    /// Non-overlapping `size × size` average pooling.
    MeanPool {
        size: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
            LayerSpec::MeanPool { .. } => "mean_pool",
        }
    }

    /// Weight tensor shape, for layers that carry weights.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(vec![out_channels, in_channels, kernel_h, kernel_w]),
            LayerSpec::FullyConnected {
                out_features,
                in_features,
                ..
            } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                bias: true,
                ..
            } => Some(out_channels),
            LayerSpec::FullyConnected {
                out_features,
                bias: true,
                ..
            } => Some(out_features),
            _ => None,
        }
    }

    /// Number of inputs feeding each output unit (He initialization).
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            LayerSpec::FullyConnected { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Per-sample output shape for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |what: String| {
            Err(DpError::config(format!(
                "{} layer cannot take input of shape {input:?}: {what}",
                self.name()
            )))
        };
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let [c, h, w] = input else {
                    return mismatch("expected (channels, height, width)".into());
                };
                if *c != in_channels {
                    return mismatch(format!("expected {in_channels} channels"));
                }
                if kernel_h == 0 || kernel_w == 0 || *h < kernel_h || *w < kernel_w {
                    return mismatch(format!("kernel {kernel_h}x{kernel_w} does not fit"));
                }
                Ok(vec![out_channels, h - kernel_h + 1, w - kernel_w + 1])
            }
            LayerSpec::FullyConnected {
                out_features,
                in_features,
                ..
            } => {
                if input != [in_features] {
                    return mismatch(format!("expected a flat vector of {in_features}"));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::MeanPool { size } => {
                let [c, h, w] = input else {
                    return mismatch("expected (channels, height, width)".into());
                };
                if size == 0 || h % size != 0 || w % size != 0 {
                    return mismatch(format!("spatial dims must be divisible by {size}"));
                }
                Ok(vec![*c, h / size, w / size])
            }
        }
    }
}

/// Forward pass of one layer for one sample.
///
/// `in_shape` is the per-sample input shape; `weight`/`bias` are empty for
/// parameter-free layers.
pub(crate) fn forward(
    spec: &LayerSpec,
    in_shape: &[usize],
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    match *spec {
        LayerSpec::Conv2d {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            ..
        } => {
            let (h, w) = (in_shape[1], in_shape[2]);
            let (oh, ow) = (h - kernel_h + 1, w - kernel_w + 1);
            for o in 0..out_channels {
                let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
                plane.fill(bias.get(o).copied().unwrap_or(0.0));
                for c in 0..in_channels {
                    let src = &input[c * h * w..(c + 1) * h * w];
                    for ky in 0..kernel_h {
                        for kx in 0..kernel_w {
                            let wv =
                                weight[((o * in_channels + c) * kernel_h + ky) * kernel_w + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for y in 0..oh {
                                let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                let dst = &mut plane[y * ow..(y + 1) * ow];
                                for (d, s) in dst.iter_mut().zip(row) {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::FullyConnected {
            out_features,
            in_features,
            ..
        } => {
            for o in 0..out_features {
                let row = &weight[o * in_features..(o + 1) * in_features];
                let dot: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum();
                out[o] = dot + bias.get(o).copied().unwrap_or(0.0);
            }
        }
        LayerSpec::Relu => {
            for (o, &x) in out.iter_mut().zip(input) {
                *o = if x > 0.0 { x } else { 0.0 };
            }
        }
        LayerSpec::Flatten => out.copy_from_slice(input),
        LayerSpec::MeanPool { size } => {
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (h / size, w / size);
            let scale = 1.0 / (size * size) as f64;
            out.fill(0.0);
            for ch in 0..c {
                for y in 0..h {
                    let src = &input[(ch * h + y) * w..(ch * h + y + 1) * w];
                    let dst = &mut out[(ch * oh + y / size) * ow..(ch * oh + y / size + 1) * ow];
                    for (x, s) in src.iter().enumerate() {
                        dst[x / size] += s;
                    }
                }
            }
            for v in out.iter_mut().take(c * oh * ow) {
                *v *= scale;
            }
        }
    }
}

/// Backward pass of one layer for one sample.
///
/// Accumulates parameter gradients into `grad_weight`/`grad_bias` and writes
/// the input gradient into `grad_in` when it is `Some`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    spec: &LayerSpec,
    in_shape: &[usize],
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_in: Option<&mut [f64]>,
) {
    match *spec {
        LayerSpec::Conv2d {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            ..
        } => {
            let (h, w) = (in_shape[1], in_shape[2]);
            let (oh, ow) = (h - kernel_h + 1, w - kernel_w + 1);
            let mut grad_in = grad_in;
            if let Some(gi) = grad_in.as_deref_mut() {
                gi.fill(0.0);
            }
            for o in 0..out_channels {
                let gplane = &grad_out[o * oh * ow..(o + 1) * oh * ow];
                if !grad_bias.is_empty() {
                    grad_bias[o] += gplane.iter().sum::<f64>();
                }
                for c in 0..in_channels {
                    let src = &input[c * h * w..(c + 1) * h * w];
                    for ky in 0..kernel_h {
                        for kx in 0..kernel_w {
                            let widx = ((o * in_channels + c) * kernel_h + ky) * kernel_w + kx;
                            let mut acc = 0.0;
                            for y in 0..oh {
                                let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                let g = &gplane[y * ow..(y + 1) * ow];
                                acc += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                            }
                            grad_weight[widx] += acc;
                            if let Some(gi) = grad_in.as_deref_mut() {
                                let wv = weight[widx];
                                if wv == 0.0 {
                                    continue;
                                }
                                let dst_plane = &mut gi[c * h * w..(c + 1) * h * w];
                                for y in 0..oh {
                                    let dst =
                                        &mut dst_plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                    let g = &gplane[y * ow..(y + 1) * ow];
                                    for (d, gv) in dst.iter_mut().zip(g) {
                                        *d += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::FullyConnected {
            out_features,
            in_features,
            ..
        } => {
            for o in 0..out_features {
                let g = grad_out[o];
                if !grad_bias.is_empty() {
                    grad_bias[o] += g;
                }
                let gw = &mut grad_weight[o * in_features..(o + 1) * in_features];
                for (d, x) in gw.iter_mut().zip(input) {
                    *d += g * x;
                }
            }
            if let Some(gi) = grad_in {
                gi.fill(0.0);
                for o in 0..out_features {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &weight[o * in_features..(o + 1) * in_features];
                    for (d, wv) in gi.iter_mut().zip(row) {
                        *d += g * wv;
                    }
                }
            }
        }
        LayerSpec::Relu => {
            if let Some(gi) = grad_in {
                for ((d, &g), &x) in gi.iter_mut().zip(grad_out).zip(input) {
                    *d = if x > 0.0 { g } else { 0.0 };
                }
            }
        }
        LayerSpec::Flatten => {
            if let Some(gi) = grad_in {
                gi.copy_from_slice(grad_out);
            }
        }
        LayerSpec::MeanPool { size } => {
            if let Some(gi) = grad_in {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / size, w / size);
                let scale = 1.0 / (size * size) as f64;
                for ch in 0..c {
                    for y in 0..h {
                        let g = &grad_out[(ch * oh + y / size) * ow..(ch * oh + y / size + 1) * ow];
                        let dst = &mut gi[(ch * h + y) * w..(ch * h + y + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d = g[x / size] * scale;
                        }
                    }
                }
            }
        }
    }
}
