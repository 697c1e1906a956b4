use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::{self, LayerSpec};
use super::loss::{cross_entropy_with_grad, sample_cross_entropy};
use super::Tensor;
use crate::error::{DpError, Result};
use crate::mask::IndexMask;
use crate::rng::{self, Purpose};

/// Architecture: per-sample input shape plus the layer stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Per-sample activation shapes: `shapes[0]` is the input, `shapes[i + 1]`
    /// the output of layer `i`.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(DpError::config(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, l) in self.layers.iter().enumerate() {
            let next = l
                .output_shape(shapes.last().unwrap())
                .map_err(|e| DpError::config(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        match shapes.last().map(Vec::as_slice) {
            Some([k]) if *k >= 2 => Ok(shapes),
            other => Err(DpError::config(format!(
                "model output must be a vector of at least 2 class logits, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// A contiguous run of flat parameter ids belonging to one tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub layer: usize,
    pub role: ParamRole,
    pub offset: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Bijection between flat parameter ids and `(layer, role, offset)`.
///
/// Each parameterized layer owns its weight block followed by its bias block.
/// Weights are prunable; biases are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    layer_names: Vec<&'static str>,
    total: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (i, l) in spec.layers.iter().enumerate() {
            if let Some(shape) = l.weight_shape() {
                let len = shape.iter().product();
                blocks.push(ParamBlock {
                    layer: i,
                    role: ParamRole::Weight,
                    offset,
                    len,
                });
                offset += len;
            }
            if let Some(len) = l.bias_len() {
                blocks.push(ParamBlock {
                    layer: i,
                    role: ParamRole::Bias,
                    offset,
                    len,
                });
                offset += len;
            }
        }
        Self {
            blocks,
            layer_names: spec.layers.iter().map(LayerSpec::name).collect(),
            total: offset,
        }
    }

    /// Total number of parameters (weights and biases).
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn weight_blocks(&self) -> impl Iterator<Item = &ParamBlock> {
        self.blocks.iter().filter(|b| b.role == ParamRole::Weight)
    }

    pub fn weight_block(&self, layer: usize) -> Option<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.layer == layer && b.role == ParamRole::Weight)
    }

    pub fn bias_block(&self, layer: usize) -> Option<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.layer == layer && b.role == ParamRole::Bias)
    }

    /// The block containing `flat`, if the id is in range.
    pub fn block_of(&self, flat: usize) -> Option<&ParamBlock> {
        let i = self.blocks.partition_point(|b| b.offset + b.len <= flat);
        self.blocks.get(i).filter(|b| b.range().contains(&flat))
    }

    /// `(layer, role, offset within the tensor)` for a flat id.
    pub fn locate(&self, flat: usize) -> Option<(usize, ParamRole, usize)> {
        self.block_of(flat)
            .map(|b| (b.layer, b.role, flat - b.offset))
    }

    pub fn flat_id(&self, layer: usize, role: ParamRole, offset: usize) -> Option<usize> {
        self.blocks
            .iter()
            .find(|b| b.layer == layer && b.role == role && offset < b.len)
            .map(|b| b.offset + offset)
    }

    pub fn is_prunable(&self, flat: usize) -> bool {
        matches!(self.block_of(flat), Some(b) if b.role == ParamRole::Weight)
    }

    /// Every prunable (weight) id, ascending.
    pub fn prunable_ids(&self) -> Vec<usize> {
        self.weight_blocks().flat_map(ParamBlock::range).collect()
    }

    /// Every parameter id, ascending.
    pub fn all_ids(&self) -> Vec<usize> {
        (0..self.total).collect()
    }

    /// Human-readable provenance of a flat id, e.g. `layer 2 (conv2d) weight`.
    pub fn describe(&self, flat: usize) -> String {
        match self.block_of(flat) {
            Some(b) => self.describe_block(b),
            None => format!("parameter {flat} (out of range)"),
        }
    }

    fn describe_block(&self, b: &ParamBlock) -> String {
        let role = match b.role {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
        };
        format!("layer {} ({}) {role}", b.layer, self.layer_names[b.layer])
    }
}

/// Per-example gradients of one minibatch, restricted to a column mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleGrads {
    batch_size: usize,
    grads: Vec<f64>,
    index_map: IndexMask,
}

impl PerSampleGrads {
    pub fn new(batch_size: usize, grads: Vec<f64>, index_map: IndexMask) -> Result<Self> {
        if grads.len() != batch_size * index_map.len() {
            return Err(DpError::Internal(format!(
                "per-sample gradient matrix has {} entries, expected {} x {}",
                grads.len(),
                batch_size,
                index_map.len()
            )));
        }
        Ok(Self {
            batch_size,
            grads,
            index_map,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_columns(&self) -> usize {
        self.index_map.len()
    }

    pub fn index_map(&self) -> &IndexMask {
        &self.index_map
    }

    pub fn row(&self, b: usize) -> &[f64] {
        let k = self.num_columns();
        &self.grads[b * k..(b + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.batch_size).map(move |b| self.row(b))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.grads
    }

    pub(crate) fn rows_mut(&mut self) -> Vec<&mut [f64]> {
        let k = self.num_columns();
        if k == 0 {
            return Vec::new();
        }
        self.grads.chunks_mut(k).collect()
    }
}

/// Reusable per-thread buffers for single-sample passes.
#[derive(Debug)]
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

/// A layered network with all parameters in one flat vector.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    shapes: Vec<Vec<usize>>,
    layout: Arc<ParamLayout>,
    params: Vec<f64>,
}

impl Model {
    /// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let mut rng = rng::stream(seed, Purpose::Init, 0);
        let layout = Arc::clone(&model.layout);
        for block in layout.weight_blocks() {
            let bound = (6.0 / model.spec.layers[block.layer].fan_in() as f64).sqrt();
            for p in &mut model.params[block.range()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let params = vec![0.0; ParamLayout::new(&spec).total()];
        Self::with_params(spec, params)
    }

    pub fn with_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        let shapes = spec.activation_shapes()?;
        let layout = Arc::new(ParamLayout::new(&spec));
        if params.len() != layout.total() {
            return Err(DpError::config(format!(
                "model needs {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        Ok(Self {
            spec,
            shapes,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    /// Mask of every parameter id.
    pub fn full_mask(&self) -> IndexMask {
        IndexMask::full(&self.layout)
    }

    fn layer_params(&self, layer: usize) -> (&[f64], &[f64]) {
        let w = self
            .layout
            .weight_block(layer)
            .map_or(&[][..], |b| &self.params[b.range()]);
        let bias = self
            .layout
            .bias_block(layer)
            .map_or(&[][..], |b| &self.params[b.range()]);
        (w, bias)
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() < 2 || batch.item_shape() != self.spec.input_shape.as_slice() {
            return Err(DpError::config(format!(
                "batch shape {:?} does not match model input (B, {:?})",
                batch.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    pub(crate) fn workspace(&self) -> Workspace {
        let max = self
            .shapes
            .iter()
            .map(|s| s.iter().product())
            .max()
            .unwrap_or(0);
        Workspace {
            acts: self
                .shapes
                .iter()
                .map(|s| vec![0.0; s.iter().product()])
                .collect(),
            grad_a: vec![0.0; max],
            grad_b: vec![0.0; max],
        }
    }

    /// Forward pass of one sample; the logits end up in `ws.acts.last()`.
    fn forward_sample(&self, input: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(input);
        for (i, spec) in self.spec.layers.iter().enumerate() {
            let (w, b) = self.layer_params(i);
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            layer::forward(spec, &self.shapes[i], &head[i], w, b, &mut tail[0]);
        }
    }

    /// Logits for a `(B, input_shape...)` batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let k = self.num_classes();
        let mut ws = self.workspace();
        let mut out = Vec::with_capacity(batch.batch_len() * k);
        for b in 0..batch.batch_len() {
            self.forward_sample(batch.item(b), &mut ws);
            out.extend_from_slice(ws.acts.last().unwrap());
        }
        Tensor::new(vec![batch.batch_len(), k], out)
    }

    /// Backward pass for the sample currently held in `ws`, given the logit
    /// gradient in `ws.grad_a`. Accumulates into `grad` (length = num_params).
    fn backward_sample(&self, ws: &mut Workspace, grad: &mut [f64]) {
        let n_layers = self.spec.layers.len();
        for i in (0..n_layers).rev() {
            let spec = &self.spec.layers[i];
            let (w, _) = self.layer_params(i);
            let out_len: usize = self.shapes[i + 1].iter().product();
            let in_len: usize = self.shapes[i].iter().product();
            let (gw, gb) = self.grad_slices(i, grad);
            let grad_in = (i > 0).then(|| &mut ws.grad_b[..in_len]);
            layer::backward(
                spec,
                &self.shapes[i],
                &ws.acts[i],
                w,
                &ws.grad_a[..out_len],
                gw,
                gb,
                grad_in,
            );
            std::mem::swap(&mut ws.grad_a, &mut ws.grad_b);
        }
    }

    fn grad_slices<'g>(&self, layer: usize, grad: &'g mut [f64]) -> (&'g mut [f64], &'g mut [f64]) {
        match (
            self.layout.weight_block(layer),
            self.layout.bias_block(layer),
        ) {
            (Some(w), Some(b)) => {
                let (left, right) = grad.split_at_mut(b.offset);
                (&mut left[w.range()], &mut right[..b.len])
            }
            (Some(w), None) => (&mut grad[w.range()], &mut []),
            _ => (&mut [], &mut []),
        }
    }

    /// Loss of one sample and its full parameter gradient, written into `grad`.
    pub(crate) fn sample_gradient(
        &self,
        input: &[f64],
        label: usize,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.forward_sample(input, ws);
        let k = self.num_classes();
        let loss = cross_entropy_with_grad(ws.acts.last().unwrap(), label, &mut ws.grad_a[..k])?;
        grad.fill(0.0);
        self.backward_sample(ws, grad);
        Ok(loss)
    }

    /// Logits of one sample and the parameter gradient of `Σ_k weight_k · logit_k`.
    pub(crate) fn logit_gradient(&self, input: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ws = self.workspace();
        self.forward_sample(input, &mut ws);
        let k = self.num_classes();
        ws.grad_a[..k].copy_from_slice(weights);
        let mut grad = vec![0.0; self.num_params()];
        let logits = ws.acts.last().unwrap().clone();
        self.backward_sample(&mut ws, &mut grad);
        (logits, grad)
    }

    /// Loss of one sample without gradients.
    pub(crate) fn sample_loss(
        &self,
        input: &[f64],
        label: usize,
        ws: &mut Workspace,
    ) -> Result<f64> {
        self.forward_sample(input, ws);
        sample_cross_entropy(ws.acts.last().unwrap(), label)
    }

    fn check_finite(&self, grad: &[f64]) -> Result<()> {
        for block in self.layout.blocks() {
            if let Some(v) = grad[block.range()].iter().find(|v| !v.is_finite()) {
                return Err(DpError::Numerical {
                    location: self.layout.describe_block(block),
                    message: format!("non-finite gradient entry {v}"),
                });
            }
        }
        Ok(())
    }

    /// Per-example gradients restricted to `mask`, plus per-example losses.
    ///
    /// Rows are computed in parallel; row `b` always belongs to sample `b`.
    pub fn per_sample_gradients_with_loss(
        &self,
        batch: &Tensor,
        labels: &[usize],
        mask: &IndexMask,
    ) -> Result<(PerSampleGrads, Vec<f64>)> {
        self.check_batch(batch)?;
        if labels.len() != batch.batch_len() {
            return Err(DpError::config(format!(
                "{} samples but {} labels",
                batch.batch_len(),
                labels.len()
            )));
        }
        if mask.universe() != self.num_params() {
            return Err(DpError::config(format!(
                "mask built for {} parameters, model has {}",
                mask.universe(),
                self.num_params()
            )));
        }
        let n = batch.batch_len();
        let k = mask.len();
        let cols = mask.indices();
        let mut out = vec![0.0; n * k];
        let mut losses = vec![0.0; n];
        let p = self.num_params();

        let work = |ws: &mut (Workspace, Vec<f64>), b: usize, row: &mut [f64], loss: &mut f64| {
            let (ws, full) = ws;
            *loss = self.sample_gradient(batch.item(b), labels[b], ws, full)?;
            self.check_finite(full)?;
            for (dst, &c) in row.iter_mut().zip(cols) {
                *dst = full[c];
            }
            Ok::<(), DpError>(())
        };
        let init = || (self.workspace(), vec![0.0; p]);

        if k == 0 {
            losses
                .par_iter_mut()
                .enumerate()
                .try_for_each_init(init, |ws, (b, loss)| work(ws, b, &mut [], loss))?;
        } else {
            out.par_chunks_mut(k)
                .zip(losses.par_iter_mut())
                .enumerate()
                .try_for_each_init(init, |ws, (b, (row, loss))| work(ws, b, row, loss))?;
        }
        Ok((PerSampleGrads::new(n, out, mask.clone())?, losses))
    }

    pub fn per_sample_gradients(
        &self,
        batch: &Tensor,
        labels: &[usize],
        mask: &IndexMask,
    ) -> Result<PerSampleGrads> {
        self.per_sample_gradients_with_loss(batch, labels, mask)
            .map(|(g, _)| g)
    }

    /// Gradient of the summed loss over the batch and the summed loss.
    ///
    /// Runs the whole batch forward, then backpropagates layer by layer with
    /// parameter gradients accumulated across samples inside each layer.
    pub fn batch_loss_gradient(&self, batch: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, f64)> {
        self.check_batch(batch)?;
        let n = batch.batch_len();
        if labels.len() != n {
            return Err(DpError::config("labels do not match batch"));
        }
        let lens: Vec<usize> = self.shapes.iter().map(|s| s.iter().product()).collect();
        let mut acts: Vec<Vec<f64>> = lens.iter().map(|&l| vec![0.0; l * n]).collect();
        acts[0].copy_from_slice(batch.data());
        for (i, spec) in self.spec.layers.iter().enumerate() {
            let (w, b) = self.layer_params(i);
            let (head, tail) = acts.split_at_mut(i + 1);
            for s in 0..n {
                layer::forward(
                    spec,
                    &self.shapes[i],
                    &head[i][s * lens[i]..(s + 1) * lens[i]],
                    w,
                    b,
                    &mut tail[0][s * lens[i + 1]..(s + 1) * lens[i + 1]],
                );
            }
        }
        let k = self.num_classes();
        let mut grad_out = vec![0.0; n * k];
        let mut total_loss = 0.0;
        for s in 0..n {
            total_loss += cross_entropy_with_grad(
                &acts.last().unwrap()[s * k..(s + 1) * k],
                labels[s],
                &mut grad_out[s * k..(s + 1) * k],
            )?;
        }
        let mut grad = vec![0.0; self.num_params()];
        for i in (0..self.spec.layers.len()).rev() {
            let spec = &self.spec.layers[i];
            let (w, _) = self.layer_params(i);
            let mut grad_in = vec![0.0; if i > 0 { n * lens[i] } else { 0 }];
            let (gw, gb) = self.grad_slices(i, &mut grad);
            for s in 0..n {
                let gi = (i > 0).then(|| &mut grad_in[s * lens[i]..(s + 1) * lens[i]]);
                layer::backward(
                    spec,
                    &self.shapes[i],
                    &acts[i][s * lens[i]..(s + 1) * lens[i]],
                    w,
                    &grad_out[s * lens[i + 1]..(s + 1) * lens[i + 1]],
                    gw,
                    gb,
                    gi,
                );
            }
            grad_out = grad_in;
        }
        self.check_finite(&grad)?;
        Ok((grad, total_loss))
    }

    /// Mean cross-entropy over a dataset-sized tensor, evaluated sample by sample.
    pub fn mean_loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut ws = self.workspace();
        let mut total = 0.0;
        for (b, &label) in labels.iter().enumerate() {
            total += self.sample_loss(batch.item(b), label, &mut ws)?;
        }
        Ok(total / labels.len().max(1) as f64)
    }
}
