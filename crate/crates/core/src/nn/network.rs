use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::{dot, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Affine map `y = W x + b` with `W` stored as `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Uniform in `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Tensor::new(vec![fan_out, fan_in], values).expect("consistent shape"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_out, fan_in]),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.fan_in() {
            return Err(Error::Shape(format!(
                "layer expects width {}, got {}",
                self.fan_in(),
                input.cols()
            )));
        }
        let (rows, out) = (input.rows(), self.fan_out());
        let mut values = Vec::with_capacity(rows * out);
        for x in input.row_iter().take(rows) {
            for (o, b) in self.bias.iter().enumerate() {
                values.push(dot(x, self.weight.row(o)) + b);
            }
        }
        Tensor::new(vec![rows, out], values)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, input: &Tensor, dout: &Tensor, grad: &mut LinearGrad) -> Tensor {
        let (fan_in, fan_out) = (self.fan_in(), self.fan_out());
        let mut dinput = Tensor::zeros(&[input.rows(), fan_in]);
        for r in 0..input.rows() {
            let x = input.row(r);
            let dy = dout.row(r);
            let dx = dinput.row_mut(r);
            for o in 0..fan_out {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                let w = self.weight.row(o);
                let gw = &mut grad.weight[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    gw[i] += g * x[i];
                    dx[i] += g * w[i];
                }
            }
        }
        dinput
    }

    fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.values_mut(), &mut self.bias]
    }

    fn write_bytes(&self, out: &mut Vec<u8>) {
        for v in self.weight.values().iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Gradient buffers mirroring one [`Linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearGrad {
    fn zeros_like(layer: &Linear) -> Self {
        Self {
            weight: vec![0.0; layer.weight.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// MLP feature extractor `F`: ReLU between layers, linear final layer.
#[derive(Debug)]
pub struct FeatureExtractor {
    layers: Vec<Linear>,
    id: u64,
    generation: u64,
}

impl Clone for FeatureExtractor {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl PartialEq for FeatureExtractor {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations kept from a forward pass, consumed by [`backward`].
#[derive(Debug)]
pub struct ForwardTrace {
    owner: (u64, u64),
    /// Input to every layer (index 0 is the batch itself).
    inputs: Vec<Tensor>,
    /// Pre-activation output of every layer; the last one is the feature.
    pre: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn features(&self) -> &Tensor {
        self.pre.last().expect("non-empty trace")
    }

    pub fn pre_activations(&self) -> &[Tensor] {
        &self.pre
    }
}

impl FeatureExtractor {
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(format!(
                "feature extractor needs at least an input and an output dimension, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer dimensions must be positive, got {layer_dims:?}"
            )));
        }
        let mut rng = stream_rng(seed, "extractor", 0);
        let layers = layer_dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], &mut rng))
            .collect();
        Ok(Self::from_layers(layers).expect("dims chain by construction"))
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("feature extractor needs a layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
            if pair[0].bias.len() != pair[0].fan_out() {
                return Err(Error::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self {
            layers,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Mutable access to the layers. Invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Linear] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map(Linear::fan_out).unwrap_or(0)
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Linear::fan_out))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward_features(&self, batch: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&current)?;
            let next = if i < last {
                let mut a = z.clone();
                a.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                a
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Ok((
            current,
            ForwardTrace {
                owner: (self.id, self.generation),
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without keeping a trace.
    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        let mut current = batch.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer.forward(&current)?;
            if i < last {
                current.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(current)
    }

    /// Parameter slices in a fixed order (weight, bias per layer).
    /// Invalidates outstanding traces.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    /// Little-endian bytes of every parameter, prefixed by the layer dims.
    pub fn parameter_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.parameter_count() + 64);
        for d in self.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for l in &self.layers {
            l.write_bytes(&mut out);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// One task head: a linear map from features to `classes * slots` logits.
/// With rotation the slots are ordered `rot * classes + local_class`,
/// so the first `classes` logits are the unrotated ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub linear: Linear,
    pub classes: usize,
    pub rotations: bool,
}

impl Head {
    pub fn slots_per_class(&self) -> usize {
        if self.rotations {
            4
        } else {
            1
        }
    }

    pub fn width(&self) -> usize {
        self.classes * self.slots_per_class()
    }
}

/// Ordered aggregate of task heads; logits are concatenated in head order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeadSet {
    heads: Vec<Head>,
}

impl HeadSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_heads(heads: Vec<Head>) -> Self {
        Self { heads }
    }

    pub fn push<R: Rng>(&mut self, feature_dim: usize, classes: usize, rotations: bool, rng: &mut R) {
        let slots = if rotations { 4 } else { 1 };
        self.heads.push(Head {
            linear: Linear::init(feature_dim, classes * slots, rng),
            classes,
            rotations,
        });
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [Head] {
        &mut self.heads
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn width(&self) -> usize {
        self.heads.iter().map(Head::width).sum()
    }

    /// Column offset of each head inside the concatenated logits.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.heads
            .iter()
            .map(|h| {
                let o = acc;
                acc += h.width();
                o
            })
            .collect()
    }

    pub fn forward_logits(&self, features: &Tensor) -> Result<Tensor> {
        if self.heads.is_empty() {
            return Err(Error::State("head set is empty".into()));
        }
        let parts = self
            .heads
            .iter()
            .map(|h| h.linear.forward(features))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat_columns(&parts)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.heads
            .iter_mut()
            .flat_map(|h| h.linear.param_slices_mut())
            .collect()
    }
}

/// Upstream gradients entering [`backward`]: with respect to the
/// concatenated logits, the features, or both (they are summed at the
/// feature layer).
#[derive(Debug, Default)]
pub struct Upstream {
    pub dlogits: Option<Tensor>,
    pub dfeatures: Option<Tensor>,
}

/// Parameter gradients for an extractor and, optionally, a head set, in
/// the same order as their `param_slices_mut`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub extractor: Vec<LinearGrad>,
    pub heads: Vec<LinearGrad>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.extractor
            .iter()
            .chain(&self.heads)
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.extractor.iter_mut().chain(self.heads.iter_mut()) {
            g.weight.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// Backpropagates through the heads (if `dlogits` is given) and the
/// extractor. The trace must come from `extractor` in its current state.
pub fn backward(
    extractor: &FeatureExtractor,
    heads: Option<&HeadSet>,
    trace: ForwardTrace,
    upstream: Upstream,
) -> Result<Gradients> {
    if trace.owner != (extractor.id, extractor.generation) || trace.depth() != extractor.layers.len()
    {
        return Err(Error::State(
            "forward trace does not belong to this extractor state".into(),
        ));
    }
    let features = trace.features();
    let (batch, feature_dim) = (features.rows(), features.cols());
    let mut dfeatures = Tensor::zeros(&[batch, feature_dim]);

    let mut head_grads = Vec::new();
    if let Some(heads) = heads {
        head_grads = heads
            .heads
            .iter()
            .map(|h| LinearGrad::zeros_like(&h.linear))
            .collect();
        if let Some(dlogits) = &upstream.dlogits {
            if dlogits.rows() != batch || dlogits.cols() != heads.width() {
                return Err(Error::Shape(format!(
                    "logit gradient {:?} does not match batch {batch} x width {}",
                    dlogits.shape(),
                    heads.width()
                )));
            }
            for ((head, grad), offset) in heads.heads.iter().zip(&mut head_grads).zip(heads.offsets()) {
                let slice = dlogits.column_slice(offset, offset + head.width());
                let dx = head.linear.backward(features, &slice, grad);
                dfeatures.add_scaled(&dx, 1.0)?;
            }
        }
    } else if upstream.dlogits.is_some() {
        return Err(Error::State("logit gradient given without heads".into()));
    }
    if let Some(df) = &upstream.dfeatures {
        dfeatures.add_scaled(df, 1.0)?;
    }

    let mut grads: Vec<LinearGrad> = extractor.layers.iter().map(LinearGrad::zeros_like).collect();
    let mut dout = dfeatures;
    let last = extractor.layers.len() - 1;
    for i in (0..=last).rev() {
        if i < last {
            let pre = &trace.pre[i];
            for (d, z) in dout.values_mut().iter_mut().zip(pre.values()) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        dout = extractor.layers[i].backward(&trace.inputs[i], &dout, &mut grads[i]);
    }
    Ok(Gradients {
        extractor: grads,
        heads: head_grads,
    })
}
