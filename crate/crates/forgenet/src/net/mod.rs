//! Layers, the sequential model, threshold-layer insertion, and presets.
//!
//! A model is an ordered chain of layers. The `Forge` layer implements the
//! tracked-threshold rule: in tracking mode it records the running maximum
//! of everything it sees and passes inputs through unchanged; in inference
//! mode it zeroes every element whose magnitude is at most
//! `c_ratio * tracked_max`.

pub mod io;
pub mod presets;

use crate::act;
use crate::autodiff::{Tape, VarId};
use crate::conv;
use crate::counters;
use crate::error::{Error, Result};
use crate::tensor::{add_bias, argmax, matmul, Tensor};

/// Behavioral mode of a threshold layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeMode {
    Tracking,
    Inference,
}

/// State owned by one threshold layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgeState {
    /// Running maximum of raw pre-layer activations, non-decreasing while
    /// tracking. Starts at zero.
    b: f64,
    /// Shared threshold ratio; effective threshold is `c_ratio * b`.
    c_ratio: f64,
    mode: ForgeMode,
}

impl Default for ForgeState {
    fn default() -> Self {
        ForgeState {
            b: 0.0,
            c_ratio: 0.0,
            mode: ForgeMode::Inference,
        }
    }
}

impl ForgeState {
    pub fn new() -> Self {
        ForgeState::default()
    }

    pub fn with_parts(b: f64, c_ratio: f64, mode: ForgeMode) -> Result<Self> {
        if c_ratio < 0.0 {
            return Err(Error::Contract(format!(
                "c_ratio must be non-negative, got {c_ratio}"
            )));
        }
        if !b.is_finite() || !c_ratio.is_finite() {
            return Err(Error::Contract("forge state must be finite".into()));
        }
        Ok(ForgeState { b, c_ratio, mode })
    }

    pub fn tracked_max(&self) -> f64 {
        self.b
    }

    pub fn c_ratio(&self) -> f64 {
        self.c_ratio
    }

    pub fn mode(&self) -> ForgeMode {
        self.mode
    }

    /// Effective threshold `c_ratio * b`.
    pub fn threshold(&self) -> f64 {
        self.c_ratio * self.b
    }

    pub fn set_c_ratio(&mut self, c_ratio: f64) -> Result<()> {
        if c_ratio < 0.0 || !c_ratio.is_finite() {
            return Err(Error::Contract(format!(
                "c_ratio must be finite and non-negative, got {c_ratio}"
            )));
        }
        self.c_ratio = c_ratio;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: ForgeMode) {
        self.mode = mode;
    }

    /// One tracking-mode step: update the running maximum, return the input
    /// unchanged.
    pub fn track(&mut self, x: &Tensor) -> Tensor {
        self.b = self.b.max(x.max_element());
        x.clone()
    }

    /// One inference-mode step with the frozen threshold.
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let c_th = self.threshold();
        x.map(|v| act::forge_value(v, c_th))
    }

    /// Mode-dispatched step: tracking updates the maximum and passes the
    /// input through; inference applies the frozen threshold.
    pub fn step(&mut self, x: &Tensor) -> Tensor {
        match self.mode {
            ForgeMode::Tracking => self.track(x),
            ForgeMode::Inference => self.apply(x),
        }
    }
}

/// Elementwise thresholding: zero where |x| <= c_th, identity elsewhere.
pub fn forge_apply(x: &Tensor, c_th: f64) -> Result<Tensor> {
    if c_th < 0.0 {
        return Err(Error::Contract(format!(
            "threshold must be non-negative, got {c_th}"
        )));
    }
    Ok(x.map(|v| act::forge_value(v, c_th)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        /// `[out, in]` weight matrix.
        weight: Tensor,
        /// `[out]` bias.
        bias: Tensor,
    },
    Conv2d {
        /// `[out_channels, in_channels, kh, kw]` kernels.
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    Silu,
    Gelu,
    Forge(ForgeState),
    Flatten,
}

impl Layer {
    pub fn dense(weight: Tensor, bias: Tensor) -> Result<Layer> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(Error::dimension(
                "dense bias",
                format!("[{out}]"),
                format!("{:?}", bias.shape()),
            ));
        }
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::Numeric("dense parameters must be finite".into()));
        }
        Ok(Layer::Dense { weight, bias })
    }

    pub fn conv2d(kernel: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Layer> {
        let [oc, _, _, _] = conv::nchw_dims(&kernel)?;
        if bias.shape() != [oc] {
            return Err(Error::dimension(
                "conv bias",
                format!("[{oc}]"),
                format!("{:?}", bias.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::Contract("conv stride must be >= 1".into()));
        }
        if !kernel.is_finite() || !bias.is_finite() {
            return Err(Error::Numeric("conv parameters must be finite".into()));
        }
        Ok(Layer::Conv2d {
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::Silu => "silu",
            Layer::Gelu => "gelu",
            Layer::Forge(_) => "forge",
            Layer::Flatten => "flatten",
        }
    }

    /// True for layers realizable as an explicit matrix (dense, conv).
    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    /// The explicit matrix the layer multiplies its (patch) inputs by:
    /// the weight matrix for dense layers, the `[OC, C*KH*KW]` kernel
    /// matrix for convolutions.
    pub fn explicit_matrix(&self) -> Option<Tensor> {
        match self {
            Layer::Dense { weight, .. } => Some(weight.clone()),
            Layer::Conv2d { kernel, .. } => conv::kernel_matrix(kernel).ok(),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense { weight, bias } => Some((weight, bias)),
            Layer::Conv2d { kernel, bias, .. } => Some((kernel, bias)),
            _ => None,
        }
    }

    /// Inference-mode application. Tracking-mode updates go through
    /// [`Model::forward_tracking`].
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, bias } => {
                let wt = weight.transposed()?;
                add_bias(&matmul(x, &wt)?, bias)
            }
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => Ok(conv::conv2d_forward(x, kernel, bias, *stride, *padding)?.0),
            Layer::Relu => Ok(x.map(act::relu)),
            Layer::Silu => Ok(x.map(act::silu)),
            Layer::Gelu => Ok(x.map(act::gelu)),
            Layer::Forge(state) => Ok(state.apply(x)),
            Layer::Flatten => {
                let shape = x.shape();
                if shape.len() < 2 {
                    return Err(Error::dimension(
                        "flatten",
                        "rank >= 2 (batch leading)",
                        format!("{shape:?}"),
                    ));
                }
                let rest: usize = shape[1..].iter().product();
                x.reshape(vec![shape[0], rest])
            }
        }
    }
}

/// Model metadata carried through serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub name: String,
    /// Per-sample input shape (no batch axis).
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub seed: u64,
}

/// An ordered chain of layers implementing a composite classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub meta: ModelMeta,
}

/// Which linear layers receive a threshold layer in front of them.
#[derive(Debug, Clone, PartialEq)]
pub enum InsertPolicy {
    /// Before every dense/conv layer.
    All,
    /// Before the k-th linear layers only (0-based, in chain order).
    LinearIndices(Vec<usize>),
}

/// Handles returned by [`Model::forward_on_tape`] for parameter gradients.
pub struct TapeForward {
    pub output: VarId,
    /// `(layer_index, weight_id, bias_id)` for every dense/conv layer.
    pub params: Vec<(usize, VarId, VarId)>,
}

impl Model {
    pub fn new(layers: Vec<Layer>, meta: ModelMeta) -> Model {
        Model { layers, meta }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() < 1 || x.shape()[1..] != self.meta.input_shape[..] {
            return Err(Error::dimension(
                "model input",
                format!("[batch, {:?}]", self.meta.input_shape),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }

    fn layer_err(i: usize, kind: &str, e: Error) -> Error {
        match e {
            Error::Dimension {
                context,
                expected,
                actual,
            } => Error::Dimension {
                context: format!("layer {i} ({kind}): {context}"),
                expected,
                actual,
            },
            other => other,
        }
    }

    /// Read-only forward pass over a `[batch, ...]` input. Requires every
    /// threshold layer to be in inference mode.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.require_inference()?;
        counters::record_forward();
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .apply(&cur)
                .map_err(|e| Self::layer_err(i, layer.kind_name(), e))?;
        }
        Ok(cur)
    }

    /// Forward pass that also returns every intermediate activation
    /// (the output of each layer, in order).
    pub fn forward_collect(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_input(x)?;
        self.require_inference()?;
        counters::record_forward();
        let mut cur = x.clone();
        let mut collected = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .apply(&cur)
                .map_err(|e| Self::layer_err(i, layer.kind_name(), e))?;
            collected.push(cur.clone());
        }
        Ok((cur, collected))
    }

    /// Forward pass with tracking-mode threshold layers updating their
    /// running maxima. Requires exclusive access.
    pub fn forward_tracking(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        counters::record_forward();
        let mut cur = x.clone();
        for i in 0..self.layers.len() {
            let kind = self.layers[i].kind_name();
            cur = match &mut self.layers[i] {
                Layer::Forge(state) if state.mode() == ForgeMode::Tracking => state.track(&cur),
                layer => layer
                    .apply(&cur)
                    .map_err(|e| Self::layer_err(i, kind, e))?,
            };
        }
        Ok(cur)
    }

    /// Records the forward pass on a gradient tape. `x` must already be a
    /// leaf on the tape. Dense/conv parameters become leaves so callers can
    /// query their gradients.
    pub fn forward_on_tape(&self, tape: &mut Tape, x: VarId) -> Result<TapeForward> {
        self.check_input(tape.value(x))?;
        self.require_inference()?;
        let mut cur = x;
        let mut params = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense { weight, bias } => {
                    let w = tape.leaf(weight.clone());
                    let b = tape.leaf(bias.clone());
                    params.push((i, w, b));
                    let wt = tape.transpose(w)?;
                    let prod = tape.matmul(cur, wt)?;
                    tape.add_bias(prod, b)?
                }
                Layer::Conv2d {
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let k = tape.leaf(kernel.clone());
                    let b = tape.leaf(bias.clone());
                    params.push((i, k, b));
                    tape.conv2d(cur, k, b, *stride, *padding)?
                }
                Layer::Relu => tape.relu(cur),
                Layer::Silu => tape.silu(cur),
                Layer::Gelu => tape.gelu(cur),
                Layer::Forge(state) => tape.forge(cur, state.threshold())?,
                Layer::Flatten => {
                    let shape = tape.value(cur).shape().to_vec();
                    let rest: usize = shape[1..].iter().product();
                    tape.reshape(cur, vec![shape[0], rest])?
                }
            };
        }
        Ok(TapeForward {
            output: cur,
            params,
        })
    }

    fn require_inference(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Forge(state) = layer {
                if state.mode() == ForgeMode::Tracking {
                    return Err(Error::Contract(format!(
                        "layer {i} is in tracking mode; freeze it or use forward_tracking"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Predicted class per batch row (argmax of logits, low index on ties).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.forward(x)?;
        let (b, c) = logits.dims2()?;
        Ok((0..b).map(|i| argmax(&logits.data()[i * c..(i + 1) * c])).collect())
    }

    /// Fraction of samples classified correctly.
    pub fn accuracy(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Contract("accuracy of an empty dataset".into()));
        }
        let mut correct = 0usize;
        for (x, &y) in inputs.iter().zip(labels) {
            let batch = Tensor::stack(&[x])?;
            if self.predict(&batch)?[0] == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / inputs.len() as f64)
    }

    /// Indices of dense/conv layers, in chain order.
    pub fn linear_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_linear())
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns a copy with a fresh threshold layer inserted immediately
    /// before each linear layer selected by the policy. Weights are
    /// untouched; the new layers start as identities (b = 0, c_ratio = 0).
    pub fn insert_forge(&self, policy: &InsertPolicy) -> Result<Model> {
        let linear = self.linear_indices();
        if linear.is_empty() {
            return Err(Error::EmptyInsertion);
        }
        let selected: Vec<usize> = match policy {
            InsertPolicy::All => linear,
            InsertPolicy::LinearIndices(ks) => {
                if ks.is_empty() {
                    return Err(Error::EmptyInsertion);
                }
                let mut sel = Vec::new();
                for &k in ks {
                    let Some(&idx) = linear.get(k) else {
                        return Err(Error::Contract(format!(
                            "policy index {k} out of range: model has {} linear layers",
                            linear.len()
                        )));
                    };
                    sel.push(idx);
                }
                sel
            }
        };
        let mut layers = Vec::with_capacity(self.layers.len() + selected.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if selected.contains(&i) {
                layers.push(Layer::Forge(ForgeState::new()));
            }
            layers.push(layer.clone());
        }
        Ok(Model::new(layers, self.meta.clone()))
    }

    /// Sets the shared threshold ratio on every threshold layer.
    pub fn set_c_ratio(&mut self, c_ratio: f64) -> Result<()> {
        if self.forge_count() == 0 {
            return Err(Error::Contract("model has no forge layers".into()));
        }
        for layer in &mut self.layers {
            if let Layer::Forge(state) = layer {
                state.set_c_ratio(c_ratio)?;
            }
        }
        Ok(())
    }

    pub fn set_forge_mode(&mut self, mode: ForgeMode) {
        for layer in &mut self.layers {
            if let Layer::Forge(state) = layer {
                state.set_mode(mode);
            }
        }
    }

    pub fn forge_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Forge(_)))
            .count()
    }

    /// `(layer_index, state)` for every threshold layer.
    pub fn forge_states(&self) -> Vec<(usize, &ForgeState)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Forge(s) => Some((i, s)),
                _ => None,
            })
            .collect()
    }
}
