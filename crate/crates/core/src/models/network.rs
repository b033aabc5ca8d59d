use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    ConvGeometry, DifferentiableFunction, NodeId, ParamSlots, Stamp, Tape, Unary,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn unary(self) -> Unary {
        match self {
            Activation::Relu => Unary::Relu,
            Activation::Tanh => Unary::Tanh,
            Activation::Sigmoid => Unary::Sigmoid,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

/// Output head of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Softmax over the final width.
    Softmax,
    /// Single sigmoid unit: probability of class 1.
    SigmoidScalar,
    Linear,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Softmax => "softmax",
            Head::SigmoidScalar => "sigmoid-scalar",
            Head::Linear => "linear",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Head::Softmax),
            "sigmoid-scalar" => Ok(Head::SigmoidScalar),
            "linear" => Ok(Head::Linear),
            other => Err(Error::invalid(format!("unknown head {other:?}"))),
        }
    }
}

/// Layer widths from input to output, the hidden activation and the head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let spec = Self {
            widths,
            activation,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::invalid("an MLP needs input and output widths"));
        }
        if self.widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.head == Head::SigmoidScalar && self.output_dim() != 1 {
            return Err(Error::invalid("sigmoid-scalar head needs output width 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    /// Builds a network with uniform He-scaled weights and zero biases.
    pub fn build(&self, seed: u64) -> Result<Sequential> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let n = self.widths.len();
        for (i, pair) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let limit = (6.0 / n_in as f64).sqrt();
            let weight: Vec<f64> = (0..n_in * n_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Layer::dense(weight, vec![0.0; n_out])?);
            if i + 2 < n {
                layers.push(Layer::Activation(self.activation));
            }
        }
        match self.head {
            Head::Softmax => layers.push(Layer::Softmax),
            Head::SigmoidScalar => layers.push(Layer::Activation(Activation::Sigmoid)),
            Head::Linear => {}
        }
        Sequential::new(self.input_dim(), layers, self.head)
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "{}:{}:{}", widths.join("-"), self.activation, self.head)
    }
}

impl FromStr for MlpSpec {
    type Err = Error;

    /// Parses `64-32-2:tanh:softmax`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!(
                "expected widths:activation:head, got {s:?}"
            )));
        }
        let widths = parts[0]
            .split('-')
            .map(|w| {
                w.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad width {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MlpSpec::new(widths, parts[1].trim().parse()?, parts[2].trim().parse()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = W x + b`, `W` row-major `[n_out, n_in]`.
    Dense {
        weight: Arc<Vec<f64>>,
        bias: Arc<Vec<f64>>,
        n_in: usize,
        n_out: usize,
    },
    /// Valid 2-D convolution over a flattened `[c, h, w]` input, via im2col.
    Conv2d {
        kernel: Arc<Vec<f64>>,
        bias: Arc<Vec<f64>>,
        geometry: ConvGeometry,
    },
    Activation(Activation),
    Softmax,
}

impl Layer {
    pub fn dense(weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n_out = bias.len();
        if n_out == 0 || weight.len() % n_out != 0 {
            return Err(Error::invalid("dense weight size not a multiple of bias size"));
        }
        let n_in = weight.len() / n_out;
        Ok(Layer::Dense {
            weight: Arc::new(weight),
            bias: Arc::new(bias),
            n_in,
            n_out,
        })
    }

    fn out_dim(&self, in_dim: usize) -> Result<usize> {
        match self {
            Layer::Dense { n_in, n_out, .. } => {
                if *n_in != in_dim {
                    return Err(Error::ShapeMismatch {
                        expected: vec![*n_in],
                        actual: vec![in_dim],
                    });
                }
                Ok(*n_out)
            }
            Layer::Conv2d { geometry, .. } => {
                if geometry.input_len() != in_dim {
                    return Err(Error::ShapeMismatch {
                        expected: vec![geometry.input_len()],
                        actual: vec![in_dim],
                    });
                }
                Ok(geometry.output_len())
            }
            Layer::Activation(_) | Layer::Softmax => Ok(in_dim),
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    fn describe(&self) -> String {
        match self {
            Layer::Dense { n_in, n_out, .. } => format!("dense:{n_in}x{n_out}"),
            Layer::Conv2d { geometry: g, .. } => format!(
                "conv:{}x{}x{}x{}x{}",
                g.in_channels, g.height, g.width, g.out_channels, g.kernel
            ),
            Layer::Activation(a) => a.to_string(),
            Layer::Softmax => "softmax".into(),
        }
    }
}

/// A feed-forward stack of layers acting on flat vectors.
#[derive(Debug, Clone)]
pub struct Sequential {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
    head: Head,
    stamp: Stamp,
}

impl Sequential {
    pub fn new(input_dim: usize, layers: Vec<Layer>, head: Head) -> Result<Self> {
        let mut dim = input_dim;
        for l in &layers {
            dim = l.out_dim(dim)?;
        }
        Ok(Self {
            input_dim,
            output_dim: dim,
            layers,
            head,
            stamp: Stamp::fresh(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Textual architecture, e.g. `dense:4x8,tanh,dense:8x2,softmax`.
    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .map(Layer::describe)
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parameter tensors in slot order: `(name, values)`.
    pub fn parameters(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Dense { weight, bias, .. } => {
                    out.push((format!("layer{i}.weight"), weight.as_slice()));
                    out.push((format!("layer{i}.bias"), bias.as_slice()));
                }
                Layer::Conv2d { kernel, bias, .. } => {
                    out.push((format!("layer{i}.weight"), kernel.as_slice()));
                    out.push((format!("layer{i}.bias"), bias.as_slice()));
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().filter(|l| l.has_params()).count() * 2
    }

    /// Applies `update(slot, values)` to each parameter tensor in slot order
    /// and marks the network as changed.
    pub fn update_parameters(&mut self, mut update: impl FnMut(usize, &mut Vec<f64>)) {
        let mut slot = 0;
        for l in &mut self.layers {
            match l {
                Layer::Dense { weight, bias, .. } | Layer::Conv2d { kernel: weight, bias, .. } => {
                    update(slot, Arc::make_mut(weight));
                    update(slot + 1, Arc::make_mut(bias));
                    slot += 2;
                }
                _ => {}
            }
        }
        self.stamp = self.stamp.bumped();
    }

    /// Records the network. With `slot_offset`, trainable ops report
    /// parameter gradients in slots starting there. With `skip_head`, a
    /// trailing softmax or sigmoid head is left off (returns logits).
    pub fn record_with(
        &self,
        tape: &mut Tape,
        input: NodeId,
        slot_offset: Option<usize>,
        skip_head: bool,
    ) -> Result<NodeId> {
        let end = if skip_head && matches!(self.head, Head::Softmax | Head::SigmoidScalar) {
            self.layers.len() - 1
        } else {
            self.layers.len()
        };
        let mut node = input;
        let mut slot = 0;
        for (i, layer) in self.layers[..end].iter().enumerate() {
            let slots = |s: usize| {
                slot_offset.map(|o| ParamSlots {
                    weight: o + s,
                    bias: o + s + 1,
                })
            };
            node = match layer {
                Layer::Dense { weight, bias, .. } => {
                    let n = tape.dense(node, weight.clone(), bias.clone(), slots(slot))?;
                    slot += 2;
                    n
                }
                Layer::Conv2d {
                    kernel,
                    bias,
                    geometry,
                } => {
                    let n = tape.conv2d(node, kernel.clone(), bias.clone(), *geometry, slots(slot))?;
                    slot += 2;
                    n
                }
                Layer::Activation(a) => tape.unary(node, a.unary()),
                Layer::Softmax => tape.softmax(node),
            };
            if !tape.value(node).is_finite() {
                return Err(Error::NonFiniteLayer { layer: i });
            }
        }
        Ok(node)
    }
}

impl DifferentiableFunction for Sequential {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.input_dim]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.output_dim]
    }

    fn record(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        self.record_with(tape, input, None, false)
    }

    fn stamp(&self) -> Stamp {
        self.stamp
    }
}

/// Parses the comma-separated layer list produced by [`Sequential::describe`]
/// into layer shells with zeroed parameters.
pub(crate) fn parse_layers(desc: &str) -> Result<Vec<Layer>> {
    let mut layers = Vec::new();
    for item in desc.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let layer = if let Some(dims) = item.strip_prefix("dense:") {
            let (a, b) = dims
                .split_once('x')
                .ok_or_else(|| Error::invalid(format!("bad dense layer {item:?}")))?;
            let n_in: usize = a.parse().map_err(|_| Error::invalid(item.to_string()))?;
            let n_out: usize = b.parse().map_err(|_| Error::invalid(item.to_string()))?;
            Layer::dense(vec![0.0; n_in * n_out], vec![0.0; n_out])?
        } else if let Some(dims) = item.strip_prefix("conv:") {
            let v: Vec<usize> = dims
                .split('x')
                .map(|d| d.parse().map_err(|_| Error::invalid(item.to_string())))
                .collect::<Result<_>>()?;
            if v.len() != 5 {
                return Err(Error::invalid(format!("bad conv layer {item:?}")));
            }
            let geometry = ConvGeometry {
                in_channels: v[0],
                height: v[1],
                width: v[2],
                out_channels: v[3],
                kernel: v[4],
            };
            Layer::Conv2d {
                kernel: Arc::new(vec![0.0; geometry.out_channels * geometry.patch_len()]),
                bias: Arc::new(vec![0.0; geometry.out_channels]),
                geometry,
            }
        } else if item == "softmax" {
            Layer::Softmax
        } else {
            Layer::Activation(item.parse()?)
        };
        layers.push(layer);
    }
    Ok(layers)
}
