//! From-scratch neural network core: layer specs, the fixed feed-forward
//! topology, forward/backward ops with exact gradient contracts, loss, and
//! the Adam optimizer.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod network;
pub mod pool;
pub mod relu;

pub use adam::{adam_step, AdamState};
pub use network::{forward_full, Network};

use crate::error::{Error, Result};

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Flatten,
    Dense,
    Dropout,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::Dropout => "dropout",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(LayerKind::Conv),
            "maxpool" => Ok(LayerKind::MaxPool),
            "flatten" => Ok(LayerKind::Flatten),
            "dense" => Ok(LayerKind::Dense),
            "dropout" => Ok(LayerKind::Dropout),
            other => Err(Error::Data(format!("unknown layer kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Data(format!("unknown activation {other:?}"))),
        }
    }
}

/// Declarative description of one layer. Conv and pool layers use
/// `kernel_size`/`stride`/`padding`; dense layers use `depth` only;
/// dropout layers use `dropout_rate` only.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub depth: usize,
    pub activation: Activation,
    pub dropout_rate: f32,
}

impl LayerSpec {
    pub fn conv(kernel_size: usize, stride: usize, padding: usize, depth: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel_size,
            stride,
            padding,
            depth,
            activation: Activation::Relu,
            dropout_rate: 0.0,
        }
    }

    pub fn maxpool(kernel_size: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel_size,
            stride,
            padding: 0,
            depth: 0,
            activation: Activation::Identity,
            dropout_rate: 0.0,
        }
    }

    pub fn flatten() -> Self {
        LayerSpec {
            kind: LayerKind::Flatten,
            kernel_size: 0,
            stride: 0,
            padding: 0,
            depth: 0,
            activation: Activation::Identity,
            dropout_rate: 0.0,
        }
    }

    pub fn dense(depth: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            kernel_size: 0,
            stride: 0,
            padding: 0,
            depth,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn dropout(rate: f32) -> Self {
        LayerSpec {
            kind: LayerKind::Dropout,
            kernel_size: 0,
            stride: 0,
            padding: 0,
            depth: 0,
            activation: Activation::Identity,
            dropout_rate: rate,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Topology(format!("layer {index}: {msg}")));
        match self.kind {
            LayerKind::Conv | LayerKind::MaxPool => {
                if self.kernel_size < 1 {
                    return fail(format!("kernel_size must be >= 1, got {}", self.kernel_size));
                }
                if self.stride < 1 {
                    return fail(format!("stride must be >= 1, got {}", self.stride));
                }
                if self.kind == LayerKind::Conv && self.depth < 1 {
                    return fail("conv depth must be >= 1".into());
                }
            }
            LayerKind::Dense => {
                if self.depth < 1 {
                    return fail("dense depth must be >= 1".into());
                }
            }
            LayerKind::Dropout => {
                if !(0.0..=1.0).contains(&self.dropout_rate) {
                    return fail(format!("dropout_rate must be in [0,1], got {}", self.dropout_rate));
                }
            }
            LayerKind::Flatten => {}
        }
        Ok(())
    }
}

/// Shape of one point in the layer chain: an image volume or a flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerShape {
    Volume { h: usize, w: usize, c: usize },
    Vector(usize),
}

impl LayerShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            LayerShape::Volume { h, w, c } => vec![h, w, c],
            LayerShape::Vector(n) => vec![n],
        }
    }
}

/// Output side length of a windowed op: floor((n + 2*pad - k)/stride) + 1.
/// Errors when the window does not fit.
fn windowed_output(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// The whole network as an ordered layer list plus the input volume shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl NetworkTopology {
    /// Validate every layer and the shape chain; the final output must be a
    /// 2-unit vector (the binary contains / does-not-contain decision).
    pub fn new(input_shape: (usize, usize, usize), layers: Vec<LayerSpec>) -> Result<Self> {
        let topo = NetworkTopology { input_shape, layers };
        for (i, layer) in topo.layers.iter().enumerate() {
            layer.validate(i)?;
        }
        let chain = topo.shape_chain()?;
        match chain.last() {
            Some(LayerShape::Vector(2)) => Ok(topo),
            other => Err(Error::Topology(format!(
                "final layer must output exactly 2 units, got {other:?}"
            ))),
        }
    }

    /// Compute the output shape after every layer. Errors name the offending
    /// layer when a window does not fit or a dense layer sees a volume.
    pub fn shape_chain(&self) -> Result<Vec<LayerShape>> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Topology(format!(
                "input shape must be positive, got {:?}",
                self.input_shape
            )));
        }
        let mut cur = LayerShape::Volume { h, w, c };
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (layer.kind, &cur) {
                (LayerKind::Conv, LayerShape::Volume { h, w, .. }) => {
                    let oh = windowed_output(*h, layer.kernel_size, layer.stride, layer.padding);
                    let ow = windowed_output(*w, layer.kernel_size, layer.stride, layer.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => LayerShape::Volume {
                            h: oh,
                            w: ow,
                            c: layer.depth,
                        },
                        _ => {
                            return Err(Error::Topology(format!(
                                "layer {i} (conv k={} s={} p={}): window does not fit {h}x{w} input",
                                layer.kernel_size, layer.stride, layer.padding
                            )))
                        }
                    }
                }
                (LayerKind::MaxPool, LayerShape::Volume { h, w, c }) => {
                    let oh = windowed_output(*h, layer.kernel_size, layer.stride, 0);
                    let ow = windowed_output(*w, layer.kernel_size, layer.stride, 0);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {
                            LayerShape::Volume { h: oh, w: ow, c: *c }
                        }
                        _ => {
                            return Err(Error::Topology(format!(
                                "layer {i} (maxpool k={} s={}): window exceeds {h}x{w} input",
                                layer.kernel_size, layer.stride
                            )))
                        }
                    }
                }
                (LayerKind::Flatten, LayerShape::Volume { h, w, c }) => LayerShape::Vector(h * w * c),
                (LayerKind::Flatten, LayerShape::Vector(n)) => LayerShape::Vector(*n),
                (LayerKind::Dense, LayerShape::Vector(_)) => LayerShape::Vector(layer.depth),
                (LayerKind::Dense, LayerShape::Volume { .. }) => {
                    return Err(Error::Topology(format!(
                        "layer {i} (dense): input is a volume; insert a flatten layer first"
                    )))
                }
                (LayerKind::Dropout, shape) => shape.clone(),
                (kind, shape) => {
                    return Err(Error::Topology(format!(
                        "layer {i} ({}): unsupported input shape {shape:?}",
                        kind.as_str()
                    )))
                }
            };
            chain.push(cur.clone());
        }
        Ok(chain)
    }

    /// Total trainable parameter count: k*k*c_in*d + d per conv layer,
    /// fan_in*fan_out + fan_out per dense layer.
    pub fn param_count(&self) -> Result<usize> {
        let chain = self.shape_chain()?;
        let mut total = 0usize;
        let mut prev = LayerShape::Volume {
            h: self.input_shape.0,
            w: self.input_shape.1,
            c: self.input_shape.2,
        };
        for (layer, out) in self.layers.iter().zip(chain.iter()) {
            match (layer.kind, &prev, out) {
                (LayerKind::Conv, LayerShape::Volume { c, .. }, LayerShape::Volume { c: d, .. }) => {
                    total += layer.kernel_size * layer.kernel_size * c * d + d;
                }
                (LayerKind::Dense, LayerShape::Vector(fan_in), LayerShape::Vector(fan_out)) => {
                    total += fan_in * fan_out + fan_out;
                }
                _ => {}
            }
            prev = out.clone();
        }
        Ok(total)
    }
}

/// Readings of the two ambiguous rows of the published layer table: ReLU and
/// dropout are listed on the final 2-unit layer. The defaults use identity
/// logits and no output dropout; the literal flags restore the printed table.
#[derive(Debug, Clone, Copy, Default)]
pub struct TopologyOptions {
    pub literal_final_relu: bool,
    pub literal_output_dropout: bool,
}

fn standard_layers(
    conv_depths: [usize; 5],
    dense_units: [usize; 2],
    opts: TopologyOptions,
) -> Vec<LayerSpec> {
    let final_act = if opts.literal_final_relu {
        Activation::Relu
    } else {
        Activation::Identity
    };
    let mut layers = vec![
        LayerSpec::conv(11, 4, 0, conv_depths[0]),
        LayerSpec::maxpool(3, 2),
        LayerSpec::conv(5, 1, 2, conv_depths[1]),
        LayerSpec::maxpool(3, 2),
        LayerSpec::conv(3, 1, 1, conv_depths[2]),
        LayerSpec::conv(3, 1, 1, conv_depths[3]),
        LayerSpec::conv(3, 1, 1, conv_depths[4]),
        LayerSpec::maxpool(3, 2),
        LayerSpec::flatten(),
        LayerSpec::dropout(0.5),
        LayerSpec::dense(dense_units[0], Activation::Relu),
        LayerSpec::dropout(0.5),
        LayerSpec::dense(dense_units[1], Activation::Relu),
        LayerSpec::dropout(0.5),
        LayerSpec::dense(2, final_act),
    ];
    if opts.literal_output_dropout {
        layers.push(LayerSpec::dropout(0.5));
    }
    layers
}

/// Full-scale topology: five conv layers (96/256/384/384/256 kernels, three
/// followed by 3x3/2 max pooling), flatten, then 4096/4096/2 dense layers
/// with dropout 0.5 on each dense input. Input 300x300x3.
pub fn paper_topology(opts: TopologyOptions) -> NetworkTopology {
    NetworkTopology::new(
        (300, 300, 3),
        standard_layers([96, 256, 384, 384, 256], [4096, 4096], opts),
    )
    .expect("paper topology is well-formed")
}

/// Desk-scale topology with the same kernel/stride/pool structure:
/// conv depths 16/32/48/48/32, dense 256/256/2, input 100x100x3.
pub fn mini_topology(opts: TopologyOptions) -> NetworkTopology {
    NetworkTopology::new(
        (100, 100, 3),
        standard_layers([16, 32, 48, 48, 32], [256, 256], opts),
    )
    .expect("mini topology is well-formed")
}
