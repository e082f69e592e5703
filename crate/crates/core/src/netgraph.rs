//! Network topology description, operation counting, and widening.
//!
//! A [`Network`] is an acyclic list of layers in topological order; each
//! layer names the earlier layers (or the network input) it reads from,
//! which is enough to express the residual shortcuts of the ResNet family.
//! Built-in tables cover AlexNet and ResNet-34/50.
//!
//! Operation counting uses the 1 MAC = 2 ops convention and counts only
//! convolution and fully-connected layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("layer {layer} expects {expected} inputs, got {got}")]
    BadArity {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer} references a layer at or after itself")]
    ForwardReference { layer: String },
    #[error("layer {layer}: input has {got} channels, expected {expected}")]
    ChannelMismatch {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: derived output dims are not positive")]
    NonPositiveDims { layer: String },
    #[error("layer {layer}: groups {groups} must divide channels {channels}")]
    BadGroups {
        layer: String,
        groups: usize,
        channels: usize,
    },
    #[error("layer {layer}: branch shapes {a:?} and {b:?} are incompatible")]
    BranchMismatch {
        layer: String,
        a: FeatureDims,
        b: FeatureDims,
    },
    #[error("layer {layer}: flattened input volume {got} != in_features {expected}")]
    FlattenMismatch {
        layer: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown built-in network {0:?}")]
    UnknownNetwork(String),
    #[error("widen factor must be 1..=3, got {0}")]
    BadWidenFactor(u8),
    #[error("duplicate layer name {0:?}")]
    DuplicateName(String),
}

/// Per-layer feature-map dimensions (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureDims {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        FeatureDims { c, h, w }
    }

    pub fn volume(&self) -> usize {
        self.c * self.h * self.w
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        groups: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    MaxPool {
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    AvgPool {
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    Bns,
    Relu,
    Quantize,
    EltwiseAdd,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::FullyConnected { .. } => "fully-connected",
            LayerSpec::MaxPool { .. } => "max-pool",
            LayerSpec::AvgPool { .. } => "avg-pool",
            LayerSpec::Bns => "bns",
            LayerSpec::Relu => "relu",
            LayerSpec::Quantize => "quantize",
            LayerSpec::EltwiseAdd => "eltwise-add",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. }
        )
    }

    fn arity(&self) -> usize {
        match self {
            LayerSpec::EltwiseAdd => 2,
            _ => 1,
        }
    }
}

/// Where a layer reads its activations from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerInput {
    /// The network input tensor.
    Source,
    /// Output of an earlier layer (by index).
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub spec: LayerSpec,
    pub inputs: Vec<LayerInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    input_dims: FeatureDims,
    layers: Vec<Node>,
    /// Derived output dims per layer, filled in by validation.
    dims: Vec<FeatureDims>,
}

fn pooled_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        input_dims: FeatureDims,
        layers: Vec<Node>,
    ) -> Result<Self, GraphError> {
        let mut net = Network {
            name: name.into(),
            input_dims,
            layers,
            dims: Vec::new(),
        };
        net.dims = net.propagate()?;
        let mut seen = std::collections::HashSet::new();
        for node in &net.layers {
            if !seen.insert(node.name.as_str()) {
                return Err(GraphError::DuplicateName(node.name.clone()));
            }
        }
        Ok(net)
    }

    fn propagate(&self) -> Result<Vec<FeatureDims>, GraphError> {
        let mut dims: Vec<FeatureDims> = Vec::with_capacity(self.layers.len());
        for (i, node) in self.layers.iter().enumerate() {
            let arity = node.spec.arity();
            if node.inputs.len() != arity {
                return Err(GraphError::BadArity {
                    layer: node.name.clone(),
                    expected: arity,
                    got: node.inputs.len(),
                });
            }
            let resolve = |input: &LayerInput| -> Result<FeatureDims, GraphError> {
                match *input {
                    LayerInput::Source => Ok(self.input_dims),
                    LayerInput::Layer(j) if j < i => Ok(dims[j]),
                    LayerInput::Layer(_) => Err(GraphError::ForwardReference {
                        layer: node.name.clone(),
                    }),
                }
            };
            let input = resolve(&node.inputs[0])?;
            let out = match &node.spec {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    groups,
                } => {
                    if input.c != *in_channels {
                        return Err(GraphError::ChannelMismatch {
                            layer: node.name.clone(),
                            expected: *in_channels,
                            got: input.c,
                        });
                    }
                    if *groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
                        return Err(GraphError::BadGroups {
                            layer: node.name.clone(),
                            groups: *groups,
                            channels: *in_channels,
                        });
                    }
                    let h = pooled_extent(input.h, kernel.0, *stride, *padding);
                    let w = pooled_extent(input.w, kernel.1, *stride, *padding);
                    match (h, w) {
                        (Some(h), Some(w)) if h > 0 && w > 0 && *out_channels > 0 => {
                            FeatureDims::new(*out_channels, h, w)
                        }
                        _ => {
                            return Err(GraphError::NonPositiveDims {
                                layer: node.name.clone(),
                            })
                        }
                    }
                }
                LayerSpec::FullyConnected {
                    in_features,
                    out_features,
                } => {
                    if input.volume() != *in_features {
                        return Err(GraphError::FlattenMismatch {
                            layer: node.name.clone(),
                            expected: *in_features,
                            got: input.volume(),
                        });
                    }
                    if *out_features == 0 {
                        return Err(GraphError::NonPositiveDims {
                            layer: node.name.clone(),
                        });
                    }
                    FeatureDims::new(*out_features, 1, 1)
                }
                LayerSpec::MaxPool {
                    kernel,
                    stride,
                    padding,
                }
                | LayerSpec::AvgPool {
                    kernel,
                    stride,
                    padding,
                } => {
                    let h = pooled_extent(input.h, kernel.0, *stride, *padding);
                    let w = pooled_extent(input.w, kernel.1, *stride, *padding);
                    match (h, w) {
                        (Some(h), Some(w)) if h > 0 && w > 0 => FeatureDims::new(input.c, h, w),
                        _ => {
                            return Err(GraphError::NonPositiveDims {
                                layer: node.name.clone(),
                            })
                        }
                    }
                }
                LayerSpec::Bns | LayerSpec::Relu | LayerSpec::Quantize => input,
                LayerSpec::EltwiseAdd => {
                    let other = resolve(&node.inputs[1])?;
                    if input != other {
                        return Err(GraphError::BranchMismatch {
                            layer: node.name.clone(),
                            a: input,
                            b: other,
                        });
                    }
                    input
                }
            };
            dims.push(out);
        }
        Ok(dims)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dims(&self) -> FeatureDims {
        self.input_dims
    }

    pub fn layers(&self) -> &[Node] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &Node {
        &self.layers[index]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Derived output dims of a layer.
    pub fn output_dims(&self, index: usize) -> FeatureDims {
        self.dims[index]
    }

    /// Dims of the tensor a layer reads through the given input edge.
    pub fn input_dims_of(&self, index: usize, edge: usize) -> FeatureDims {
        match self.layers[index].inputs[edge] {
            LayerInput::Source => self.input_dims,
            LayerInput::Layer(j) => self.dims[j],
        }
    }

    pub fn find_layer(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|n| n.name == name)
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|n| matches!(n.spec, LayerSpec::Conv { .. }))
            .count()
    }

    /// Multiply-accumulate count of one layer (0 for anything that is not
    /// conv or fully-connected).
    pub fn layer_macs(&self, index: usize) -> u64 {
        let out = self.dims[index];
        match &self.layers[index].spec {
            LayerSpec::Conv {
                in_channels,
                kernel,
                groups,
                ..
            } => {
                let taps = (kernel.0 * kernel.1 * in_channels / groups) as u64;
                taps * (out.c * out.h * out.w) as u64
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => (*in_features * *out_features) as u64,
            _ => 0,
        }
    }

    pub fn total_macs(&self) -> u64 {
        (0..self.layers.len()).map(|i| self.layer_macs(i)).sum()
    }

    /// Total operations in GOPs (1 MAC = 2 ops; conv and fc layers only).
    pub fn ops_count(&self) -> f64 {
        2.0 * self.total_macs() as f64 / 1e9
    }

    /// Computation cost in GOP-bits: `ops * (act_bits + weight_bits)`.
    pub fn gop_bits(&self, act_bits: u32, weight_bits_effective: u32) -> f64 {
        self.ops_count() * f64::from(act_bits + weight_bits_effective)
    }

    /// Multiply every hidden filter count by `k`, leaving the input image
    /// channels and the final classifier output count unchanged. First and
    /// last weighted layers therefore scale by k rather than k^2.
    pub fn widen(&self, k: u8) -> Result<Network, GraphError> {
        if !(1..=3).contains(&k) {
            return Err(GraphError::BadWidenFactor(k));
        }
        let k = k as usize;
        let classifier = self.layers.iter().rposition(|n| n.spec.is_weighted());
        let mut new_layers: Vec<Node> = Vec::with_capacity(self.layers.len());
        let mut new_dims: Vec<FeatureDims> = Vec::with_capacity(self.layers.len());
        for (i, node) in self.layers.iter().enumerate() {
            let in_dims = match node.inputs[0] {
                LayerInput::Source => self.input_dims,
                LayerInput::Layer(j) => new_dims[j],
            };
            let spec = match &node.spec {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    groups,
                    ..
                } => LayerSpec::Conv {
                    in_channels: in_dims.c,
                    out_channels: if Some(i) == classifier {
                        *out_channels
                    } else {
                        out_channels * k
                    },
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    groups: *groups,
                },
                LayerSpec::FullyConnected { out_features, .. } => LayerSpec::FullyConnected {
                    in_features: in_dims.volume(),
                    out_features: if Some(i) == classifier {
                        *out_features
                    } else {
                        out_features * k
                    },
                },
                other => other.clone(),
            };
            new_layers.push(Node {
                name: node.name.clone(),
                spec,
                inputs: node.inputs.clone(),
            });
            let out_dims = {
                // propagate just this node against the widened prefix
                let probe = Network {
                    name: String::new(),
                    input_dims: self.input_dims,
                    layers: new_layers.clone(),
                    dims: Vec::new(),
                };
                *probe.propagate()?.last().expect("at least one layer")
            };
            new_dims.push(out_dims);
        }
        Network::new(self.name.clone(), self.input_dims, new_layers)
    }
}

/// Built-in topology lookup: `alexnet`, `resnet34`, or `resnet50`.
pub fn builtin(name: &str) -> Result<Network, GraphError> {
    match name {
        "alexnet" => Ok(alexnet()),
        "resnet34" => Ok(resnet34()),
        "resnet50" => Ok(resnet50()),
        other => Err(GraphError::UnknownNetwork(other.to_string())),
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &["alexnet", "resnet34", "resnet50"]
}

struct Builder {
    layers: Vec<Node>,
}

impl Builder {
    fn new() -> Self {
        Builder { layers: Vec::new() }
    }

    fn prev(&self) -> LayerInput {
        if self.layers.is_empty() {
            LayerInput::Source
        } else {
            LayerInput::Layer(self.layers.len() - 1)
        }
    }

    fn push(&mut self, name: impl Into<String>, spec: LayerSpec, inputs: Vec<LayerInput>) -> usize {
        self.layers.push(Node {
            name: name.into(),
            spec,
            inputs,
        });
        self.layers.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_from(
        &mut self,
        name: impl Into<String>,
        from: LayerInput,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> usize {
        self.push(
            name,
            LayerSpec::Conv {
                in_channels: cin,
                out_channels: cout,
                kernel: (k, k),
                stride,
                padding,
                groups,
            },
            vec![from],
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> usize {
        let from = self.prev();
        self.conv_from(name, from, cin, cout, k, stride, padding, groups)
    }

    fn max_pool(&mut self, name: impl Into<String>, k: usize, stride: usize, padding: usize) {
        let from = self.prev();
        self.push(
            name,
            LayerSpec::MaxPool {
                kernel: (k, k),
                stride,
                padding,
            },
            vec![from],
        );
    }

    fn avg_pool(&mut self, name: impl Into<String>, k: usize) {
        let from = self.prev();
        self.push(
            name,
            LayerSpec::AvgPool {
                kernel: (k, k),
                stride: 1,
                padding: 0,
            },
            vec![from],
        );
    }

    fn fc(&mut self, name: impl Into<String>, in_features: usize, out_features: usize) {
        let from = self.prev();
        self.push(
            name,
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            },
            vec![from],
        );
    }

    fn eltwise(&mut self, name: impl Into<String>, a: usize, b: usize) -> usize {
        self.push(
            name,
            LayerSpec::EltwiseAdd,
            vec![LayerInput::Layer(a), LayerInput::Layer(b)],
        )
    }
}

/// The original two-column AlexNet (227x227 input, grouped conv2/4/5), the
/// variant whose conv+fc MAC count lands at 1.45 GOPs under the 1 MAC =
/// 2 ops convention.
fn alexnet() -> Network {
    let mut b = Builder::new();
    b.conv("conv1", 3, 96, 11, 4, 0, 1);
    b.max_pool("pool1", 3, 2, 0);
    b.conv("conv2", 96, 256, 5, 1, 2, 2);
    b.max_pool("pool2", 3, 2, 0);
    b.conv("conv3", 256, 384, 3, 1, 1, 1);
    b.conv("conv4", 384, 384, 3, 1, 1, 2);
    b.conv("conv5", 384, 256, 3, 1, 1, 2);
    b.max_pool("pool5", 3, 2, 0);
    b.fc("fc6", 9216, 4096);
    b.fc("fc7", 4096, 4096);
    b.fc("fc8", 4096, 1000);
    Network::new("alexnet", FeatureDims::new(3, 227, 227), b.layers)
        .expect("built-in alexnet must validate")
}

/// Two-conv residual block; the first block of a stage may downsample and
/// project the shortcut.
fn basic_block(b: &mut Builder, stage: usize, idx: usize, cin: usize, cout: usize, stride: usize) {
    let tag = format!("s{stage}b{idx}");
    let block_in = b.prev();
    let block_in_idx = match block_in {
        LayerInput::Layer(i) => i,
        LayerInput::Source => unreachable!("blocks never read the image directly"),
    };
    let c1 = b.conv_from(format!("{tag}_conv1"), block_in, cin, cout, 3, stride, 1, 1);
    let c2 = b.conv_from(
        format!("{tag}_conv2"),
        LayerInput::Layer(c1),
        cout,
        cout,
        3,
        1,
        1,
        1,
    );
    let shortcut = if stride != 1 || cin != cout {
        b.conv_from(
            format!("{tag}_proj"),
            LayerInput::Layer(block_in_idx),
            cin,
            cout,
            1,
            stride,
            0,
            1,
        )
    } else {
        block_in_idx
    };
    b.eltwise(format!("{tag}_add"), c2, shortcut);
}

/// Three-conv bottleneck block (1x1 reduce, 3x3, 1x1 expand); stride sits on
/// the first 1x1 and the projection.
fn bottleneck_block(
    b: &mut Builder,
    stage: usize,
    idx: usize,
    cin: usize,
    mid: usize,
    cout: usize,
    stride: usize,
) {
    let tag = format!("s{stage}b{idx}");
    let block_in = b.prev();
    let block_in_idx = match block_in {
        LayerInput::Layer(i) => i,
        LayerInput::Source => unreachable!("blocks never read the image directly"),
    };
    let c1 = b.conv_from(format!("{tag}_conv1"), block_in, cin, mid, 1, stride, 0, 1);
    let c2 = b.conv_from(
        format!("{tag}_conv2"),
        LayerInput::Layer(c1),
        mid,
        mid,
        3,
        1,
        1,
        1,
    );
    let c3 = b.conv_from(
        format!("{tag}_conv3"),
        LayerInput::Layer(c2),
        mid,
        cout,
        1,
        1,
        0,
        1,
    );
    let shortcut = if stride != 1 || cin != cout {
        b.conv_from(
            format!("{tag}_proj"),
            LayerInput::Layer(block_in_idx),
            cin,
            cout,
            1,
            stride,
            0,
            1,
        )
    } else {
        block_in_idx
    };
    b.eltwise(format!("{tag}_add"), c3, shortcut);
}

fn resnet34() -> Network {
    let mut b = Builder::new();
    b.conv("conv1", 3, 64, 7, 2, 3, 1);
    b.max_pool("pool1", 3, 2, 1);
    let stages: [(usize, usize, usize); 4] = [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)];
    let mut cin = 64;
    for (stage, &(cout, blocks, first_stride)) in stages.iter().enumerate() {
        for idx in 0..blocks {
            let stride = if idx == 0 { first_stride } else { 1 };
            basic_block(&mut b, stage + 1, idx, cin, cout, stride);
            cin = cout;
        }
    }
    b.avg_pool("avgpool", 7);
    b.fc("fc", 512, 1000);
    Network::new("resnet34", FeatureDims::new(3, 224, 224), b.layers)
        .expect("built-in resnet34 must validate")
}

fn resnet50() -> Network {
    let mut b = Builder::new();
    b.conv("conv1", 3, 64, 7, 2, 3, 1);
    b.max_pool("pool1", 3, 2, 1);
    let stages: [(usize, usize, usize, usize); 4] = [
        (64, 256, 3, 1),
        (128, 512, 4, 2),
        (256, 1024, 6, 2),
        (512, 2048, 3, 2),
    ];
    let mut cin = 64;
    for (stage, &(mid, cout, blocks, first_stride)) in stages.iter().enumerate() {
        for idx in 0..blocks {
            let stride = if idx == 0 { first_stride } else { 1 };
            bottleneck_block(&mut b, stage + 1, idx, cin, mid, cout, stride);
            cin = cout;
        }
    }
    b.avg_pool("avgpool", 7);
    b.fc("fc", 2048, 1000);
    Network::new("resnet50", FeatureDims::new(3, 224, 224), b.layers)
        .expect("built-in resnet50 must validate")
}
