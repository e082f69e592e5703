//! Topology and model-bundle text formats (TOML).
//!
//! A topology file lists layers in execution order; each layer may name its
//! inputs (`"@input"` for the network input, a layer name otherwise) and
//! defaults to reading the previous layer. A bundle file embeds a topology
//! and attaches quantized filters plus unfused normalization parameters to
//! every weighted layer.

use super::FormatError;
use crate::bns::BnsRawParams;
use crate::engine::{BundleDefinition, LayerDefinition};
use crate::netgraph::{FeatureDims, LayerInput, LayerSpec, Network, Node};
use crate::numerics::{
    ActFormat, FilterFeature, FilterShape, QuantizedFilterBank, WeightFormat,
};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub name: String,
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    #[serde(default)]
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub inputs: Option<Vec<String>>,
    #[serde(default)]
    pub in_channels: Option<usize>,
    #[serde(default)]
    pub out_channels: Option<usize>,
    #[serde(default)]
    pub kernel: Option<[usize; 2]>,
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub padding: Option<usize>,
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default)]
    pub in_features: Option<usize>,
    #[serde(default)]
    pub out_features: Option<usize>,
}

fn require<T>(field: Option<T>, layer: &str, what: &str) -> Result<T, FormatError> {
    field.ok_or_else(|| FormatError::Validation(format!("layer {layer}: missing {what}")))
}

impl LayerEntry {
    fn spec(&self) -> Result<LayerSpec, FormatError> {
        let name = &self.name;
        let kernel = || require(self.kernel, name, "kernel");
        Ok(match self.kind.as_str() {
            "conv" => LayerSpec::Conv {
                in_channels: require(self.in_channels, name, "in_channels")?,
                out_channels: require(self.out_channels, name, "out_channels")?,
                kernel: kernel().map(|k| (k[0], k[1]))?,
                stride: self.stride.unwrap_or(1),
                padding: self.padding.unwrap_or(0),
                groups: self.groups.unwrap_or(1),
            },
            "fully-connected" => LayerSpec::FullyConnected {
                in_features: require(self.in_features, name, "in_features")?,
                out_features: require(self.out_features, name, "out_features")?,
            },
            "max-pool" => LayerSpec::MaxPool {
                kernel: kernel().map(|k| (k[0], k[1]))?,
                stride: self.stride.unwrap_or(1),
                padding: self.padding.unwrap_or(0),
            },
            "avg-pool" => LayerSpec::AvgPool {
                kernel: kernel().map(|k| (k[0], k[1]))?,
                stride: self.stride.unwrap_or(1),
                padding: self.padding.unwrap_or(0),
            },
            "bns" => LayerSpec::Bns,
            "relu" => LayerSpec::Relu,
            "quantize" => LayerSpec::Quantize,
            "eltwise-add" => LayerSpec::EltwiseAdd,
            other => {
                return Err(FormatError::Validation(format!(
                    "layer {name}: unknown kind {other:?}"
                )))
            }
        })
    }
}

impl TopologyFile {
    pub fn to_network(&self) -> Result<Network, FormatError> {
        let mut nodes = Vec::with_capacity(self.layers.len());
        let mut names: Vec<&str> = Vec::with_capacity(self.layers.len());
        for (i, entry) in self.layers.iter().enumerate() {
            let spec = entry.spec()?;
            let inputs = match &entry.inputs {
                None => {
                    if i == 0 {
                        vec![LayerInput::Source]
                    } else {
                        vec![LayerInput::Layer(i - 1)]
                    }
                }
                Some(refs) => refs
                    .iter()
                    .map(|r| {
                        if r == "@input" {
                            Ok(LayerInput::Source)
                        } else {
                            names
                                .iter()
                                .position(|n| n == r)
                                .map(LayerInput::Layer)
                                .ok_or_else(|| {
                                    FormatError::Validation(format!(
                                        "layer {}: unknown input {r:?}",
                                        entry.name
                                    ))
                                })
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            nodes.push(Node {
                name: entry.name.clone(),
                spec,
                inputs,
            });
            names.push(&entry.name);
        }
        Ok(Network::new(
            self.name.clone(),
            FeatureDims::new(self.input_shape[0], self.input_shape[1], self.input_shape[2]),
            nodes,
        )?)
    }
}

/// Parse a topology file.
pub fn parse_topology(toml_text: &str) -> Result<Network, FormatError> {
    let file: TopologyFile = toml::from_str(toml_text)?;
    file.to_network()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFile {
    /// Activation bits of the network input tensor.
    pub input_bits: u8,
    pub topology: TopologyFile,
    #[serde(default)]
    pub layers: Vec<BundleLayerEntry>,
    /// Output-format overrides for unweighted layers (required for
    /// `quantize` layers, optional elsewhere; default is the input format).
    #[serde(default)]
    pub formats: Vec<FormatOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleLayerEntry {
    /// Name of the weighted layer these parameters belong to.
    pub layer: String,
    pub out_bits: u8,
    pub weight_format: String,
    /// Per-feature scale; also mirrored in the normalization parameters.
    pub alpha: Vec<f32>,
    /// Per-feature filter codes, flattened (cin/groups * kh * kw).
    pub codes: Vec<Vec<i8>>,
    pub bn_shift: Vec<f32>,
    pub bn_scale: Vec<f32>,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatOverride {
    pub layer: String,
    pub bits: u8,
}

impl BundleFile {
    pub fn to_definition(&self) -> Result<BundleDefinition, FormatError> {
        let network = self.topology.to_network()?;
        let input_format = ActFormat::new(self.input_bits)?;

        // out formats: weighted layers from their parameter entries,
        // everything else defaults to its input format unless overridden
        let mut out_formats: Vec<ActFormat> = Vec::with_capacity(network.len());
        for (i, node) in network.layers().iter().enumerate() {
            let entry = self.layers.iter().find(|e| e.layer == node.name);
            let fmt = if let Some(entry) = entry {
                ActFormat::new(entry.out_bits)?
            } else {
                let inherited = match node.inputs.first() {
                    Some(LayerInput::Source) | None => input_format,
                    Some(LayerInput::Layer(j)) => out_formats[*j],
                };
                match self.formats.iter().find(|o| o.layer == node.name) {
                    Some(o) => ActFormat::new(o.bits)?,
                    None if matches!(node.spec, LayerSpec::Quantize) => {
                        return Err(FormatError::Validation(format!(
                            "layer {}: quantize layers need a formats override",
                            node.name
                        )))
                    }
                    None => inherited,
                }
            };
            let _ = i;
            out_formats.push(fmt);
        }

        let mut layers: Vec<Option<LayerDefinition>> = Vec::with_capacity(network.len());
        for node in network.layers() {
            let entry = self.layers.iter().find(|e| e.layer == node.name);
            match entry {
                None => layers.push(None),
                Some(entry) => {
                    let weight_format: WeightFormat = entry
                        .weight_format
                        .parse()
                        .map_err(FormatError::Validation)?;
                    let (cin, kh, kw) = match &node.spec {
                        LayerSpec::Conv {
                            in_channels,
                            kernel,
                            groups,
                            ..
                        } => (in_channels / groups, kernel.0, kernel.1),
                        LayerSpec::FullyConnected { in_features, .. } => (*in_features, 1, 1),
                        other => {
                            return Err(FormatError::Validation(format!(
                                "layer {}: {} layers take no filter parameters",
                                node.name,
                                other.kind_name()
                            )))
                        }
                    };
                    let features = entry.codes.len();
                    for (field, len) in [
                        ("alpha", entry.alpha.len()),
                        ("bn_shift", entry.bn_shift.len()),
                        ("bn_scale", entry.bn_scale.len()),
                        ("scale", entry.scale.len()),
                        ("shift", entry.shift.len()),
                    ] {
                        if len != features {
                            return Err(FormatError::Validation(format!(
                                "layer {}: {field} has {len} entries for {features} features",
                                node.name
                            )));
                        }
                    }
                    let bank = QuantizedFilterBank::from_features(
                        FilterShape::new(cin, kh, kw),
                        weight_format,
                        entry
                            .codes
                            .iter()
                            .zip(&entry.alpha)
                            .map(|(codes, &alpha)| FilterFeature {
                                codes: codes.clone(),
                                alpha,
                            })
                            .collect(),
                    )?;
                    let raw_bns = (0..features)
                        .map(|f| BnsRawParams {
                            bn_shift: entry.bn_shift[f],
                            bn_scale: entry.bn_scale[f],
                            scale: entry.scale[f],
                            shift: entry.shift[f],
                            alpha: entry.alpha[f],
                        })
                        .collect();
                    layers.push(Some(LayerDefinition {
                        filters: bank,
                        raw_bns,
                    }));
                }
            }
        }

        Ok(BundleDefinition {
            network,
            input_format,
            out_formats,
            layers,
        })
    }
}

/// Parse a model-bundle file into its raw definition.
pub fn parse_bundle(toml_text: &str) -> Result<BundleDefinition, FormatError> {
    let file: BundleFile = toml::from_str(toml_text)?;
    file.to_definition()
}
