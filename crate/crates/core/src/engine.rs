//! Functional simulator of the accelerator datapath.
//!
//! Per weighted layer the pipeline is: integer dot products over activation
//! codes (PE array) -> fused scale/shift (single-precision) -> ReLU ->
//! requantize to the layer's output format. Max pooling runs directly on
//! codes, average pooling and residual adds decode, combine in real
//! arithmetic, and requantize. All inter-layer tensors are unsigned codes.
//!
//! [`run_reference_fp32`] is the independent check: the same graph evaluated
//! in real arithmetic with unfused normalization parameters and real-valued
//! filters (`alpha * codes`). On models whose intermediate values stay away
//! from quantization tie points, its quantized outputs match the integer
//! pipeline's decoded outputs exactly.

use crate::bns::{fold_input_scale, fuse, BnsError, BnsFused, BnsRawParams};
use crate::netgraph::{FeatureDims, GraphError, LayerInput, LayerSpec, Network};
use crate::numerics::{
    decode_act, encode_activation, quantize_act_ref, ActFormat, NumericsError, QTensor,
    QuantizedFilterBank, TensorShape, WeightFormat,
};
use crate::pe::{
    acc_width, dot_binary_mux, dot_ref, dot_ternary_mux, dot_xnor_popcount, dsp_packed_multiply,
    pack_dsp_operand, DotAccumulator, PeError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("input format {got} does not match expected {expected}")]
    FormatMismatch { expected: ActFormat, got: ActFormat },
    #[error("input shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: FeatureDims,
        got: FeatureDims,
    },
    #[error("layer {0} needs filter/normalization parameters but none were provided")]
    MissingParams(String),
    #[error("layer {0} is unweighted but has attached parameters")]
    UnexpectedParams(String),
    #[error("layer {layer}: {detail}")]
    FilterGeometry { layer: String, detail: String },
    #[error("layer {layer}: accumulator overflow ({source})")]
    Overflow { layer: String, source: PeError },
    #[error("layer {layer}: {detail}")]
    UnsupportedPe { layer: String, detail: String },
    #[error("layer {layer}: standalone {kind} layers are not executable here")]
    UnsupportedLayer { layer: String, kind: String },
    #[error("layer {0} takes more than one input; drive it through run_network")]
    MultiInput(String),
    #[error("bundle has {got} output formats for {expected} layers")]
    FormatCount { expected: usize, got: usize },
    #[error("bundle has {got} parameter slots for {expected} layers")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Bns(#[from] BnsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which dot-product implementation drives the PE array. All variants
/// produce bit-identical results; the specialized ones mirror the hardware
/// structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DotEngine {
    /// Plain multiply-accumulate over decoded values.
    Reference,
    /// Weight-format specific core-logic engine: ternary/binary mux,
    /// XNOR-popcount for 1-bit/1-bit.
    #[default]
    CoreLogic,
    /// Packed 18-bit DSP lanes; requires 2-bit activations and ternary or
    /// signed 2-bit weights.
    PackedDsp,
}

impl std::str::FromStr for DotEngine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(DotEngine::Reference),
            "core-logic" | "corelogic" => Ok(DotEngine::CoreLogic),
            "packed-dsp" | "packeddsp" => Ok(DotEngine::PackedDsp),
            other => Err(format!("unknown dot engine {other:?}")),
        }
    }
}

/// Per-weighted-layer parameters with the scale/shift already fused and the
/// input code scale folded in.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub filters: QuantizedFilterBank,
    pub bns: BnsFused,
}

/// Executable integer-pipeline model: topology plus folded parameters and
/// the activation format at every layer boundary.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    network: Network,
    input_format: ActFormat,
    out_formats: Vec<ActFormat>,
    params: Vec<Option<LayerParams>>,
}

/// Unfused mirror of a bundle for the real-arithmetic reference path.
#[derive(Debug, Clone)]
pub struct ReferenceBundle {
    network: Network,
    out_formats: Vec<ActFormat>,
    params: Vec<Option<RefLayerParams>>,
}

#[derive(Debug, Clone)]
pub struct RefLayerParams {
    /// Real-valued filters, `alpha * codes`, one flat filter per feature.
    pub filters_real: Vec<Vec<f64>>,
    pub raw: Vec<BnsRawParams>,
}

/// Raw model description: quantized filters plus unfused normalization
/// parameters. Builds both the integer bundle (fusing and folding) and the
/// real-arithmetic mirror.
#[derive(Debug, Clone)]
pub struct BundleDefinition {
    pub network: Network,
    pub input_format: ActFormat,
    /// Output activation format per layer.
    pub out_formats: Vec<ActFormat>,
    /// One entry per layer; `Some` exactly for conv/fc layers.
    pub layers: Vec<Option<LayerDefinition>>,
}

#[derive(Debug, Clone)]
pub struct LayerDefinition {
    pub filters: QuantizedFilterBank,
    pub raw_bns: Vec<BnsRawParams>,
}

/// Real-valued NCHW tensor used by the reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub shape: TensorShape,
    pub data: Vec<f64>,
}

impl RealTensor {
    pub fn zeros(shape: TensorShape) -> Self {
        RealTensor {
            data: vec![0.0; shape.volume()],
            shape,
        }
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.shape.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Decode an integer tensor into its real values.
    pub fn from_qtensor(q: &QTensor) -> Self {
        RealTensor {
            shape: q.shape(),
            data: q
                .codes()
                .iter()
                .map(|&c| decode_act(c, q.format()))
                .collect(),
        }
    }
}

/// Execution trace of one layer.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Raw PE-array accumulators (weighted layers only).
    pub accumulators: Option<Vec<i64>>,
    /// Values after the fused scale/shift, before ReLU/requantize
    /// (weighted layers only).
    pub post_bns: Option<Vec<f32>>,
    /// The layer's output codes.
    pub output: QTensor,
}

// (features, cin_per_group, kh, kw) a layer's filter bank must have
fn filter_geometry_for(spec: &LayerSpec) -> Option<(usize, usize, usize, usize)> {
    match spec {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            groups,
            ..
        } => Some((*out_channels, in_channels / groups, kernel.0, kernel.1)),
        LayerSpec::FullyConnected {
            in_features,
            out_features,
        } => Some((*out_features, *in_features, 1, 1)),
        _ => None,
    }
}

impl BundleDefinition {
    fn validate(&self) -> Result<(), EngineError> {
        if self.out_formats.len() != self.network.len() {
            return Err(EngineError::FormatCount {
                expected: self.network.len(),
                got: self.out_formats.len(),
            });
        }
        if self.layers.len() != self.network.len() {
            return Err(EngineError::ParamCount {
                expected: self.network.len(),
                got: self.layers.len(),
            });
        }
        for (i, node) in self.network.layers().iter().enumerate() {
            match (filter_geometry_for(&node.spec), &self.layers[i]) {
                (Some((features, cin, kh, kw)), Some(def)) => {
                    let shape = def.filters.shape();
                    if def.filters.num_features() != features
                        || shape.cin != cin
                        || shape.kh != kh
                        || shape.kw != kw
                    {
                        return Err(EngineError::FilterGeometry {
                            layer: node.name.clone(),
                            detail: format!(
                                "filter bank is {}x({},{},{}), layer needs {}x({},{},{})",
                                def.filters.num_features(),
                                shape.cin,
                                shape.kh,
                                shape.kw,
                                features,
                                cin,
                                kh,
                                kw
                            ),
                        });
                    }
                    if def.filters.format() == WeightFormat::Fp32 {
                        return Err(EngineError::FilterGeometry {
                            layer: node.name.clone(),
                            detail: "the integer engine does not run fp32 weights".to_string(),
                        });
                    }
                    if def.raw_bns.len() != features {
                        return Err(EngineError::FilterGeometry {
                            layer: node.name.clone(),
                            detail: format!(
                                "{} normalization entries for {} features",
                                def.raw_bns.len(),
                                features
                            ),
                        });
                    }
                    // the filter bank and the normalization parameters both
                    // carry the per-feature weight scale; they must agree
                    for (f, raw) in def.raw_bns.iter().enumerate() {
                        if raw.alpha != def.filters.feature(f).alpha {
                            return Err(EngineError::FilterGeometry {
                                layer: node.name.clone(),
                                detail: format!(
                                    "feature {f}: filter alpha {} != normalization alpha {}",
                                    def.filters.feature(f).alpha,
                                    raw.alpha
                                ),
                            });
                        }
                    }
                }
                (Some(_), None) => return Err(EngineError::MissingParams(node.name.clone())),
                (None, Some(_)) => return Err(EngineError::UnexpectedParams(node.name.clone())),
                (None, None) => {}
            }
        }
        Ok(())
    }

    fn layer_input_format(&self, index: usize) -> ActFormat {
        match self.network.layer(index).inputs[0] {
            LayerInput::Source => self.input_format,
            LayerInput::Layer(j) => self.out_formats[j],
        }
    }

    /// Build the integer-pipeline bundle: fuse the raw normalization
    /// parameters and fold in each layer's input code scale.
    pub fn model(&self) -> Result<ModelBundle, EngineError> {
        self.validate()?;
        let mut params = Vec::with_capacity(self.layers.len());
        for (i, def) in self.layers.iter().enumerate() {
            params.push(match def {
                Some(def) => {
                    let fused = fuse(&def.raw_bns)?;
                    let folded = fold_input_scale(&fused, self.layer_input_format(i));
                    Some(LayerParams {
                        filters: def.filters.clone(),
                        bns: folded,
                    })
                }
                None => None,
            });
        }
        Ok(ModelBundle {
            network: self.network.clone(),
            input_format: self.input_format,
            out_formats: self.out_formats.clone(),
            params,
        })
    }

    /// Build the real-arithmetic mirror with unfused parameters and
    /// `alpha * codes` filters.
    pub fn reference(&self) -> Result<ReferenceBundle, EngineError> {
        self.validate()?;
        let params = self
            .layers
            .iter()
            .map(|def| {
                def.as_ref().map(|def| RefLayerParams {
                    filters_real: def
                        .filters
                        .features()
                        .iter()
                        .map(|feat| {
                            feat.codes
                                .iter()
                                .map(|&c| f64::from(feat.alpha) * f64::from(c))
                                .collect()
                        })
                        .collect(),
                    raw: def.raw_bns.clone(),
                })
            })
            .collect();
        Ok(ReferenceBundle {
            network: self.network.clone(),
            out_formats: self.out_formats.clone(),
            params,
        })
    }
}

impl ModelBundle {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn input_format(&self) -> ActFormat {
        self.input_format
    }

    pub fn out_format(&self, layer: usize) -> ActFormat {
        self.out_formats[layer]
    }

    pub fn layer_params(&self, layer: usize) -> Option<&LayerParams> {
        self.params[layer].as_ref()
    }
}

/// Activation value in the integer dot-product domain: the raw code for
/// fractional formats (the 1/L scale is folded into gamma), the decoded
/// +/-1 value for bipolar codes.
fn act_as_int(code: u8, fmt: ActFormat) -> i64 {
    if fmt.is_bipolar() {
        2 * i64::from(code) - 1
    } else {
        i64::from(code)
    }
}

fn out_shape(n: usize, dims: FeatureDims) -> TensorShape {
    TensorShape::new(n, dims.c, dims.h, dims.w)
}

struct ConvGeometry {
    cout: usize,
    cin_per_g: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    groups: usize,
    flat_fc: bool,
}

fn weighted_geometry(spec: &LayerSpec) -> Option<ConvGeometry> {
    match *spec {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        } => Some(ConvGeometry {
            cout: out_channels,
            cin_per_g: in_channels / groups,
            kh: kernel.0,
            kw: kernel.1,
            stride,
            padding,
            groups,
            flat_fc: false,
        }),
        LayerSpec::FullyConnected {
            in_features,
            out_features,
        } => Some(ConvGeometry {
            cout: out_features,
            cin_per_g: in_features,
            kh: 1,
            kw: 1,
            stride: 1,
            padding: 0,
            groups: 1,
            flat_fc: true,
        }),
        _ => None,
    }
}

/// Operand vectors for one output window, gathered over the valid (in-bounds)
/// taps. Padding never enters a dot product: a padded tap contributes zero in
/// every representation, so it is simply skipped.
#[derive(Default)]
struct Gather {
    acts_int: Vec<i64>,
    act_codes: Vec<u8>,
    w_logical: Vec<i64>,
    w_codes: Vec<i8>,
    w_storage: Vec<u8>,
}

impl Gather {
    fn clear(&mut self) {
        self.acts_int.clear();
        self.act_codes.clear();
        self.w_logical.clear();
        self.w_codes.clear();
        self.w_storage.clear();
    }

    fn push(&mut self, code: u8, fmt: ActFormat, wcode: i8) {
        self.acts_int.push(act_as_int(code, fmt));
        self.act_codes.push(code);
        self.w_logical.push(i64::from(wcode));
        self.w_codes.push(wcode);
        self.w_storage.push(((wcode + 1) / 2) as u8);
    }

    fn dot(&self, pe: DotEngine, weight_format: WeightFormat, act_fmt: ActFormat) -> i64 {
        match (pe, weight_format) {
            (DotEngine::Reference, _) => dot_ref(&self.acts_int, &self.w_logical),
            (DotEngine::CoreLogic, WeightFormat::Ternary) => {
                dot_ternary_mux(&self.acts_int, &self.w_codes)
            }
            (DotEngine::CoreLogic, WeightFormat::Binary) => {
                if act_fmt.is_bipolar() {
                    dot_xnor_popcount(&self.act_codes, &self.w_storage)
                } else {
                    dot_binary_mux(&self.acts_int, &self.w_storage)
                }
            }
            (DotEngine::CoreLogic, _) => dot_ref(&self.acts_int, &self.w_logical),
            (DotEngine::PackedDsp, _) => unreachable!("packed path has its own loop"),
        }
    }
}

fn check_packed_supported(
    layer: &str,
    act_fmt: ActFormat,
    weight_format: WeightFormat,
) -> Result<(), EngineError> {
    let weights_ok = matches!(
        weight_format,
        WeightFormat::Ternary | WeightFormat::SignedInt { bits: 2 }
    );
    if act_fmt.bits() != 2 || !weights_ok {
        return Err(EngineError::UnsupportedPe {
            layer: layer.to_string(),
            detail: format!(
                "packed-DSP lanes need 2-bit activations and ternary/int2 weights, \
                 layer is {act_fmt} x {weight_format}"
            ),
        });
    }
    Ok(())
}

fn overflow(name: &str) -> impl Fn(PeError) -> EngineError + '_ {
    move |source| EngineError::Overflow {
        layer: name.to_string(),
        source,
    }
}

/// Run one weighted layer (conv, or fc as a 1x1 conv over the flattened
/// input) through the selected PE variant, producing raw accumulators and
/// post-BNS values.
fn run_weighted(
    name: &str,
    geo: &ConvGeometry,
    params: &LayerParams,
    pe: DotEngine,
    input: &QTensor,
    out_dims: FeatureDims,
) -> Result<(Vec<i64>, Vec<f32>), EngineError> {
    let in_fmt = input.format();
    let weight_fmt = params.filters.format();
    let in_shape = input.shape();
    let batch = in_shape.n;
    let shape = out_shape(batch, out_dims);
    let mut accs = vec![0i64; shape.volume()];
    let mut post = vec![0f32; shape.volume()];

    let dot_size = (geo.cin_per_g * geo.kh * geo.kw) as u32;
    let width = acc_width(
        u32::from(in_fmt.bits()),
        weight_fmt.effective_bits(),
        dot_size,
    );
    let flat_len = in_shape.c * in_shape.h * in_shape.w;
    let features_per_group = geo.cout / geo.groups;
    let fshape = params.filters.shape();

    if pe == DotEngine::PackedDsp {
        check_packed_supported(name, in_fmt, weight_fmt)?;
    }

    let mut gather = Gather::default();
    for n in 0..batch {
        for f in 0..geo.cout {
            let feat = params.filters.feature(f);
            let ci_base = (f / features_per_group) * geo.cin_per_g;
            for oy in 0..out_dims.h {
                if pe == DotEngine::PackedDsp {
                    // four output positions share each filter tap through a
                    // single packed multiply
                    let mut ox_base = 0;
                    while ox_base < out_dims.w {
                        let lanes_n = (out_dims.w - ox_base).min(4);
                        let mut lane_accs = [DotAccumulator::new(width); 4];
                        for ci in 0..geo.cin_per_g {
                            for ky in 0..geo.kh {
                                for kx in 0..geo.kw {
                                    let wcode = feat.codes[fshape.index(ci, ky, kx)];
                                    let mut lanes = [0u8; 4];
                                    for (lane, slot) in
                                        lanes.iter_mut().enumerate().take(lanes_n)
                                    {
                                        if geo.flat_fc {
                                            // fc reads the flattened input;
                                            // there is only one output
                                            // position per feature
                                            *slot = input.codes()[n * flat_len + ci];
                                            continue;
                                        }
                                        let ox = ox_base + lane;
                                        let iy = (oy * geo.stride + ky) as isize
                                            - geo.padding as isize;
                                        let ix = (ox * geo.stride + kx) as isize
                                            - geo.padding as isize;
                                        if iy >= 0
                                            && ix >= 0
                                            && (iy as usize) < in_shape.h
                                            && (ix as usize) < in_shape.w
                                        {
                                            *slot = input.code_at(
                                                n,
                                                ci_base + ci,
                                                iy as usize,
                                                ix as usize,
                                            );
                                        }
                                        // padded taps stay zero and
                                        // contribute nothing
                                    }
                                    let packed = pack_dsp_operand(lanes)
                                        .map_err(overflow(name))?;
                                    let prods = dsp_packed_multiply(packed, wcode)
                                        .map_err(overflow(name))?;
                                    for lane in 0..lanes_n {
                                        lane_accs[lane]
                                            .add(i64::from(prods[lane]))
                                            .map_err(overflow(name))?;
                                    }
                                }
                            }
                        }
                        for (lane, acc) in lane_accs.iter().enumerate().take(lanes_n) {
                            let idx = shape.index(n, f, oy, ox_base + lane);
                            accs[idx] = acc.value();
                            post[idx] = params.bns.apply(f, acc.value());
                        }
                        ox_base += lanes_n;
                    }
                } else {
                    for ox in 0..out_dims.w {
                        gather.clear();
                        if geo.flat_fc {
                            let base = n * flat_len;
                            for (i, &code) in
                                input.codes()[base..base + flat_len].iter().enumerate()
                            {
                                gather.push(code, in_fmt, feat.codes[i]);
                            }
                        } else {
                            for ci in 0..geo.cin_per_g {
                                for ky in 0..geo.kh {
                                    for kx in 0..geo.kw {
                                        let iy = (oy * geo.stride + ky) as isize
                                            - geo.padding as isize;
                                        let ix = (ox * geo.stride + kx) as isize
                                            - geo.padding as isize;
                                        if iy >= 0
                                            && ix >= 0
                                            && (iy as usize) < in_shape.h
                                            && (ix as usize) < in_shape.w
                                        {
                                            gather.push(
                                                input.code_at(
                                                    n,
                                                    ci_base + ci,
                                                    iy as usize,
                                                    ix as usize,
                                                ),
                                                in_fmt,
                                                feat.codes[fshape.index(ci, ky, kx)],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                        let acc = gather.dot(pe, weight_fmt, in_fmt);
                        DotAccumulator::new(width).add(acc).map_err(overflow(name))?;
                        let idx = shape.index(n, f, oy, ox);
                        accs[idx] = acc;
                        post[idx] = params.bns.apply(f, acc);
                    }
                }
            }
        }
    }
    Ok((accs, post))
}

struct LayerOutput {
    output: QTensor,
    accumulators: Option<Vec<i64>>,
    post_bns: Option<Vec<f32>>,
}

fn exec_layer(
    bundle: &ModelBundle,
    pe: DotEngine,
    index: usize,
    inputs: &[&QTensor],
) -> Result<LayerOutput, EngineError> {
    let node = bundle.network.layer(index);
    let out_dims = bundle.network.output_dims(index);
    let out_fmt = bundle.out_formats[index];
    let input = inputs[0];
    let in_shape = input.shape();
    let batch = in_shape.n;
    let shape = out_shape(batch, out_dims);

    // weighted layers: PE array -> BNS -> ReLU -> quantize
    if let Some(geo) = weighted_geometry(&node.spec) {
        let params = bundle.params[index]
            .as_ref()
            .ok_or_else(|| EngineError::MissingParams(node.name.clone()))?;
        let (accs, post) = run_weighted(&node.name, &geo, params, pe, input, out_dims)?;
        let codes: Vec<u8> = post
            .iter()
            .map(|&v| encode_activation(f64::from(v), out_fmt))
            .collect();
        let output = QTensor::new(shape, out_fmt, codes)?;
        return Ok(LayerOutput {
            output,
            accumulators: Some(accs),
            post_bns: Some(post),
        });
    }

    let mut codes = vec![0u8; shape.volume()];
    match &node.spec {
        LayerSpec::MaxPool {
            kernel,
            stride,
            padding,
        } => {
            // code order equals decoded-value order, so max runs on codes
            if input.format() != out_fmt {
                return Err(EngineError::FormatMismatch {
                    expected: input.format(),
                    got: out_fmt,
                });
            }
            for n in 0..batch {
                for c in 0..out_dims.c {
                    for oy in 0..out_dims.h {
                        for ox in 0..out_dims.w {
                            let mut best: Option<u8> = None;
                            for ky in 0..kernel.0 {
                                for kx in 0..kernel.1 {
                                    let iy =
                                        (oy * stride + ky) as isize - *padding as isize;
                                    let ix =
                                        (ox * stride + kx) as isize - *padding as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < in_shape.h
                                        && (ix as usize) < in_shape.w
                                    {
                                        let code =
                                            input.code_at(n, c, iy as usize, ix as usize);
                                        best = Some(best.map_or(code, |b: u8| b.max(code)));
                                    }
                                }
                            }
                            codes[shape.index(n, c, oy, ox)] = best.unwrap_or(0);
                        }
                    }
                }
            }
        }
        LayerSpec::AvgPool {
            kernel,
            stride,
            padding,
        } => {
            // decode, average over the valid taps, requantize
            for n in 0..batch {
                for c in 0..out_dims.c {
                    for oy in 0..out_dims.h {
                        for ox in 0..out_dims.w {
                            let mut sum = 0.0f64;
                            let mut count = 0usize;
                            for ky in 0..kernel.0 {
                                for kx in 0..kernel.1 {
                                    let iy =
                                        (oy * stride + ky) as isize - *padding as isize;
                                    let ix =
                                        (ox * stride + kx) as isize - *padding as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < in_shape.h
                                        && (ix as usize) < in_shape.w
                                    {
                                        sum += input.value_at(n, c, iy as usize, ix as usize);
                                        count += 1;
                                    }
                                }
                            }
                            let mean = sum / count.max(1) as f64;
                            codes[shape.index(n, c, oy, ox)] =
                                encode_activation(mean, out_fmt);
                        }
                    }
                }
            }
        }
        LayerSpec::EltwiseAdd => {
            // decode both branches, add, ReLU, requantize
            let rhs = inputs[1];
            for (i, code) in codes.iter_mut().enumerate() {
                let a = decode_act(input.codes()[i], input.format());
                let b = decode_act(rhs.codes()[i], rhs.format());
                *code = encode_activation(a + b, out_fmt);
            }
        }
        LayerSpec::Relu => {
            for (i, code) in codes.iter_mut().enumerate() {
                let v = decode_act(input.codes()[i], input.format()).max(0.0);
                *code = encode_activation(v, out_fmt);
            }
        }
        LayerSpec::Quantize => {
            for (i, code) in codes.iter_mut().enumerate() {
                let v = decode_act(input.codes()[i], input.format());
                *code = encode_activation(v, out_fmt);
            }
        }
        LayerSpec::Bns => {
            return Err(EngineError::UnsupportedLayer {
                layer: node.name.clone(),
                kind: "bns".to_string(),
            });
        }
        LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. } => unreachable!(),
    }
    Ok(LayerOutput {
        output: QTensor::new(shape, out_fmt, codes)?,
        accumulators: None,
        post_bns: None,
    })
}

fn expected_edge_format(bundle: &ModelBundle, index: usize, edge: usize) -> ActFormat {
    match bundle.network.layer(index).inputs[edge] {
        LayerInput::Source => bundle.input_format,
        LayerInput::Layer(j) => bundle.out_formats[j],
    }
}

fn check_edge_input(
    bundle: &ModelBundle,
    index: usize,
    edge: usize,
    input: &QTensor,
) -> Result<(), EngineError> {
    let expected_fmt = expected_edge_format(bundle, index, edge);
    if input.format() != expected_fmt {
        return Err(EngineError::FormatMismatch {
            expected: expected_fmt,
            got: input.format(),
        });
    }
    let expected_dims = bundle.network.input_dims_of(index, edge);
    let got = input.shape();
    let got_dims = FeatureDims::new(got.c, got.h, got.w);
    if got_dims != expected_dims {
        return Err(EngineError::ShapeMismatch {
            expected: expected_dims,
            got: got_dims,
        });
    }
    Ok(())
}

/// Run a single-input layer on an explicit input tensor.
pub fn run_layer(
    bundle: &ModelBundle,
    pe: DotEngine,
    index: usize,
    input: &QTensor,
) -> Result<QTensor, EngineError> {
    let node = bundle.network.layer(index);
    if node.inputs.len() != 1 {
        return Err(EngineError::MultiInput(node.name.clone()));
    }
    check_edge_input(bundle, index, 0, input)?;
    Ok(exec_layer(bundle, pe, index, &[input])?.output)
}

/// Run the whole graph on an input tensor.
pub fn run_network(
    bundle: &ModelBundle,
    pe: DotEngine,
    input: &QTensor,
) -> Result<QTensor, EngineError> {
    run_network_impl(bundle, pe, input, false).map(|(out, _)| out)
}

/// Run the whole graph, recording a per-layer trace.
pub fn run_network_traced(
    bundle: &ModelBundle,
    pe: DotEngine,
    input: &QTensor,
) -> Result<(QTensor, Vec<LayerTrace>), EngineError> {
    let (out, traces) = run_network_impl(bundle, pe, input, true)?;
    Ok((out, traces))
}

fn run_network_impl(
    bundle: &ModelBundle,
    pe: DotEngine,
    input: &QTensor,
    want_trace: bool,
) -> Result<(QTensor, Vec<LayerTrace>), EngineError> {
    if input.format() != bundle.input_format {
        return Err(EngineError::FormatMismatch {
            expected: bundle.input_format,
            got: input.format(),
        });
    }
    let got = input.shape();
    let got_dims = FeatureDims::new(got.c, got.h, got.w);
    if got_dims != bundle.network.input_dims() {
        return Err(EngineError::ShapeMismatch {
            expected: bundle.network.input_dims(),
            got: got_dims,
        });
    }

    let mut outputs: Vec<QTensor> = Vec::with_capacity(bundle.network.len());
    let mut traces: Vec<LayerTrace> = Vec::new();
    for index in 0..bundle.network.len() {
        let node = bundle.network.layer(index);
        let inputs: Vec<&QTensor> = node
            .inputs
            .iter()
            .map(|edge| match edge {
                LayerInput::Source => input,
                LayerInput::Layer(j) => &outputs[*j],
            })
            .collect();
        let result = exec_layer(bundle, pe, index, &inputs)?;
        if want_trace {
            traces.push(LayerTrace {
                accumulators: result.accumulators,
                post_bns: result.post_bns,
                output: result.output.clone(),
            });
        }
        outputs.push(result.output);
    }
    let final_output = outputs.pop().unwrap_or_else(|| input.clone());
    Ok((final_output, traces))
}

fn ref_quantize(v: f64, fmt: ActFormat) -> f64 {
    if fmt.is_bipolar() {
        if v > 0.0 {
            1.0
        } else {
            -1.0
        }
    } else {
        quantize_act_ref(v, fmt)
    }
}

/// Run the real-arithmetic reference path: real convolution with
/// `alpha * codes` filters, unfused normalization, ReLU, and reference
/// quantization per layer. Outputs are real values on the quantization grid.
pub fn run_reference_fp32(
    reference: &ReferenceBundle,
    input: &RealTensor,
) -> Result<RealTensor, EngineError> {
    let got = input.shape;
    let got_dims = FeatureDims::new(got.c, got.h, got.w);
    if got_dims != reference.network.input_dims() {
        return Err(EngineError::ShapeMismatch {
            expected: reference.network.input_dims(),
            got: got_dims,
        });
    }
    let mut outputs: Vec<RealTensor> = Vec::with_capacity(reference.network.len());
    for index in 0..reference.network.len() {
        let node = reference.network.layer(index);
        let inputs: Vec<&RealTensor> = node
            .inputs
            .iter()
            .map(|edge| match edge {
                LayerInput::Source => input,
                LayerInput::Layer(j) => &outputs[*j],
            })
            .collect();
        let out = exec_ref_layer(reference, index, &inputs)?;
        outputs.push(out);
    }
    Ok(outputs.pop().unwrap_or_else(|| input.clone()))
}

fn exec_ref_layer(
    reference: &ReferenceBundle,
    index: usize,
    inputs: &[&RealTensor],
) -> Result<RealTensor, EngineError> {
    let node = reference.network.layer(index);
    let out_dims = reference.network.output_dims(index);
    let out_fmt = reference.out_formats[index];
    let input = inputs[0];
    let in_shape = input.shape;
    let batch = in_shape.n;
    let shape = out_shape(batch, out_dims);
    let mut out = RealTensor::zeros(shape);

    if let Some(geo) = weighted_geometry(&node.spec) {
        let params = reference.params[index]
            .as_ref()
            .ok_or_else(|| EngineError::MissingParams(node.name.clone()))?;
        let flat_len = in_shape.c * in_shape.h * in_shape.w;
        let features_per_group = geo.cout / geo.groups;
        let fshape_w = geo.kh * geo.kw;
        for n in 0..batch {
            for f in 0..geo.cout {
                let filter = &params.filters_real[f];
                let raw = &params.raw[f];
                let ci_base = (f / features_per_group) * geo.cin_per_g;
                for oy in 0..out_dims.h {
                    for ox in 0..out_dims.w {
                        let mut acc = 0.0f64;
                        if geo.flat_fc {
                            let base = n * flat_len;
                            for (i, w) in filter.iter().enumerate() {
                                acc += w * input.data[base + i];
                            }
                        } else {
                            for ci in 0..geo.cin_per_g {
                                for ky in 0..geo.kh {
                                    for kx in 0..geo.kw {
                                        let iy = (oy * geo.stride + ky) as isize
                                            - geo.padding as isize;
                                        let ix = (ox * geo.stride + kx) as isize
                                            - geo.padding as isize;
                                        if iy >= 0
                                            && ix >= 0
                                            && (iy as usize) < in_shape.h
                                            && (ix as usize) < in_shape.w
                                        {
                                            let w = filter[ci * fshape_w + ky * geo.kw + kx];
                                            acc += w
                                                * input.at(
                                                    n,
                                                    ci_base + ci,
                                                    iy as usize,
                                                    ix as usize,
                                                );
                                        }
                                    }
                                }
                            }
                        }
                        let value = raw.apply_normalized(acc).max(0.0);
                        out.set(n, f, oy, ox, ref_quantize(value, out_fmt));
                    }
                }
            }
        }
        return Ok(out);
    }

    match &node.spec {
        LayerSpec::MaxPool {
            kernel,
            stride,
            padding,
        } => {
            for n in 0..batch {
                for c in 0..out_dims.c {
                    for oy in 0..out_dims.h {
                        for ox in 0..out_dims.w {
                            let mut best = f64::NEG_INFINITY;
                            let mut any = false;
                            for ky in 0..kernel.0 {
                                for kx in 0..kernel.1 {
                                    let iy = (oy * stride + ky) as isize - *padding as isize;
                                    let ix = (ox * stride + kx) as isize - *padding as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < in_shape.h
                                        && (ix as usize) < in_shape.w
                                    {
                                        best =
                                            best.max(input.at(n, c, iy as usize, ix as usize));
                                        any = true;
                                    }
                                }
                            }
                            let v = if any {
                                best
                            } else if out_fmt.is_bipolar() {
                                -1.0
                            } else {
                                0.0
                            };
                            out.set(n, c, oy, ox, v);
                        }
                    }
                }
            }
        }
        LayerSpec::AvgPool {
            kernel,
            stride,
            padding,
        } => {
            for n in 0..batch {
                for c in 0..out_dims.c {
                    for oy in 0..out_dims.h {
                        for ox in 0..out_dims.w {
                            let mut sum = 0.0f64;
                            let mut count = 0usize;
                            for ky in 0..kernel.0 {
                                for kx in 0..kernel.1 {
                                    let iy = (oy * stride + ky) as isize - *padding as isize;
                                    let ix = (ox * stride + kx) as isize - *padding as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < in_shape.h
                                        && (ix as usize) < in_shape.w
                                    {
                                        sum += input.at(n, c, iy as usize, ix as usize);
                                        count += 1;
                                    }
                                }
                            }
                            let mean = sum / count.max(1) as f64;
                            out.set(n, c, oy, ox, ref_quantize(mean, out_fmt));
                        }
                    }
                }
            }
        }
        LayerSpec::EltwiseAdd => {
            let rhs = inputs[1];
            for (i, slot) in out.data.iter_mut().enumerate() {
                *slot = ref_quantize(input.data[i] + rhs.data[i], out_fmt);
            }
        }
        LayerSpec::Relu => {
            for (i, slot) in out.data.iter_mut().enumerate() {
                *slot = ref_quantize(input.data[i].max(0.0), out_fmt);
            }
        }
        LayerSpec::Quantize => {
            for (i, slot) in out.data.iter_mut().enumerate() {
                *slot = ref_quantize(input.data[i], out_fmt);
            }
        }
        LayerSpec::Bns => {
            return Err(EngineError::UnsupportedLayer {
                layer: node.name.clone(),
                kind: "bns".to_string(),
            });
        }
        LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. } => unreachable!(),
    }
    Ok(out)
}



#[cfg(test)]
mod golden_trace {
    use super::*;
    use crate::netgraph::Node;
    use crate::numerics::{FilterFeature, FilterShape};

    fn golden_bundle() -> BundleDefinition {
        let network = Network::new(
            "golden",
            FeatureDims::new(1, 6, 6),
            vec![
                Node {
                    name: "conv1".into(),
                    spec: LayerSpec::Conv {
                        in_channels: 1,
                        out_channels: 2,
                        kernel: (3, 3),
                        stride: 1,
                        padding: 1,
                        groups: 1,
                    },
                    inputs: vec![LayerInput::Source],
                },
                Node {
                    name: "pool1".into(),
                    spec: LayerSpec::MaxPool {
                        kernel: (2, 2),
                        stride: 2,
                        padding: 0,
                    },
                    inputs: vec![LayerInput::Layer(0)],
                },
                Node {
                    name: "conv2".into(),
                    spec: LayerSpec::Conv {
                        in_channels: 2,
                        out_channels: 1,
                        kernel: (2, 2),
                        stride: 1,
                        padding: 0,
                        groups: 1,
                    },
                    inputs: vec![LayerInput::Layer(1)],
                },
            ],
        )
        .unwrap();
        let bank = |format, shape, feats: Vec<(Vec<i8>, f32)>| {
            QuantizedFilterBank::from_features(
                shape,
                format,
                feats
                    .into_iter()
                    .map(|(codes, alpha)| FilterFeature { codes, alpha })
                    .collect(),
            )
            .unwrap()
        };
        BundleDefinition {
            network,
            input_format: ActFormat::A8,
            out_formats: vec![ActFormat::A4, ActFormat::A4, ActFormat::A2],
            layers: vec![
                Some(LayerDefinition {
                    filters: bank(
                        WeightFormat::Ternary,
                        FilterShape::new(1, 3, 3),
                        vec![
                            (vec![1, 0, -1, 0, 1, 0, -1, 0, 1], 0.8),
                            (vec![0, 1, 0, 1, -1, 1, 0, 1, 0], 1.2),
                        ],
                    ),
                    raw_bns: vec![
                        BnsRawParams {
                            bn_shift: 0.1,
                            bn_scale: 1.2,
                            scale: 0.4,
                            shift: 0.3,
                            alpha: 0.8,
                        },
                        BnsRawParams {
                            bn_shift: -0.2,
                            bn_scale: 0.9,
                            scale: 0.15,
                            shift: 0.1,
                            alpha: 1.2,
                        },
                    ],
                }),
                None,
                Some(LayerDefinition {
                    filters: bank(
                        WeightFormat::Ternary,
                        FilterShape::new(2, 2, 2),
                        vec![(vec![1, -1, 0, 1, 1, 0, -1, 1], 0.6)],
                    ),
                    raw_bns: vec![BnsRawParams {
                        bn_shift: 0.05,
                        bn_scale: 1.1,
                        scale: 0.7,
                        shift: 0.15,
                        alpha: 0.6,
                    }],
                }),
            ],
        }
    }

    fn golden_input() -> QTensor {
        let codes: Vec<u8> = vec![
            13, 200, 77, 41, 255, 9, 183, 62, 0, 148, 230, 5, 96, 31, 172, 119, 204, 66, 12,
            250, 88, 137, 3, 59, 222, 101, 47, 190, 74, 28, 163, 215, 6, 132, 249, 55,
        ];
        QTensor::new(TensorShape::new(1, 1, 6, 6), ActFormat::A8, codes).unwrap()
    }

    // Frozen expectations, generated once from the real-arithmetic
    // reference path and checked against the integer pipeline ever since.
    const GOLDEN_CONV1: &[u8] = &[
        5, 4, 7, 8, 6, 1, 4, 5, 8, 4, 7, 5, 8, 9, 4, 1, 8, 9, 5, 4, 5, 6, 2, 7, 7, 2, 5, 12,
        5, 1, 5, 10, 3, 6, 10, 6, 6, 1, 4, 7, 2, 5, 2, 6, 7, 5, 6, 6, 4, 8, 3, 8, 5, 4, 9, 2,
        8, 5, 8, 2, 3, 9, 6, 4, 7, 4, 5, 3, 7, 6, 2, 5,
    ];
    const GOLDEN_POOL1: &[u8] = &[5, 8, 7, 9, 6, 9, 10, 12, 10, 6, 7, 6, 9, 8, 8, 9, 7, 7];
    const GOLDEN_OUT: &[u8] = &[1, 2, 2, 2];
    const GOLDEN_ORACLE: &[f64] = &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];

    #[test]
    fn three_layer_bundle_matches_golden_trace() {
        let def = golden_bundle();
        let model = def.model().unwrap();
        let input = golden_input();
        for engine in [DotEngine::Reference, DotEngine::CoreLogic] {
            let (out, traces) = run_network_traced(&model, engine, &input).unwrap();
            assert_eq!(traces[0].output.codes(), GOLDEN_CONV1);
            assert_eq!(traces[1].output.codes(), GOLDEN_POOL1);
            assert_eq!(out.codes(), GOLDEN_OUT);
        }

        let reference = def.reference().unwrap();
        let oracle = run_reference_fp32(&reference, &RealTensor::from_qtensor(&input)).unwrap();
        assert_eq!(oracle.data, GOLDEN_ORACLE);
    }

    /// A zero input leaves only the shift terms: the first layer's outputs
    /// are its quantized betas, constant per feature.
    #[test]
    fn zero_input_yields_shift_driven_constants() {
        let def = golden_bundle();
        let model = def.model().unwrap();
        let input = QTensor::zeros(TensorShape::new(1, 1, 6, 6), ActFormat::A8);
        let (_, traces) = run_network_traced(&model, DotEngine::CoreLogic, &input).unwrap();
        let conv1 = &traces[0].output;
        // beta_0 = 0.3 - (0.4/1.2)*0.1 = 0.2667 -> 4-bit code 4
        // beta_1 = 0.1 - (0.15/0.9)*(-0.2) = 0.1333 -> 4-bit code 2
        let codes = conv1.codes();
        assert!(codes[..36].iter().all(|&c| c == 4), "{codes:?}");
        assert!(codes[36..].iter().all(|&c| c == 2), "{codes:?}");

        let reference = def.reference().unwrap();
        let oracle = run_reference_fp32(&reference, &RealTensor::from_qtensor(&input)).unwrap();
        let out = run_network(&model, DotEngine::CoreLogic, &input).unwrap();
        let decoded: Vec<f64> = out
            .codes()
            .iter()
            .map(|&c| decode_act(c, out.format()))
            .collect();
        assert_eq!(decoded, oracle.data);
    }
}
