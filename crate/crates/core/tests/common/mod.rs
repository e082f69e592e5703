//! Shared test support: random tie-free toy models for integer-vs-reference
//! equivalence runs.
//!
//! Models are small conv stacks (optionally with a max pool and a final fc
//! layer) whose normalization parameters are drawn so post-BNS values spread
//! over the quantizer's input range. Rejection sampling discards any draw
//! that puts a pre-quantization value within 1e-4 of a rounding tie point,
//! where 32-bit fusion arithmetic could legitimately flip a code.

use lpnn_core::bns::BnsRawParams;
use lpnn_core::engine::{run_network_traced, BundleDefinition, DotEngine, LayerDefinition};
use lpnn_core::netgraph::{FeatureDims, LayerInput, LayerSpec, Network, Node};
use lpnn_core::numerics::{
    quantize_weights_binary, quantize_weights_ternary, ActFormat, FilterFeature, FilterShape,
    QTensor, QuantizedFilterBank, TensorShape, WeightFormat,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const TIE_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// Fractional activations, ternary weights, mux engine.
    Ternary,
    /// Fractional activations, binary weights, sign-flip/mux engine.
    Binary,
    /// 1-bit bipolar activations and weights, XNOR-popcount engine.
    Xnor,
    /// 2-bit activations, ternary weights, packed-DSP lanes.
    PackedDsp,
    /// 4-bit activations, signed 4-bit weights, plain MAC datapath.
    SignedInt4,
}

pub const ALL_KINDS: [ToyKind; 5] = [
    ToyKind::Ternary,
    ToyKind::Binary,
    ToyKind::Xnor,
    ToyKind::PackedDsp,
    ToyKind::SignedInt4,
];

impl ToyKind {
    pub fn engine(self) -> DotEngine {
        match self {
            ToyKind::PackedDsp => DotEngine::PackedDsp,
            ToyKind::SignedInt4 => DotEngine::Reference,
            _ => DotEngine::CoreLogic,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Ternary => "ternary-mux",
            ToyKind::Binary => "binary-mux",
            ToyKind::Xnor => "xnor-popcount",
            ToyKind::PackedDsp => "packed-dsp",
            ToyKind::SignedInt4 => "signed-int MAC",
        }
    }

    fn input_format(self, rng: &mut ChaCha8Rng) -> ActFormat {
        match self {
            ToyKind::Xnor => ActFormat::A1,
            ToyKind::PackedDsp => ActFormat::A2,
            _ => *[ActFormat::A4, ActFormat::A8].choose(rng).unwrap(),
        }
    }

    fn hidden_format(self, rng: &mut ChaCha8Rng) -> ActFormat {
        match self {
            ToyKind::Xnor => ActFormat::A1,
            ToyKind::PackedDsp => ActFormat::A2,
            _ => *[ActFormat::A2, ActFormat::A3, ActFormat::A4, ActFormat::A8]
                .choose(rng)
                .unwrap(),
        }
    }

    fn weight_format(self) -> WeightFormat {
        match self {
            ToyKind::Ternary | ToyKind::PackedDsp => WeightFormat::Ternary,
            ToyKind::Binary | ToyKind::Xnor => WeightFormat::Binary,
            ToyKind::SignedInt4 => WeightFormat::signed(4).unwrap(),
        }
    }
}

fn random_bank(
    rng: &mut ChaCha8Rng,
    kind: ToyKind,
    features: usize,
    shape: FilterShape,
) -> Option<QuantizedFilterBank> {
    let volume = shape.volume();
    match kind.weight_format() {
        WeightFormat::Ternary => {
            let filters: Vec<Vec<f32>> = (0..features)
                .map(|_| (0..volume).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            quantize_weights_ternary(&filters, shape).ok()
        }
        WeightFormat::Binary => {
            let filters: Vec<Vec<f32>> = (0..features)
                .map(|_| (0..volume).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            quantize_weights_binary(&filters, shape).ok()
        }
        WeightFormat::SignedInt { bits } => {
            let half = 1i16 << (bits - 1);
            let feats = (0..features)
                .map(|_| FilterFeature {
                    codes: (0..volume)
                        .map(|_| rng.gen_range(-half..half) as i8)
                        .collect(),
                    alpha: rng.gen_range(0.02..0.2),
                })
                .collect();
            QuantizedFilterBank::from_features(shape, WeightFormat::SignedInt { bits }, feats).ok()
        }
        WeightFormat::Fp32 => unreachable!(),
    }
}

/// Normalization parameters aimed so gamma * acc spans the quantizer input
/// range for accumulators up to `acc_scale`.
fn random_bns(rng: &mut ChaCha8Rng, alpha: f32, acc_scale: f64) -> BnsRawParams {
    let mut gain = rng.gen_range(0.3..1.3) / acc_scale.max(1.0);
    if rng.gen_bool(0.15) {
        gain = -gain;
    }
    let beta = rng.gen_range(-0.3..0.8);
    let bn_scale = rng.gen_range(0.5..2.0f64);
    let bn_shift = rng.gen_range(-1.0..1.0f64);
    // gamma = (y / x) * alpha, beta = z - (y / x) * w
    let y = gain * bn_scale / f64::from(alpha);
    let z = beta + (y / bn_scale) * bn_shift;
    BnsRawParams {
        bn_shift: bn_shift as f32,
        bn_scale: bn_scale as f32,
        scale: y as f32,
        shift: z as f32,
        alpha,
    }
}

fn bns_for_bank(
    rng: &mut ChaCha8Rng,
    bank: &QuantizedFilterBank,
    input_format: ActFormat,
) -> Vec<BnsRawParams> {
    let act_peak = if input_format.is_bipolar() {
        1.0
    } else {
        f64::from(input_format.levels())
    };
    (0..bank.num_features())
        .map(|f| {
            let feat = bank.feature(f);
            let weight_mass: f64 = feat
                .codes
                .iter()
                .map(|&c| f64::from(c.unsigned_abs()))
                .sum();
            random_bns(rng, feat.alpha, weight_mass * act_peak)
        })
        .collect()
}

fn build_candidate(rng: &mut ChaCha8Rng, kind: ToyKind) -> Option<(BundleDefinition, QTensor)> {
    let in_c = rng.gen_range(1..=3usize);
    let input_spatial = rng.gen_range(3..=6usize);
    let input_format = kind.input_format(rng);
    let n_convs = rng.gen_range(1..=3usize);

    let mut nodes: Vec<Node> = Vec::new();
    let mut out_formats: Vec<ActFormat> = Vec::new();
    let mut layer_defs: Vec<Option<LayerDefinition>> = Vec::new();
    let mut prev_c = in_c;
    let mut prev_fmt = input_format;
    let mut spatial = input_spatial;

    for i in 0..n_convs {
        let features = rng.gen_range(1..=8usize);
        let k = rng.gen_range(1..=spatial.min(3));
        let padding = usize::from(k > 1 && rng.gen_bool(0.5));
        let shape = FilterShape::new(prev_c, k, k);
        let bank = random_bank(rng, kind, features, shape)?;
        let raw_bns = bns_for_bank(rng, &bank, prev_fmt);
        nodes.push(Node {
            name: format!("conv{i}"),
            spec: LayerSpec::Conv {
                in_channels: prev_c,
                out_channels: features,
                kernel: (k, k),
                stride: 1,
                padding,
                groups: 1,
            },
            inputs: if i == 0 {
                vec![LayerInput::Source]
            } else {
                vec![LayerInput::Layer(nodes.len() - 1)]
            },
        });
        let out_fmt = kind.hidden_format(rng);
        out_formats.push(out_fmt);
        layer_defs.push(Some(LayerDefinition {
            filters: bank,
            raw_bns,
        }));
        prev_c = features;
        prev_fmt = out_fmt;
        spatial = spatial + 2 * padding - k + 1;

        // occasionally a max pool (code domain, no new quantization points)
        if spatial >= 3 && rng.gen_bool(0.3) {
            nodes.push(Node {
                name: format!("pool{i}"),
                spec: LayerSpec::MaxPool {
                    kernel: (2, 2),
                    stride: 1,
                    padding: 0,
                },
                inputs: vec![LayerInput::Layer(nodes.len() - 1)],
            });
            out_formats.push(prev_fmt);
            layer_defs.push(None);
            spatial -= 1;
        }
    }

    // optionally finish with a small fully-connected layer
    if rng.gen_bool(0.3) {
        let in_features = prev_c * spatial * spatial;
        let out_features = rng.gen_range(2..=4usize);
        let shape = FilterShape::new(in_features, 1, 1);
        let bank = random_bank(rng, kind, out_features, shape)?;
        let raw_bns = bns_for_bank(rng, &bank, prev_fmt);
        nodes.push(Node {
            name: "fc".to_string(),
            spec: LayerSpec::FullyConnected {
                in_features,
                out_features,
            },
            inputs: vec![LayerInput::Layer(nodes.len() - 1)],
        });
        out_formats.push(kind.hidden_format(rng));
        layer_defs.push(Some(LayerDefinition {
            filters: bank,
            raw_bns,
        }));
    }

    let network = Network::new(
        "toy",
        FeatureDims::new(in_c, input_spatial, input_spatial),
        nodes,
    )
    .ok()?;
    let def = BundleDefinition {
        network,
        input_format,
        out_formats,
        layers: layer_defs,
    };

    let shape = TensorShape::new(1, in_c, input_spatial, input_spatial);
    let codes: Vec<u8> = (0..shape.volume())
        .map(|_| rng.gen_range(0..=input_format.levels()) as u8)
        .collect();
    let input = QTensor::new(shape, input_format, codes).ok()?;
    Some((def, input))
}

/// Distance from the nearest rounding tie point of the output format.
fn tie_distance(post_bns: f64, fmt: ActFormat) -> f64 {
    if fmt.is_bipolar() {
        return post_bns.abs();
    }
    let v = post_bns.max(0.0);
    let l = f64::from(fmt.levels());
    // ties sit at (m - 0.5) / L for m = 1..=L
    let m = (v * l + 0.5).round();
    if (1.0..=l).contains(&m) {
        (v - (m - 0.5) / l).abs()
    } else {
        f64::INFINITY
    }
}

fn is_tie_free(def: &BundleDefinition, input: &QTensor) -> bool {
    let model = match def.model() {
        Ok(m) => m,
        Err(_) => return false,
    };
    let engine = DotEngine::Reference;
    let Ok((_, traces)) = run_network_traced(&model, engine, input) else {
        return false;
    };
    for (index, trace) in traces.iter().enumerate() {
        if let Some(post) = &trace.post_bns {
            let fmt = model.out_format(index);
            if post
                .iter()
                .any(|&v| tie_distance(f64::from(v), fmt) <= TIE_MARGIN)
            {
                return false;
            }
        }
    }
    true
}

/// Draw a random toy model and input whose pre-quantization values all sit
/// clear of rounding tie points.
pub fn random_toy(rng: &mut ChaCha8Rng, kind: ToyKind) -> (BundleDefinition, QTensor) {
    for _ in 0..200 {
        if let Some((def, input)) = build_candidate(rng, kind) {
            if is_tie_free(&def, &input) {
                return (def, input);
            }
        }
    }
    panic!("no tie-free toy model found in 200 attempts for {kind:?}");
}
