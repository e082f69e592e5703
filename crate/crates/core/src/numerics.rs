//! Quantization formats and quantizers.
//!
//! Activations are carried between layers as unsigned integer codes. For a
//! width of `b >= 2` bits a code `k` represents the fraction `k / L` with
//! `L = 2^b - 1`, so the code range spans `[0, 1]`. One-bit activations are
//! bipolar: code 0 means -1 and code 1 means +1.
//!
//! Weights are either full-precision, narrow two's-complement integers,
//! ternary (-1/0/+1) or binary (-1/+1), and every output feature carries a
//! positive real scale `alpha` recovered during weight quantization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("activation width must be 1..=8 bits, got {0}")]
    BadWidth(u8),
    #[error("signed weight width must be 2..=8 bits, got {0}")]
    BadWeightWidth(u8),
    #[error("feature {0} is all zeros; per-feature scale is undefined")]
    DegenerateFilter(usize),
    #[error("code {code} out of range for {bits}-bit activations")]
    CodeOutOfRange { code: u8, bits: u8 },
    #[error("weight code {code} invalid for format {format}")]
    WeightCodeOutOfRange { code: i8, format: String },
    #[error("tensor has {len} codes but shape requires {expected}")]
    LengthMismatch { len: usize, expected: usize },
    #[error("filter for feature {feature} has {len} codes but shape requires {expected}")]
    FilterLengthMismatch {
        feature: usize,
        len: usize,
        expected: usize,
    },
}

/// Activation format: bit width plus the code interpretation that goes with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActFormat {
    bits: u8,
}

impl ActFormat {
    pub const A1: ActFormat = ActFormat { bits: 1 };
    pub const A2: ActFormat = ActFormat { bits: 2 };
    pub const A3: ActFormat = ActFormat { bits: 3 };
    pub const A4: ActFormat = ActFormat { bits: 4 };
    pub const A8: ActFormat = ActFormat { bits: 8 };

    pub fn new(bits: u8) -> Result<Self, NumericsError> {
        if (1..=8).contains(&bits) {
            Ok(ActFormat { bits })
        } else {
            Err(NumericsError::BadWidth(bits))
        }
    }

    pub const fn bits(self) -> u8 {
        self.bits
    }

    /// Number of fractional levels, `L = 2^bits - 1`. Codes run 0..=L.
    pub const fn levels(self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// One-bit activations use the bipolar (-1/+1) interpretation.
    pub const fn is_bipolar(self) -> bool {
        self.bits == 1
    }

    pub fn contains_code(self, code: u8) -> bool {
        u32::from(code) <= self.levels()
    }
}

impl TryFrom<u8> for ActFormat {
    type Error = NumericsError;
    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        ActFormat::new(bits)
    }
}

impl From<ActFormat> for u8 {
    fn from(f: ActFormat) -> u8 {
        f.bits
    }
}

impl std::fmt::Display for ActFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-bit", self.bits)
    }
}

/// Weight value domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightFormat {
    Fp32,
    /// Two's-complement signed integers of the given width (2..=8 bits).
    SignedInt { bits: u8 },
    /// Values -1, 0, +1 with a per-feature scale.
    Ternary,
    /// Values -1, +1 (stored in hardware as 0/1) with a per-feature scale.
    Binary,
}

impl WeightFormat {
    pub fn signed(bits: u8) -> Result<Self, NumericsError> {
        if (2..=8).contains(&bits) {
            Ok(WeightFormat::SignedInt { bits })
        } else {
            Err(NumericsError::BadWeightWidth(bits))
        }
    }

    /// Effective storage width used by GOP-bits accounting: ternary counts as
    /// 2 bits, binary as 1, fp32 as 32.
    pub fn effective_bits(self) -> u32 {
        match self {
            WeightFormat::Fp32 => 32,
            WeightFormat::SignedInt { bits } => u32::from(bits),
            WeightFormat::Ternary => 2,
            WeightFormat::Binary => 1,
        }
    }

    pub fn contains_code(self, code: i8) -> bool {
        match self {
            WeightFormat::Fp32 => false,
            WeightFormat::SignedInt { bits } => {
                let half = 1i16 << (bits - 1);
                i16::from(code) >= -half && i16::from(code) < half
            }
            WeightFormat::Ternary => (-1..=1).contains(&code),
            WeightFormat::Binary => code == -1 || code == 1,
        }
    }
}

impl std::fmt::Display for WeightFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightFormat::Fp32 => write!(f, "fp32"),
            WeightFormat::SignedInt { bits } => write!(f, "int{bits}"),
            WeightFormat::Ternary => write!(f, "ternary"),
            WeightFormat::Binary => write!(f, "binary"),
        }
    }
}

impl std::str::FromStr for WeightFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp32" => Ok(WeightFormat::Fp32),
            "ternary" => Ok(WeightFormat::Ternary),
            "binary" => Ok(WeightFormat::Binary),
            _ => {
                let bits = s
                    .strip_prefix("int")
                    .and_then(|b| b.parse::<u8>().ok())
                    .ok_or_else(|| format!("unknown weight format {s:?}"))?;
                WeightFormat::signed(bits).map_err(|e| e.to_string())
            }
        }
    }
}

impl TryFrom<String> for WeightFormat {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<WeightFormat> for String {
    fn from(w: WeightFormat) -> String {
        w.to_string()
    }
}

/// NCHW tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl TensorShape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        TensorShape { n, c, h, w }
    }

    pub fn volume(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

/// Integer-coded activation tensor. All inter-layer data moves as `QTensor`s.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    shape: TensorShape,
    format: ActFormat,
    codes: Vec<u8>,
}

impl QTensor {
    pub fn new(shape: TensorShape, format: ActFormat, codes: Vec<u8>) -> Result<Self, NumericsError> {
        if codes.len() != shape.volume() {
            return Err(NumericsError::LengthMismatch {
                len: codes.len(),
                expected: shape.volume(),
            });
        }
        if let Some(&bad) = codes.iter().find(|&&c| !format.contains_code(c)) {
            return Err(NumericsError::CodeOutOfRange {
                code: bad,
                bits: format.bits(),
            });
        }
        Ok(QTensor {
            shape,
            format,
            codes,
        })
    }

    pub fn zeros(shape: TensorShape, format: ActFormat) -> Self {
        QTensor {
            codes: vec![0; shape.volume()],
            shape,
            format,
        }
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn format(&self) -> ActFormat {
        self.format
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn code_at(&self, n: usize, c: usize, y: usize, x: usize) -> u8 {
        self.codes[self.shape.index(n, c, y, x)]
    }

    pub fn set_code(&mut self, n: usize, c: usize, y: usize, x: usize, code: u8) {
        debug_assert!(self.format.contains_code(code));
        let i = self.shape.index(n, c, y, x);
        self.codes[i] = code;
    }

    /// Decoded real value at a position (`k/L`, or bipolar for 1-bit).
    pub fn value_at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        decode_act(self.code_at(n, c, y, x), self.format)
    }
}

/// Filter geometry per output feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterShape {
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
}

impl FilterShape {
    pub fn new(cin: usize, kh: usize, kw: usize) -> Self {
        FilterShape { cin, kh, kw }
    }

    pub fn volume(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn index(&self, ci: usize, ky: usize, kx: usize) -> usize {
        (ci * self.kh + ky) * self.kw + kx
    }
}

/// One output feature's quantized filter: integer codes plus the positive
/// per-feature scale recovered by the quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFeature {
    pub codes: Vec<i8>,
    pub alpha: f32,
}

/// All output features of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFilterBank {
    shape: FilterShape,
    format: WeightFormat,
    features: Vec<FilterFeature>,
}

impl QuantizedFilterBank {
    pub fn from_features(
        shape: FilterShape,
        format: WeightFormat,
        features: Vec<FilterFeature>,
    ) -> Result<Self, NumericsError> {
        for (f, feat) in features.iter().enumerate() {
            if feat.codes.len() != shape.volume() {
                return Err(NumericsError::FilterLengthMismatch {
                    feature: f,
                    len: feat.codes.len(),
                    expected: shape.volume(),
                });
            }
            if feat.alpha <= 0.0 || feat.alpha.is_nan() {
                return Err(NumericsError::DegenerateFilter(f));
            }
            if let Some(&bad) = feat.codes.iter().find(|&&c| !format.contains_code(c)) {
                return Err(NumericsError::WeightCodeOutOfRange {
                    code: bad,
                    format: format.to_string(),
                });
            }
        }
        Ok(QuantizedFilterBank {
            shape,
            format,
            features,
        })
    }

    pub fn shape(&self) -> FilterShape {
        self.shape
    }

    pub fn format(&self) -> WeightFormat {
        self.format
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, f: usize) -> &FilterFeature {
        &self.features[f]
    }

    pub fn features(&self) -> &[FilterFeature] {
        &self.features
    }
}

/// Reference activation quantizer: clip to [0, 1], stretch to `L` levels,
/// round half up, and return the fraction.
///
/// Total over the reals; the result is always one of `{0, 1/L, ..., 1}`.
pub fn quantize_act_ref(x: f64, fmt: ActFormat) -> f64 {
    assert!(fmt.bits() >= 2, "reference quantizer requires bits >= 2");
    let l = f64::from(fmt.levels());
    (x.clamp(0.0, 1.0) * l + 0.5).floor() / l
}

/// Optimized activation quantizer producing the integer code directly:
/// `floor(min(1, x) * L + 0.5)`.
///
/// The caller is expected to have applied ReLU already; negative inputs are a
/// contract violation and panic.
pub fn quantize_act_code(x: f64, fmt: ActFormat) -> u8 {
    assert!(fmt.bits() >= 2, "code quantizer requires bits >= 2");
    assert!(x >= 0.0, "quantize_act_code requires x >= 0 (apply ReLU first), got {x}");
    let l = f64::from(fmt.levels());
    (x.min(1.0) * l + 0.5).floor() as u8
}

/// One-bit bipolar quantizer: sign threshold at zero (code 1 iff x > 0).
pub fn quantize_act_bipolar(x: f64) -> u8 {
    u8::from(x > 0.0)
}

/// Quantize a post-BNS real value to a code in the given output format,
/// clipping negatives (ReLU) first. Dispatches between the fractional and
/// bipolar encodings.
pub fn encode_activation(x: f64, fmt: ActFormat) -> u8 {
    if fmt.is_bipolar() {
        quantize_act_bipolar(x)
    } else {
        quantize_act_code(x.max(0.0), fmt)
    }
}

/// Decode an activation code back to its real value.
pub fn decode_act(code: u8, fmt: ActFormat) -> f64 {
    assert!(
        fmt.contains_code(code),
        "code {code} out of range for {fmt}"
    );
    if fmt.is_bipolar() {
        2.0 * f64::from(code) - 1.0
    } else {
        f64::from(code) / f64::from(fmt.levels())
    }
}

/// Ternary-quantize a single feature's real weights.
///
/// The threshold rule selects entries with `|w| > 0.7 * mean(|w|)` and sets
/// `alpha` to the mean magnitude of the selected entries. Codes are then the
/// exact per-entry minimizer of `(w - alpha*c)^2` at that alpha, which keeps
/// the returned assignment optimal even for filters with a very wide
/// magnitude spread.
pub fn ternary_quantize_feature(weights: &[f32]) -> Result<(Vec<i8>, f32), NumericsError> {
    let mean_abs: f64 =
        weights.iter().map(|w| f64::from(w.abs())).sum::<f64>() / weights.len().max(1) as f64;
    if mean_abs == 0.0 {
        return Err(NumericsError::DegenerateFilter(0));
    }
    let delta = 0.7 * mean_abs;
    let selected: Vec<f64> = weights
        .iter()
        .map(|w| f64::from(w.abs()))
        .filter(|a| *a > delta)
        .collect();
    debug_assert!(!selected.is_empty(), "nonzero filter always selects its max entry");
    let alpha = selected.iter().sum::<f64>() / selected.len() as f64;
    let codes = weights
        .iter()
        .map(|&w| {
            if f64::from(w.abs()) >= alpha / 2.0 {
                if w >= 0.0 {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        })
        .collect();
    Ok((codes, alpha as f32))
}

/// Binary-quantize a single feature's real weights: `alpha = mean(|w|)`,
/// codes are the signs with `sign(0) = +1`.
pub fn binary_quantize_feature(weights: &[f32]) -> Result<(Vec<i8>, f32), NumericsError> {
    let mean_abs: f64 =
        weights.iter().map(|w| f64::from(w.abs())).sum::<f64>() / weights.len().max(1) as f64;
    if mean_abs == 0.0 {
        return Err(NumericsError::DegenerateFilter(0));
    }
    let codes = weights.iter().map(|&w| if w < 0.0 { -1 } else { 1 }).collect();
    Ok((codes, mean_abs as f32))
}

type FeatureQuantizer = fn(&[f32]) -> Result<(Vec<i8>, f32), NumericsError>;

fn quantize_bank(
    filters: &[Vec<f32>],
    shape: FilterShape,
    format: WeightFormat,
    quantize: FeatureQuantizer,
) -> Result<QuantizedFilterBank, NumericsError> {
    let mut features = Vec::with_capacity(filters.len());
    for (f, real) in filters.iter().enumerate() {
        if real.len() != shape.volume() {
            return Err(NumericsError::FilterLengthMismatch {
                feature: f,
                len: real.len(),
                expected: shape.volume(),
            });
        }
        let (codes, alpha) = quantize(real).map_err(|_| NumericsError::DegenerateFilter(f))?;
        features.push(FilterFeature { codes, alpha });
    }
    QuantizedFilterBank::from_features(shape, format, features)
}

/// Ternary-quantize a full filter bank (one real-valued filter per output
/// feature). Fails on any all-zero feature.
pub fn quantize_weights_ternary(
    filters: &[Vec<f32>],
    shape: FilterShape,
) -> Result<QuantizedFilterBank, NumericsError> {
    quantize_bank(filters, shape, WeightFormat::Ternary, ternary_quantize_feature)
}

/// Binary-quantize a full filter bank.
pub fn quantize_weights_binary(
    filters: &[Vec<f32>],
    shape: FilterShape,
) -> Result<QuantizedFilterBank, NumericsError> {
    quantize_bank(filters, shape, WeightFormat::Binary, binary_quantize_feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fmt(bits: u8) -> ActFormat {
        ActFormat::new(bits).unwrap()
    }

    #[test]
    fn reference_quantizer_examples() {
        // floor(0.5*3 + 0.5) = 2 -> 2/3
        assert_eq!(quantize_act_ref(0.5, fmt(2)), 2.0 / 3.0);
        assert_eq!(quantize_act_ref(-0.7, fmt(2)), 0.0);
        assert_eq!(quantize_act_ref(1.9, fmt(2)), 1.0);
    }

    #[test]
    fn code_quantizer_examples() {
        assert_eq!(quantize_act_code(0.0, fmt(2)), 0);
        assert_eq!(quantize_act_code(1.7, fmt(2)), 3);
        assert_eq!(quantize_act_code(0.4, fmt(2)), 1);
    }

    #[test]
    #[should_panic(expected = "x >= 0")]
    fn code_quantizer_rejects_negative() {
        quantize_act_code(-0.1, fmt(2));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_act(2, fmt(2)), 2.0 / 3.0);
        assert_eq!(decode_act(0, fmt(1)), -1.0);
        assert_eq!(decode_act(1, fmt(1)), 1.0);
        assert_eq!(decode_act(3, fmt(2)), 1.0);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn decode_rejects_out_of_range() {
        decode_act(4, fmt(2));
    }

    #[test]
    fn code_matches_reference_on_grid_and_random_points() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x34);
        for bits in 2..=8u8 {
            let f = fmt(bits);
            let l = f64::from(f.levels());
            let check = |x: f64| {
                let via_code = f64::from(quantize_act_code(x.max(0.0), f)) / l;
                assert_eq!(via_code, quantize_act_ref(x, f), "x={x} bits={bits}");
            };
            for i in 0..=20_000 {
                check(-0.5 + 2.0 * (i as f64) / 20_000.0);
            }
            for _ in 0..10_000 {
                check(rng.gen_range(-2.0..3.0));
            }
        }
    }

    #[test]
    fn quantization_is_idempotent_for_all_codes() {
        for bits in 2..=8u8 {
            let f = fmt(bits);
            for code in 0..=f.levels() as u8 {
                let value = decode_act(code, f);
                assert_eq!(quantize_act_code(value, f), code, "code={code} bits={bits}");
                assert_eq!(quantize_act_ref(value, f), value);
            }
        }
    }

    proptest! {
        #[test]
        fn quantizer_is_monotone(x1 in -2.0..3.0f64, x2 in -2.0..3.0f64, bits in 2..=8u8) {
            let f = fmt(bits);
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            prop_assert!(quantize_act_ref(lo, f) <= quantize_act_ref(hi, f));
            prop_assert!(quantize_act_code(lo.max(0.0), f) <= quantize_act_code(hi.max(0.0), f));
        }

        #[test]
        fn quantizer_output_in_range(x in -1e6..1e6f64, bits in 2..=8u8) {
            let f = fmt(bits);
            let code = quantize_act_code(x.max(0.0), f);
            prop_assert!(u32::from(code) <= f.levels());
            let v = quantize_act_ref(x, f);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    /// Brute-force check: the returned codes reach the minimal squared
    /// distance to the real filter at the returned alpha, over every possible
    /// code assignment.
    fn assert_codes_minimal(weights: &[f32], codes: &[i8], alpha: f32, domain: &[i8]) {
        let cost = |assign: &[i8]| -> f64 {
            weights
                .iter()
                .zip(assign)
                .map(|(&w, &c)| {
                    let d = f64::from(w) - f64::from(alpha) * f64::from(c);
                    d * d
                })
                .sum()
        };
        let n = weights.len();
        let mut best = f64::INFINITY;
        let mut assign = vec![domain[0]; n];
        let k = domain.len();
        for mut idx in 0..k.pow(n as u32) {
            for slot in assign.iter_mut() {
                *slot = domain[idx % k];
                idx /= k;
            }
            best = best.min(cost(&assign));
        }
        let got = cost(codes);
        assert!(
            got <= best + 1e-9,
            "codes {codes:?} cost {got} vs brute-force best {best} for {weights:?} at alpha {alpha}"
        );
    }

    #[test]
    fn ternary_quantizer_examples() {
        let (codes, alpha) = ternary_quantize_feature(&[0.8, -0.9, 0.05, 0.0]).unwrap();
        assert_eq!(codes, vec![1, -1, 0, 0]);
        assert!((alpha - 0.85).abs() < 1e-6);
        assert_codes_minimal(&[0.8, -0.9, 0.05, 0.0], &codes, alpha, &[-1, 0, 1]);

        let (codes, alpha) = ternary_quantize_feature(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(codes, vec![1, 1, 1, 1]);
        assert_eq!(alpha, 1.0);

        assert_eq!(
            ternary_quantize_feature(&[0.0, 0.0, 0.0]),
            Err(NumericsError::DegenerateFilter(0))
        );
    }

    #[test]
    fn binary_quantizer_examples() {
        let (codes, alpha) = binary_quantize_feature(&[0.5, -0.3]).unwrap();
        assert_eq!(codes, vec![1, -1]);
        assert!((alpha - 0.4).abs() < 1e-7);
        assert_codes_minimal(&[0.5, -0.3], &codes, alpha, &[-1, 1]);

        let (codes, alpha) = binary_quantize_feature(&[-2.0, -2.0]).unwrap();
        assert_eq!(codes, vec![-1, -1]);
        assert_eq!(alpha, 2.0);

        assert!(binary_quantize_feature(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn ternary_codes_match_brute_force(weights in proptest::collection::vec(-3.0..3.0f32, 1..=8)) {
            prop_assume!(weights.iter().any(|w| *w != 0.0));
            let (codes, alpha) = ternary_quantize_feature(&weights).unwrap();
            prop_assert!(alpha > 0.0);
            assert_codes_minimal(&weights, &codes, alpha, &[-1, 0, 1]);
        }

        #[test]
        fn binary_codes_match_brute_force(weights in proptest::collection::vec(-3.0..3.0f32, 1..=8)) {
            prop_assume!(weights.iter().any(|w| *w != 0.0));
            let (codes, alpha) = binary_quantize_feature(&weights).unwrap();
            prop_assert!(alpha > 0.0);
            assert_codes_minimal(&weights, &codes, alpha, &[-1, 1]);
        }
    }

    /// Spread-out magnitudes push the selection threshold and alpha/2 apart;
    /// the per-entry refinement keeps the assignment optimal there too.
    #[test]
    fn ternary_quantizer_handles_wide_magnitude_spread() {
        let weights = [10.0, 1.1, 0.0, 0.0, 0.0, 0.0];
        let (codes, alpha) = ternary_quantize_feature(&weights).unwrap();
        assert_codes_minimal(&weights, &codes, alpha, &[-1, 0, 1]);
        assert_eq!(codes[0], 1);
        assert_eq!(codes[1], 0); // 1.1 < alpha/2 = 2.775
    }

    #[test]
    fn qtensor_validates_shape_and_range() {
        let shape = TensorShape::new(1, 1, 2, 2);
        assert!(QTensor::new(shape, fmt(2), vec![0, 1, 2, 3]).is_ok());
        assert!(matches!(
            QTensor::new(shape, fmt(2), vec![0, 1, 2]),
            Err(NumericsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            QTensor::new(shape, fmt(2), vec![0, 1, 2, 4]),
            Err(NumericsError::CodeOutOfRange { .. })
        ));
    }

    #[test]
    fn weight_format_ranges() {
        assert!(WeightFormat::Ternary.contains_code(-1));
        assert!(!WeightFormat::Ternary.contains_code(2));
        assert!(WeightFormat::Binary.contains_code(1));
        assert!(!WeightFormat::Binary.contains_code(0));
        let int3 = WeightFormat::signed(3).unwrap();
        assert!(int3.contains_code(-4));
        assert!(int3.contains_code(3));
        assert!(!int3.contains_code(4));
        assert_eq!(WeightFormat::Ternary.effective_bits(), 2);
        assert_eq!(WeightFormat::Binary.effective_bits(), 1);
        assert_eq!(WeightFormat::Fp32.effective_bits(), 32);
    }

    #[test]
    fn weight_format_parses_round_trip() {
        for s in ["fp32", "ternary", "binary", "int2", "int8"] {
            let f: WeightFormat = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("int9".parse::<WeightFormat>().is_err());
        assert!("float".parse::<WeightFormat>().is_err());
    }
}
