//! Dot-product engines mirroring the FPGA processing-element implementations.
//!
//! Each variant computes the same signed integer dot product, just the way the
//! corresponding hardware does it: binary weights reduce the multiply to a
//! sign flip and mux, ternary weights to a three-way mux, 1-bit/1-bit to an
//! XNOR and popcount, and 2-bit operands can ride four-to-a-word through a
//! single 18x18 DSP multiply. `dot_ref` is the plain multiply-accumulate
//! oracle the others are checked against.

use crate::numerics::{ActFormat, WeightFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PeError {
    #[error("accumulator overflow: |{value}| >= 2^{}", width_bits - 1)]
    AccumulatorOverflow { value: i64, width_bits: u32 },
    #[error("packed lane value {0} out of 2-bit range")]
    LaneOutOfRange(i64),
    #[error("packed-DSP weight {0} outside signed 2-bit range")]
    WeightOutOfRange(i64),
}

/// One row of the PE cost catalog: what a dot-product unit of this
/// activation/weight width costs in ALMs, and how many extra multiplies a DSP
/// block contributes when operand packing is in play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeConfig {
    pub act: ActFormat,
    pub weight: WeightFormat,
    pub words_per_dot: u32,
    pub alms_per_dot: u32,
    /// Extra multiplies per DSP block via operand packing; 0 = not used.
    pub dsp_macs_per_block: u32,
}

impl PeConfig {
    /// Short config name, e.g. `8x8/8`, `2xT/64`, `8xB/16`, `1x1/32`
    /// (1-bit weights are the binary format, written "1" to match the
    /// act width).
    pub fn label(&self) -> String {
        let w = match self.weight {
            WeightFormat::Ternary => "T".to_string(),
            WeightFormat::Binary if self.act.bits() == 1 => "1".to_string(),
            WeightFormat::Binary => "B".to_string(),
            WeightFormat::Fp32 => "fp32".to_string(),
            WeightFormat::SignedInt { bits } => bits.to_string(),
        };
        format!("{}x{}/{}", self.act.bits(), w, self.words_per_dot)
    }
}

/// The built-in PE cost catalog (per-dot ALM utilization as measured on
/// Stratix 10 hand-tuned engines). The 2-bit x ternary configuration is the
/// one with a demonstrated DSP packing mode (eight extra multiplies per
/// block).
pub fn pe_catalog() -> Vec<PeConfig> {
    fn row(act: ActFormat, weight: WeightFormat, words: u32, alms: u32, dsp: u32) -> PeConfig {
        PeConfig {
            act,
            weight,
            words_per_dot: words,
            alms_per_dot: alms,
            dsp_macs_per_block: dsp,
        }
    }
    let int = |bits| WeightFormat::signed(bits).unwrap();
    vec![
        row(ActFormat::A8, int(8), 8, 500, 0),
        row(ActFormat::A8, WeightFormat::Ternary, 8, 91, 0),
        row(ActFormat::A8, WeightFormat::Ternary, 16, 176, 0),
        row(ActFormat::A8, WeightFormat::Binary, 8, 77, 0),
        row(ActFormat::A8, WeightFormat::Binary, 16, 149, 0),
        row(ActFormat::A8, WeightFormat::Binary, 32, 298, 0),
        row(ActFormat::A4, int(4), 8, 210, 0),
        row(ActFormat::A4, int(4), 16, 431, 0),
        row(ActFormat::A3, int(3), 8, 70, 0),
        row(ActFormat::A2, int(2), 8, 39, 0),
        row(ActFormat::A2, int(2), 16, 91, 0),
        row(ActFormat::A2, int(2), 64, 437, 0),
        row(ActFormat::A2, WeightFormat::Ternary, 64, 318, 8),
        row(ActFormat::A1, WeightFormat::Binary, 8, 19, 0),
        row(ActFormat::A1, WeightFormat::Binary, 32, 52, 0),
    ]
}

/// Look up a catalog entry by activation bits, weight format, and dot size.
pub fn catalog_lookup(act_bits: u8, weight: WeightFormat, words_per_dot: u32) -> Option<PeConfig> {
    pe_catalog()
        .into_iter()
        .find(|c| c.act.bits() == act_bits && c.weight == weight && c.words_per_dot == words_per_dot)
}

/// Largest words/dot available in the catalog for an (activation, weight)
/// pair. Bigger dots amortize ALMs best, so this is the entry the modeler
/// picks by default.
pub fn catalog_widest(act_bits: u8, weight: WeightFormat) -> Option<PeConfig> {
    pe_catalog()
        .into_iter()
        .filter(|c| c.act.bits() == act_bits && c.weight == weight)
        .max_by_key(|c| c.words_per_dot)
}

/// Accumulator width sufficient for a dot product of the given size:
/// product width plus `ceil(log2(dot_size))` guard bits.
pub fn acc_width(act_bits: u32, weight_bits_effective: u32, dot_size: u32) -> u32 {
    assert!(act_bits >= 1 && weight_bits_effective >= 1 && dot_size >= 1);
    act_bits + weight_bits_effective + dot_size.next_power_of_two().trailing_zeros()
}

/// Signed accumulator with an explicit width bound; rejects any update that
/// a hardware register of that width could not hold.
#[derive(Debug, Clone, Copy)]
pub struct DotAccumulator {
    value: i64,
    width_bits: u32,
}

impl DotAccumulator {
    pub fn new(width_bits: u32) -> Self {
        assert!((1..=63).contains(&width_bits));
        DotAccumulator {
            value: 0,
            width_bits,
        }
    }

    pub fn add(&mut self, v: i64) -> Result<(), PeError> {
        let next = self.value + v;
        let bound = 1i64 << (self.width_bits - 1);
        if next.abs() >= bound {
            return Err(PeError::AccumulatorOverflow {
                value: next,
                width_bits: self.width_bits,
            });
        }
        self.value = next;
        Ok(())
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    pub fn width_bits(&self) -> u32 {
        self.width_bits
    }
}

/// Plain multiply-accumulate over decoded integer values. This is the oracle
/// every specialized engine must match.
pub fn dot_ref(acts: &[i64], weights: &[i64]) -> i64 {
    assert_eq!(acts.len(), weights.len(), "dot operand length mismatch");
    acts.iter().zip(weights).map(|(a, w)| a * w).sum()
}

/// Binary-weight dot: weight code 1 adds the activation, code 0 subtracts it
/// (codes 0/1 stand for -1/+1).
pub fn dot_binary_mux(acts: &[i64], weight_codes: &[u8]) -> i64 {
    assert_eq!(acts.len(), weight_codes.len(), "dot operand length mismatch");
    acts.iter()
        .zip(weight_codes)
        .map(|(&a, &w)| {
            debug_assert!(w <= 1);
            if w == 1 {
                a
            } else {
                -a
            }
        })
        .sum()
}

/// Ternary-weight dot: a three-way mux per element.
pub fn dot_ternary_mux(acts: &[i64], weight_codes: &[i8]) -> i64 {
    assert_eq!(acts.len(), weight_codes.len(), "dot operand length mismatch");
    acts.iter()
        .zip(weight_codes)
        .map(|(&a, &w)| match w {
            1 => a,
            0 => 0,
            -1 => -a,
            other => panic!("ternary weight code {other} out of range"),
        })
        .sum()
}

/// 1-bit/1-bit dot: pack both sides into 64-bit words, XNOR, popcount, and
/// rescale. Equals the +/-1 dot product `2*popcount(XNOR(a, w)) - N`.
pub fn dot_xnor_popcount(act_codes: &[u8], weight_codes: &[u8]) -> i64 {
    assert_eq!(
        act_codes.len(),
        weight_codes.len(),
        "dot operand length mismatch"
    );
    let n = act_codes.len();
    let mut agree: u32 = 0;
    for (chunk_a, chunk_w) in act_codes.chunks(64).zip(weight_codes.chunks(64)) {
        let mut a_word: u64 = 0;
        let mut w_word: u64 = 0;
        for (i, (&a, &w)) in chunk_a.iter().zip(chunk_w).enumerate() {
            debug_assert!(a <= 1 && w <= 1);
            a_word |= u64::from(a) << i;
            w_word |= u64::from(w) << i;
        }
        let mask = if chunk_a.len() == 64 {
            u64::MAX
        } else {
            (1u64 << chunk_a.len()) - 1
        };
        agree += (!(a_word ^ w_word) & mask).count_ones();
    }
    2 * i64::from(agree) - n as i64
}

/// Four 2-bit lanes packed into one 18-bit DSP operand. Lane `i` sits at bit
/// `4*i`; the two bits above each lane are guard space that absorbs the sign
/// extension of lane products during the wide multiply, and the top two bits
/// of the word are zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedOperand {
    word: u32,
}

pub const PACKED_LANES: usize = 4;
const LANE_STRIDE: u32 = 4;

impl PackedOperand {
    pub fn word(&self) -> u32 {
        self.word
    }
}

/// Pack four 2-bit unsigned codes into an 18-bit operand word.
pub fn pack_dsp_operand(lanes: [u8; PACKED_LANES]) -> Result<PackedOperand, PeError> {
    let mut word: u32 = 0;
    for (i, &lane) in lanes.iter().enumerate() {
        if lane > 3 {
            return Err(PeError::LaneOutOfRange(i64::from(lane)));
        }
        word |= u32::from(lane) << (LANE_STRIDE * i as u32);
    }
    Ok(PackedOperand { word })
}

/// Recover the four lane codes from a packed word.
pub fn unpack_dsp_operand(packed: PackedOperand) -> [u8; PACKED_LANES] {
    let mut lanes = [0u8; PACKED_LANES];
    for (i, lane) in lanes.iter_mut().enumerate() {
        *lane = ((packed.word >> (LANE_STRIDE * i as u32)) & 0x3) as u8;
    }
    lanes
}

/// Multiply all four packed lanes by one signed 2-bit weight using a single
/// wide integer multiply, then peel the lane products back out.
///
/// Extraction runs lowest lane first: each recovered product is subtracted
/// from the wide result before the next lane is read, which is what carries
/// the borrow of negative lower-lane products out of the way.
pub fn dsp_packed_multiply(
    packed: PackedOperand,
    weight: i8,
) -> Result<[i32; PACKED_LANES], PeError> {
    if !(-2..=1).contains(&weight) {
        return Err(PeError::WeightOutOfRange(i64::from(weight)));
    }
    // The 18x18 DSP product of the packed word and the sign-extended weight.
    let mut wide = i64::from(packed.word) * i64::from(weight);
    let mut out = [0i32; PACKED_LANES];
    for lane in out.iter_mut() {
        let residue = wide & 0xF;
        // Lane products lie in [-6, 3]; residues 10..=15 are the negatives.
        let product = if residue >= 10 { residue - 16 } else { residue };
        *lane = product as i32;
        wide = (wide - product) >> LANE_STRIDE;
    }
    debug_assert_eq!(wide, 0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn acc_width_examples() {
        assert_eq!(acc_width(8, 2, 8), 13);
        assert_eq!(acc_width(1, 1, 4), 4);
        assert_eq!(acc_width(3, 3, 1), 6);
        // non-power-of-two dot sizes round the guard bits up
        assert_eq!(acc_width(8, 2, 9), 14);
    }

    #[test]
    fn dot_ref_examples() {
        assert_eq!(dot_ref(&[5, 3, 7], &[1, 0, -1]), -2);
        assert_eq!(dot_ref(&[9, 9, 9], &[0, 0, 0]), 0);
        assert_eq!(dot_ref(&[], &[]), 0);
    }

    #[test]
    fn binary_mux_examples() {
        assert_eq!(dot_binary_mux(&[5, 5], &[1, 0]), 0);
        assert_eq!(dot_binary_mux(&[1, 2, 3], &[1, 1, 1]), 6);
        assert_eq!(dot_binary_mux(&[7, 0, 2], &[0, 1, 0]), -9);
    }

    #[test]
    fn ternary_mux_examples() {
        assert_eq!(dot_ternary_mux(&[5, 3, 7], &[1, 0, -1]), -2);
        assert_eq!(dot_ternary_mux(&[1, 2, 3], &[0, 0, 0]), 0);
        let acts = [255i64; 16];
        let ws = [1i8; 16];
        assert_eq!(dot_ternary_mux(&acts, &ws), 4080);
        // 4080 fits the width acc_width(8, 2, 16) = 14 gives
        let mut acc = DotAccumulator::new(acc_width(8, 2, 16));
        for (&a, &w) in acts.iter().zip(&ws) {
            acc.add(a * i64::from(w)).unwrap();
        }
        assert_eq!(acc.value(), 4080);
    }

    #[test]
    fn xnor_popcount_examples() {
        assert_eq!(dot_xnor_popcount(&[1, 0, 1, 0], &[1, 1, 0, 0]), 0);
        assert_eq!(dot_xnor_popcount(&[1, 0, 1], &[1, 0, 1]), 3);
        assert_eq!(dot_xnor_popcount(&[0, 0], &[1, 1]), -2);
    }

    fn decode_bipolar(code: u8) -> i64 {
        2 * i64::from(code) - 1
    }

    #[test]
    fn xnor_equals_ref_exhaustively_n8() {
        for a_bits in 0u32..256 {
            for w_bits in 0u32..256 {
                let a_codes: Vec<u8> = (0..8).map(|i| ((a_bits >> i) & 1) as u8).collect();
                let w_codes: Vec<u8> = (0..8).map(|i| ((w_bits >> i) & 1) as u8).collect();
                let a_vals: Vec<i64> = a_codes.iter().map(|&c| decode_bipolar(c)).collect();
                let w_vals: Vec<i64> = w_codes.iter().map(|&c| decode_bipolar(c)).collect();
                assert_eq!(
                    dot_xnor_popcount(&a_codes, &w_codes),
                    dot_ref(&a_vals, &w_vals)
                );
            }
        }
    }

    #[test]
    fn ternary_mux_equals_ref_exhaustively_n4() {
        // all 4^4 two-bit activation vectors x all 3^4 ternary weight vectors
        for a_idx in 0..256usize {
            let acts: Vec<i64> = (0..4).map(|i| ((a_idx >> (2 * i)) & 3) as i64).collect();
            for w_idx in 0..81usize {
                let mut k = w_idx;
                let mut ws = [0i8; 4];
                for w in ws.iter_mut() {
                    *w = (k % 3) as i8 - 1;
                    k /= 3;
                }
                let w_vals: Vec<i64> = ws.iter().map(|&w| i64::from(w)).collect();
                assert_eq!(dot_ternary_mux(&acts, &ws), dot_ref(&acts, &w_vals));
            }
        }
    }

    #[test]
    fn mux_variants_equal_ref_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        for _ in 0..20_000 {
            let n = rng.gen_range(1..=64);
            let bits = rng.gen_range(2..=8u32);
            let max = (1i64 << bits) - 1;
            let acts: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=max)).collect();

            let bin: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
            let bin_vals: Vec<i64> = bin.iter().map(|&c| decode_bipolar(c)).collect();
            assert_eq!(dot_binary_mux(&acts, &bin), dot_ref(&acts, &bin_vals));

            let ter: Vec<i8> = (0..n).map(|_| rng.gen_range(-1..=1i8)).collect();
            let ter_vals: Vec<i64> = ter.iter().map(|&w| i64::from(w)).collect();
            assert_eq!(dot_ternary_mux(&acts, &ter), dot_ref(&acts, &ter_vals));

            let a1: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
            let w1: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
            let a1_vals: Vec<i64> = a1.iter().map(|&c| decode_bipolar(c)).collect();
            let w1_vals: Vec<i64> = w1.iter().map(|&c| decode_bipolar(c)).collect();
            assert_eq!(dot_xnor_popcount(&a1, &w1), dot_ref(&a1_vals, &w1_vals));
        }
    }

    #[test]
    fn dot_partitioning_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let acts: Vec<i64> = (0..257).map(|_| rng.gen_range(0..=255)).collect();
        let ws: Vec<i8> = (0..257).map(|_| rng.gen_range(-1..=1)).collect();
        let whole = dot_ternary_mux(&acts, &ws);
        for chunk in [1usize, 3, 64, 100] {
            let split: i64 = acts
                .chunks(chunk)
                .zip(ws.chunks(chunk))
                .map(|(a, w)| dot_ternary_mux(a, w))
                .sum();
            assert_eq!(split, whole);
        }
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack_dsp_operand([0, 0, 0, 0]).unwrap().word(), 0);
        // lane i at bit 4i: 3 + 2<<4 + 1<<8 + 0<<12
        assert_eq!(pack_dsp_operand([3, 2, 1, 0]).unwrap().word(), 0x123);
        assert_eq!(
            pack_dsp_operand([4, 0, 0, 0]),
            Err(PeError::LaneOutOfRange(4))
        );
    }

    #[test]
    fn pack_unpack_round_trips() {
        for idx in 0..256usize {
            let lanes = [
                (idx & 3) as u8,
                ((idx >> 2) & 3) as u8,
                ((idx >> 4) & 3) as u8,
                ((idx >> 6) & 3) as u8,
            ];
            let packed = pack_dsp_operand(lanes).unwrap();
            assert!(packed.word() < (1 << 18));
            assert_eq!(unpack_dsp_operand(packed), lanes);
        }
    }

    #[test]
    fn packed_multiply_examples() {
        let p = pack_dsp_operand([1, 2, 3, 0]).unwrap();
        assert_eq!(dsp_packed_multiply(p, -1).unwrap(), [-1, -2, -3, 0]);
        assert_eq!(dsp_packed_multiply(p, 0).unwrap(), [0, 0, 0, 0]);
        let q = pack_dsp_operand([3, 3, 3, 3]).unwrap();
        assert_eq!(dsp_packed_multiply(q, 1).unwrap(), [3, 3, 3, 3]);
        assert_eq!(
            dsp_packed_multiply(p, 2),
            Err(PeError::WeightOutOfRange(2))
        );
    }

    #[test]
    fn packed_multiply_exhaustive_all_lanes_all_weights() {
        for idx in 0..256usize {
            let lanes = [
                (idx & 3) as u8,
                ((idx >> 2) & 3) as u8,
                ((idx >> 4) & 3) as u8,
                ((idx >> 6) & 3) as u8,
            ];
            let packed = pack_dsp_operand(lanes).unwrap();
            for weight in -2i8..=1 {
                let got = dsp_packed_multiply(packed, weight).unwrap();
                for (i, &lane) in lanes.iter().enumerate() {
                    assert_eq!(
                        got[i],
                        i32::from(lane) * i32::from(weight),
                        "lanes {lanes:?} weight {weight} lane {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn accumulator_rejects_overflow() {
        let mut acc = DotAccumulator::new(4);
        acc.add(7).unwrap();
        assert_eq!(
            acc.add(1),
            Err(PeError::AccumulatorOverflow {
                value: 8,
                width_bits: 4
            })
        );
        // failed add leaves the value untouched
        assert_eq!(acc.value(), 7);
        acc.add(-14).unwrap();
        assert_eq!(acc.value(), -7);
        assert_eq!(
            acc.add(-1),
            Err(PeError::AccumulatorOverflow {
                value: -8,
                width_bits: 4
            })
        );
    }

    /// Every catalog configuration, driven with extremal operands at its full
    /// dot size, stays within the width acc_width prescribes.
    #[test]
    fn acc_width_sufficient_for_catalog_extremes() {
        for cfg in pe_catalog() {
            let width = acc_width(
                u32::from(cfg.act.bits()),
                cfg.weight.effective_bits(),
                cfg.words_per_dot,
            );
            let act_max = if cfg.act.is_bipolar() {
                1
            } else {
                i64::from(cfg.act.levels())
            };
            let weight_mags: Vec<i64> = match cfg.weight {
                WeightFormat::Binary => vec![-1, 1],
                WeightFormat::Ternary => vec![-1, 1],
                WeightFormat::SignedInt { bits } => {
                    vec![-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1]
                }
                WeightFormat::Fp32 => continue,
            };
            for &w in &weight_mags {
                let mut acc = DotAccumulator::new(width);
                for _ in 0..cfg.words_per_dot {
                    acc.add(act_max * w).unwrap_or_else(|e| {
                        panic!("{} overflowed with weight {w}: {e}", cfg.label())
                    });
                }
            }
        }
    }

    #[test]
    fn catalog_has_expected_rows() {
        let catalog = pe_catalog();
        assert_eq!(catalog.len(), 15);
        assert_eq!(
            catalog_lookup(8, WeightFormat::signed(8).unwrap(), 8)
                .unwrap()
                .alms_per_dot,
            500
        );
        assert_eq!(
            catalog_lookup(2, WeightFormat::Ternary, 64).unwrap().alms_per_dot,
            318
        );
        assert_eq!(
            catalog_lookup(1, WeightFormat::Binary, 8).unwrap().alms_per_dot,
            19
        );
        assert_eq!(
            catalog_lookup(2, WeightFormat::Ternary, 64)
                .unwrap()
                .dsp_macs_per_block,
            8
        );
        assert_eq!(
            catalog_widest(2, WeightFormat::signed(2).unwrap())
                .unwrap()
                .words_per_dot,
            64
        );
    }

    #[test]
    fn catalog_labels() {
        assert_eq!(
            catalog_lookup(2, WeightFormat::Ternary, 64).unwrap().label(),
            "2xT/64"
        );
        assert_eq!(
            catalog_lookup(8, WeightFormat::signed(8).unwrap(), 8)
                .unwrap()
                .label(),
            "8x8/8"
        );
        assert_eq!(
            catalog_lookup(1, WeightFormat::Binary, 32).unwrap().label(),
            "1x1/32"
        );
    }
}
