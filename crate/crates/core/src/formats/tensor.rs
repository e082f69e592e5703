//! Binary tensor container.
//!
//! Layout (all multi-byte fields little-endian):
//!
//! ```text
//! bytes 0..4   magic "LPQT"
//! bytes 4..6   version, u16 (currently 1)
//! byte  6      encoding tag, u8: 1 = one byte per code, 2 = packed bits
//! byte  7      activation bits, u8 (1..=8)
//! byte  8      rank, u8 (always 4: N, C, H, W)
//! next 16      dims, 4 x u32
//! rest         codes; encoding 1: one u8 per code in NCHW order;
//!              encoding 2: codes packed LSB-first at `bits` per code,
//!              final byte zero-padded
//! ```

use super::FormatError;
use crate::numerics::{ActFormat, QTensor, TensorShape};
use std::io::{Read, Write};

pub const TENSOR_MAGIC: [u8; 4] = *b"LPQT";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TensorEncoding {
    #[default]
    Bytes,
    PackedBits,
}

impl TensorEncoding {
    fn tag(self) -> u8 {
        match self {
            TensorEncoding::Bytes => 1,
            TensorEncoding::PackedBits => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, FormatError> {
        match tag {
            1 => Ok(TensorEncoding::Bytes),
            2 => Ok(TensorEncoding::PackedBits),
            other => Err(FormatError::BadEncoding(other)),
        }
    }
}

/// Pack codes LSB-first at `bits` per code.
pub fn pack_codes(codes: &[u8], bits: u8) -> Vec<u8> {
    let total_bits = codes.len() * usize::from(bits);
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    for (i, &code) in codes.iter().enumerate() {
        let base = i * usize::from(bits);
        for b in 0..usize::from(bits) {
            if code >> b & 1 == 1 {
                out[(base + b) / 8] |= 1 << ((base + b) % 8);
            }
        }
    }
    out
}

/// Inverse of [`pack_codes`].
pub fn unpack_codes(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u8>, FormatError> {
    let total_bits = count * usize::from(bits);
    if bytes.len() < total_bits.div_ceil(8) {
        return Err(FormatError::Truncated);
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = i * usize::from(bits);
        let mut code = 0u8;
        for b in 0..usize::from(bits) {
            if bytes[(base + b) / 8] >> ((base + b) % 8) & 1 == 1 {
                code |= 1 << b;
            }
        }
        out.push(code);
    }
    Ok(out)
}

pub fn write_qtensor<W: Write>(
    w: &mut W,
    tensor: &QTensor,
    encoding: TensorEncoding,
) -> Result<(), FormatError> {
    let shape = tensor.shape();
    w.write_all(&TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    w.write_all(&[encoding.tag(), tensor.format().bits(), 4])?;
    for dim in [shape.n, shape.c, shape.h, shape.w] {
        let dim = u32::try_from(dim)
            .map_err(|_| FormatError::Validation(format!("dim {dim} exceeds u32")))?;
        w.write_all(&dim.to_le_bytes())?;
    }
    match encoding {
        TensorEncoding::Bytes => w.write_all(tensor.codes())?,
        TensorEncoding::PackedBits => {
            w.write_all(&pack_codes(tensor.codes(), tensor.format().bits()))?
        }
    }
    Ok(())
}

pub fn read_qtensor<R: Read>(r: &mut R) -> Result<QTensor, FormatError> {
    let mut head = [0u8; 9];
    r.read_exact(&mut head).map_err(|_| FormatError::Truncated)?;
    if head[0..4] != TENSOR_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != TENSOR_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let encoding = TensorEncoding::from_tag(head[6])?;
    let bits = head[7];
    let rank = head[8];
    if rank != 4 {
        return Err(FormatError::BadRank(rank));
    }
    let mut dims = [0usize; 4];
    for dim in dims.iter_mut() {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| FormatError::Truncated)?;
        *dim = u32::from_le_bytes(buf) as usize;
    }
    let shape = TensorShape::new(dims[0], dims[1], dims[2], dims[3]);
    let format = ActFormat::new(bits)?;
    let codes = match encoding {
        TensorEncoding::Bytes => {
            let mut codes = vec![0u8; shape.volume()];
            r.read_exact(&mut codes).map_err(|_| FormatError::Truncated)?;
            codes
        }
        TensorEncoding::PackedBits => {
            let n_bytes = (shape.volume() * usize::from(bits)).div_ceil(8);
            let mut bytes = vec![0u8; n_bytes];
            r.read_exact(&mut bytes).map_err(|_| FormatError::Truncated)?;
            unpack_codes(&bytes, bits, shape.volume())?
        }
    };
    Ok(QTensor::new(shape, format, codes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(tensor: &QTensor, encoding: TensorEncoding) -> QTensor {
        let mut buf = Vec::new();
        write_qtensor(&mut buf, tensor, encoding).unwrap();
        read_qtensor(&mut buf.as_slice()).unwrap()
    }

    proptest! {
        #[test]
        fn container_round_trips(
            bits in 1..=8u8,
            n in 1..3usize, c in 1..4usize, h in 1..5usize, w in 1..5usize,
            seed in any::<u64>(),
        ) {
            let fmt = ActFormat::new(bits).unwrap();
            let shape = TensorShape::new(n, c, h, w);
            let codes: Vec<u8> = (0..shape.volume())
                .map(|i| ((seed >> (i % 48)) as u32 % (fmt.levels() + 1)) as u8)
                .collect();
            let tensor = QTensor::new(shape, fmt, codes).unwrap();
            prop_assert_eq!(&round_trip(&tensor, TensorEncoding::Bytes), &tensor);
            prop_assert_eq!(&round_trip(&tensor, TensorEncoding::PackedBits), &tensor);
        }
    }

    #[test]
    fn packed_mode_actually_packs() {
        let fmt = ActFormat::new(2).unwrap();
        let shape = TensorShape::new(1, 1, 2, 4);
        let tensor = QTensor::new(shape, fmt, vec![0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        let mut packed = Vec::new();
        write_qtensor(&mut packed, &tensor, TensorEncoding::PackedBits).unwrap();
        // 9-byte header + 16 bytes dims + 2 payload bytes
        assert_eq!(packed.len(), 9 + 16 + 2);
        // LSB-first: codes 0,1,2,3 -> 0b11100100
        assert_eq!(packed[25], 0b1110_0100);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(
            read_qtensor(&mut &b"NOPE"[..]),
            Err(FormatError::Truncated)
        ));
        let mut buf = Vec::new();
        let fmt = ActFormat::new(2).unwrap();
        let tensor = QTensor::new(TensorShape::new(1, 1, 1, 1), fmt, vec![1]).unwrap();
        write_qtensor(&mut buf, &tensor, TensorEncoding::Bytes).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_qtensor(&mut buf.as_slice()),
            Err(FormatError::BadMagic)
        ));
        buf[0] = b'L';
        buf[4] = 9; // version
        assert!(matches!(
            read_qtensor(&mut buf.as_slice()),
            Err(FormatError::UnsupportedVersion(_))
        ));
        buf[4] = 1;
        buf.truncate(buf.len() - 1);
        assert!(matches!(
            read_qtensor(&mut buf.as_slice()),
            Err(FormatError::Truncated)
        ));
    }
}
