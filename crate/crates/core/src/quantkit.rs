//! Post-training affine quantization and magnitude pruning for detector
//! weights, plus storage-footprint accounting.
//!
//! The quantization grid always includes zero: the real range is widened to
//! `[min(0, min(v)), max(0, max(v))]` before the scale is computed, so an
//! exact-zero weight (e.g. one produced by pruning) survives a quantize /
//! dequantize round trip unchanged. All rounding is round-half-to-even.

use thiserror::Error;

/// Fixed serialized-header size used by footprint accounting:
/// scale (8) + zero_point (4) + length (8).
pub const QUANTIZED_HEADER_BYTES: u64 = 20;

/// Wire-format header adds a 1-byte bit-width tag in front of the
/// footprint header fields.
pub const WIRE_HEADER_BYTES: usize = 21;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("input vector is empty")]
    EmptyInput,
    #[error("input contains a non-finite value: {0}")]
    NonFiniteValue(f64),
    #[error("unsupported bit width {0} (only 8 is supported)")]
    UnsupportedBitWidth(u8),
    #[error("prune fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("malformed quantized tensor bytes: {0}")]
    Malformed(&'static str),
}

/// Int8 affine-quantized tensor: `value = (q - zero_point) * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    q_values: Vec<u8>,
    scale: f64,
    zero_point: i32,
    bit_width: u8,
}

impl QuantizedTensor {
    pub fn q_values(&self) -> &[u8] {
        &self.q_values
    }

    /// Real units per quantum; always > 0.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Quantum that dequantizes to exactly 0, in `[0, 2^b - 1]`.
    pub fn zero_point(&self) -> i32 {
        self.zero_point
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    pub fn original_len(&self) -> usize {
        self.q_values.len()
    }

    /// Wire format: bit_width (1 byte), original_len (8 bytes BE),
    /// zero_point (4 bytes BE signed), scale (8-byte IEEE-754 BE),
    /// then one byte per quantum.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WIRE_HEADER_BYTES + self.q_values.len());
        out.push(self.bit_width);
        out.extend_from_slice(&(self.q_values.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.zero_point.to_be_bytes());
        out.extend_from_slice(&self.scale.to_be_bytes());
        out.extend_from_slice(&self.q_values);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QuantError> {
        if bytes.len() < WIRE_HEADER_BYTES {
            return Err(QuantError::Malformed("shorter than header"));
        }
        let bit_width = bytes[0];
        if bit_width != 8 {
            return Err(QuantError::UnsupportedBitWidth(bit_width));
        }
        let len = u64::from_be_bytes(bytes[1..9].try_into().unwrap()) as usize;
        let zero_point = i32::from_be_bytes(bytes[9..13].try_into().unwrap());
        let scale = f64::from_be_bytes(bytes[13..21].try_into().unwrap());
        if bytes.len() != WIRE_HEADER_BYTES + len {
            return Err(QuantError::Malformed("length field disagrees with payload"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::Malformed("scale must be finite and positive"));
        }
        if !(0..=255).contains(&zero_point) {
            return Err(QuantError::Malformed("zero point outside [0, 255]"));
        }
        Ok(QuantizedTensor {
            q_values: bytes[WIRE_HEADER_BYTES..].to_vec(),
            scale,
            zero_point,
            bit_width,
        })
    }
}

/// Outcome of a magnitude-pruning pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneReport {
    pub kept: usize,
    pub zeroed: usize,
    /// zeroed / (kept + zeroed), in [0, 1].
    pub sparsity: f64,
}

/// Quantize to int8 on a zero-inclusive range.
///
/// Range is `[min(0, min(values)), max(0, max(values))]`; scale is
/// `range / 255`, or 1.0 for the all-zeros degenerate case. The zero point is
/// `round(-range_min / scale)` clamped into `[0, 255]`, so 0.0 is always
/// exactly representable.
pub fn quantize_affine(values: &[f64], bit_width: u8) -> Result<QuantizedTensor, QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if bit_width != 8 {
        return Err(QuantError::UnsupportedBitWidth(bit_width));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteValue(bad));
    }

    let q_max = ((1u32 << bit_width) - 1) as f64;
    let range_min = values.iter().fold(0.0_f64, |m, &v| m.min(v));
    let range_max = values.iter().fold(0.0_f64, |m, &v| m.max(v));
    let scale = if range_max == range_min {
        1.0
    } else {
        (range_max - range_min) / q_max
    };
    let zero_point = ((-range_min / scale).round_ties_even() as i64).clamp(0, q_max as i64);

    let q_values = values
        .iter()
        .map(|&v| {
            let q = (v / scale).round_ties_even() as i64 + zero_point;
            q.clamp(0, q_max as i64) as u8
        })
        .collect();

    Ok(QuantizedTensor {
        q_values,
        scale,
        zero_point: zero_point as i32,
        bit_width,
    })
}

/// Inverse of [`quantize_affine`]: `(q - zero_point) * scale` per element.
pub fn dequantize(qt: &QuantizedTensor) -> Vec<f64> {
    qt.q_values
        .iter()
        .map(|&q| (q as i64 - qt.zero_point as i64) as f64 * qt.scale)
        .collect()
}

/// Zero the `floor(fraction * n)` entries of smallest absolute value,
/// breaking magnitude ties by lowest index first.
pub fn prune_magnitude(
    values: &[f64],
    fraction: f64,
) -> Result<(Vec<f64>, PruneReport), QuantError> {
    if values.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(QuantError::InvalidFraction(fraction));
    }

    let n = values.len();
    let zeroed = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .abs()
            .total_cmp(&values[b].abs())
            .then(a.cmp(&b))
    });

    let mut pruned = values.to_vec();
    for &i in order.iter().take(zeroed) {
        pruned[i] = 0.0;
    }
    let report = PruneReport {
        kept: n - zeroed,
        zeroed,
        sparsity: zeroed as f64 / n as f64,
    };
    Ok((pruned, report))
}

/// Weight-tensor layouts the footprint accounting understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Float32,
    QuantizedInt8,
}

/// Bytes needed to store `n` weights in the given layout.
///
/// Float32 is 4 bytes per weight; int8 is one byte per weight plus the
/// 20-byte header ([`QUANTIZED_HEADER_BYTES`]). For n >= 1024 the int8 /
/// float32 ratio stays at or below 0.26.
pub fn storage_footprint(kind: StorageKind, n: u64) -> u64 {
    match kind {
        StorageKind::Float32 => 4 * n,
        StorageKind::QuantizedInt8 => n + QUANTIZED_HEADER_BYTES,
    }
}
