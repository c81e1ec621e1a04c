//! Fixed-rate block image codec: split into m x m blocks, transform, PVQ-encode
//! the AC coefficients, and pack everything into a bitstream whose size depends
//! only on the image dimensions and codec parameters, never on content.
//!
//! Bitstream layout (big-endian, MSB-first bit packing):
//!   magic "PVQ1" | width u32 | height u32 | m u8 | k u16 | dc_bits u8 |
//!   r_bits u8 | reserved u16 | per block: dc, radius, index | zero padding
//! dc and radius are raw IEEE-754 32-bit floats when their bit width is 0,
//! otherwise uniform scalar-quantizer codes; the index always occupies
//! bits_required(m*m - 1, k) bits.

use crate::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::pyramid::{self, PyramidIndex};
use crate::transform::{self, CoeffBlock, PixelBlock, TransformSpec};

/// AC energy below this is treated as zero: the block is coded as a null
/// (radius 0), absorbing transform round-off on exactly constant blocks.
pub const NULL_RADIUS_EPS: f64 = 1e-7;

const MAGIC: &[u8; 4] = b"PVQ1";
const HEADER_LEN: usize = 19;

/// One coded block: DC coefficient, AC radius, and the pyramid index of the
/// quantized AC direction. A zero radius marks a null AC part, in which case
/// the index is 0 by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBlock {
    dc: f32,
    radius: f32,
    index: PyramidIndex,
}

impl EncodedBlock {
    pub fn new(dc: f32, radius: f32, index: PyramidIndex) -> Result<Self> {
        if !dc.is_finite() || !radius.is_finite() || radius < 0.0 {
            return Err(Error::NonFiniteInput);
        }
        if radius == 0.0 && index.value() != 0 {
            return Err(Error::InvalidArgument(
                "null block must carry index 0".into(),
            ));
        }
        Ok(EncodedBlock { dc, radius, index })
    }

    pub fn dc(&self) -> f32 {
        self.dc
    }

    pub fn radius(&self) -> f32 {
        self.radius
    }

    pub fn index(&self) -> PyramidIndex {
        self.index
    }

    pub fn is_null(&self) -> bool {
        self.radius == 0.0
    }

    /// Block side: the index dimension is m*m - 1.
    pub fn m(&self) -> usize {
        ((self.index.n() + 1) as f64).sqrt() as usize
    }
}

/// Encodes one pixel block. The AC coefficients are taken in the fixed scan
/// order, their L2 norm becomes the radius, and their direction is quantized
/// onto P(m*m - 1, k).
pub fn encode_block(x: &PixelBlock, spec: TransformSpec, k: usize) -> Result<EncodedBlock> {
    encode_block_weighted(x, spec, k, None)
}

/// `encode_block` with an optional positive weight per coefficient applied
/// before quantization; pass the same weights to `decode_block_weighted`.
pub fn encode_block_weighted(
    x: &PixelBlock,
    spec: TransformSpec,
    k: usize,
    weights: Option<&[f64]>,
) -> Result<EncodedBlock> {
    if !spec.is_real() {
        return Err(Error::InvalidArgument(
            "the codec uses real transforms (DCT-II or WHT)".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("pyramid parameter k must be >= 1".into()));
    }
    let mut q = transform::forward(spec, x)?;
    if let Some(w) = weights {
        q = transform::weight_coefficients(&q, w)?;
    }
    let n = spec.m() * spec.m() - 1;
    let dc = q.dc() as f32;
    let ac = q.ac_scan();
    let radius = ac.iter().map(|v| v * v).sum::<f64>().sqrt();
    if radius <= NULL_RADIUS_EPS {
        return EncodedBlock::new(dc, 0.0, PyramidIndex::new(n, k, 0)?);
    }
    let point = pyramid::encode(ac, k)?;
    let index = pyramid::point_to_index(&point)?;
    EncodedBlock::new(dc, radius as f32, index)
}

/// Reassembles the coefficient block q00 U00 + alpha * sum yhat_t U_ij and
/// applies the inverse transform.
pub fn decode_block(b: &EncodedBlock, spec: TransformSpec) -> Result<PixelBlock> {
    decode_block_weighted(b, spec, None)
}

pub fn decode_block_weighted(
    b: &EncodedBlock,
    spec: TransformSpec,
    weights: Option<&[f64]>,
) -> Result<PixelBlock> {
    let m = spec.m();
    if m * m - 1 != b.index.n() {
        return Err(Error::DimensionMismatch { expected: m * m - 1, actual: b.index.n() });
    }
    let mut re = vec![0.0f64; m * m];
    re[0] = b.dc as f64;
    if !b.is_null() {
        let point = pyramid::index_to_point(&b.index)?;
        let alpha = b.radius as f64 / point.l2_norm()?;
        for (slot, &c) in re[1..].iter_mut().zip(point.components()) {
            *slot = alpha * c as f64;
        }
    }
    let mut q = CoeffBlock::real(m, re)?;
    if let Some(w) = weights {
        let inv: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        q = transform::weight_coefficients(&q, &inv)?;
    }
    transform::inverse(spec, &q)
}

/// A whole coded image. Dimensions are the padded ones: both are multiples
/// of the block side.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    width: u32,
    height: u32,
    m: u8,
    k: u16,
    dc_bits: u8,
    r_bits: u8,
    blocks: Vec<EncodedBlock>,
}

impl EncodedImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn m(&self) -> usize {
        self.m as usize
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn dc_bits(&self) -> u8 {
        self.dc_bits
    }

    pub fn r_bits(&self) -> u8 {
        self.r_bits
    }

    pub fn blocks(&self) -> &[EncodedBlock] {
        &self.blocks
    }

    pub fn blocks_w(&self) -> usize {
        self.width as usize / self.m as usize
    }

    pub fn blocks_h(&self) -> usize {
        self.height as usize / self.m as usize
    }

    pub fn block(&self, bx: usize, by: usize) -> &EncodedBlock {
        &self.blocks[by * self.blocks_w() + bx]
    }

    /// Exact packed payload size in bits: a closed-form function of the
    /// parameters only, independent of image content.
    pub fn payload_bits(&self) -> Result<usize> {
        let dc = if self.dc_bits == 0 { 32 } else { self.dc_bits as usize };
        let r = if self.r_bits == 0 { 32 } else { self.r_bits as usize };
        let idx = pyramid::bits_required(self.m() * self.m() - 1, self.k())? as usize;
        Ok(self.blocks.len() * (dc + r + idx))
    }

    /// Total packed size in bytes including the header.
    pub fn packed_len(&self) -> Result<usize> {
        Ok(HEADER_LEN + self.payload_bits()?.div_ceil(8))
    }
}

// --- scalar quantizers ---------------------------------------------------

/// Upper bound on |DC| and on the AC radius for 8-bit input: the Frobenius
/// norm of an m x m block of values in [0, 255], preserved by orthonormal
/// transforms.
fn coeff_ceiling(m: usize) -> f64 {
    255.0 * m as f64
}

/// Midpoint uniform quantizer for the DC coefficient over [0, 255 m].
fn quantize_dc(v: f64, bits: u8, m: usize) -> f32 {
    let levels = 1u64 << bits;
    let delta = coeff_ceiling(m) / levels as f64;
    let code = ((v / delta).floor() as i64).clamp(0, levels as i64 - 1) as u64;
    ((code as f64 + 0.5) * delta) as f32
}

fn dc_code(v: f32, bits: u8, m: usize) -> u64 {
    let levels = 1u64 << bits;
    let delta = coeff_ceiling(m) / levels as f64;
    ((v as f64 / delta - 0.5).round() as i64).clamp(0, levels as i64 - 1) as u64
}

fn dc_from_code(code: u64, bits: u8, m: usize) -> f32 {
    let levels = 1u64 << bits;
    let delta = coeff_ceiling(m) / levels as f64;
    ((code as f64 + 0.5) * delta) as f32
}

/// Radius quantizer over (0, 255 m]; code 0 is reserved for the null block so
/// the null marker survives quantization. Codes 1..2^bits-1 are bin midpoints.
fn quantize_radius(v: f64, bits: u8, m: usize) -> f32 {
    if v == 0.0 {
        return 0.0;
    }
    let levels = (1u64 << bits) - 1; // nonzero codes
    let delta = coeff_ceiling(m) / levels as f64;
    let code = ((v / delta).floor() as i64).clamp(0, levels as i64 - 1) as u64 + 1;
    ((code as f64 - 0.5) * delta) as f32
}

fn radius_code(v: f32, bits: u8, m: usize) -> u64 {
    if v == 0.0 {
        return 0;
    }
    let levels = (1u64 << bits) - 1;
    let delta = coeff_ceiling(m) / levels as f64;
    ((v as f64 / delta + 0.5).round() as i64).clamp(1, levels as i64) as u64
}

fn radius_from_code(code: u64, bits: u8, m: usize) -> f32 {
    if code == 0 {
        return 0.0;
    }
    let levels = (1u64 << bits) - 1;
    let delta = coeff_ceiling(m) / levels as f64;
    ((code as f64 - 0.5) * delta) as f32
}

// --- image-level coding ---------------------------------------------------

/// Pads by edge replication so both dimensions become multiples of m, then
/// encodes every block. dc_bits / r_bits of 0 keep those fields as raw
/// 32-bit floats; 1..=16 selects a uniform scalar quantizer.
pub fn encode_image(
    img: &GrayImage,
    spec: TransformSpec,
    k: usize,
    dc_bits: u8,
    r_bits: u8,
) -> Result<EncodedImage> {
    if dc_bits > 16 || r_bits > 16 {
        return Err(Error::InvalidArgument("scalar quantizers support at most 16 bits".into()));
    }
    if k == 0 || k > u16::MAX as usize {
        return Err(Error::InvalidArgument("k must be in 1..=65535".into()));
    }
    let m = spec.m();
    let width = img.width().div_ceil(m) * m;
    let height = img.height().div_ceil(m) * m;
    let mut blocks = Vec::with_capacity((width / m) * (height / m));
    for by in 0..height / m {
        for bx in 0..width / m {
            let mut values = Vec::with_capacity(m * m);
            for dy in 0..m {
                for dx in 0..m {
                    let x = (bx * m + dx).min(img.width() - 1);
                    let y = (by * m + dy).min(img.height() - 1);
                    values.push(img.get(x, y) as f64);
                }
            }
            let block = PixelBlock::new(m, values)?;
            let mut enc = encode_block(&block, spec, k)?;
            if dc_bits > 0 {
                enc.dc = quantize_dc(enc.dc as f64, dc_bits, m);
            }
            if r_bits > 0 {
                enc.radius = quantize_radius(enc.radius as f64, r_bits, m);
            }
            blocks.push(enc);
        }
    }
    Ok(EncodedImage {
        width: width as u32,
        height: height as u32,
        m: m as u8,
        k: k as u16,
        dc_bits,
        r_bits,
        blocks,
    })
}

/// Decodes to the padded dimensions recorded in the image.
pub fn decode_image(enc: &EncodedImage, spec: TransformSpec) -> Result<GrayImage> {
    let m = enc.m();
    if spec.m() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: spec.m() });
    }
    let width = enc.width as usize;
    let height = enc.height as usize;
    let mut pixels = vec![0u8; width * height];
    for by in 0..enc.blocks_h() {
        for bx in 0..enc.blocks_w() {
            let block = decode_block(enc.block(bx, by), spec)?;
            for dy in 0..m {
                for dx in 0..m {
                    let v = block.get(dy, dx).round().clamp(0.0, 255.0) as u8;
                    pixels[(by * m + dy) * width + bx * m + dx] = v;
                }
            }
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Serializes to the bitstream format described at the top of this module.
pub fn pack(enc: &EncodedImage) -> Result<Vec<u8>> {
    let m = enc.m();
    let idx_bits = pyramid::bits_required(m * m - 1, enc.k())?;
    let mut out = Vec::with_capacity(enc.packed_len()?);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&enc.width.to_be_bytes());
    out.extend_from_slice(&enc.height.to_be_bytes());
    out.push(enc.m);
    out.extend_from_slice(&enc.k.to_be_bytes());
    out.push(enc.dc_bits);
    out.push(enc.r_bits);
    out.extend_from_slice(&0u16.to_be_bytes());

    let mut w = BitWriter::new();
    for b in &enc.blocks {
        if enc.dc_bits == 0 {
            w.write_f32(b.dc)?;
        } else {
            w.write_bits(dc_code(b.dc, enc.dc_bits, m) as u128, enc.dc_bits as u32)?;
        }
        if enc.r_bits == 0 {
            w.write_f32(b.radius)?;
        } else {
            w.write_bits(radius_code(b.radius, enc.r_bits, m) as u128, enc.r_bits as u32)?;
        }
        w.write_bits(b.index.value(), idx_bits)?;
    }
    out.extend_from_slice(&w.finish());
    Ok(out)
}

/// Parses and validates a bitstream; any malformed field is a structured
/// error, never a panic.
pub fn unpack(bytes: &[u8]) -> Result<EncodedImage> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("stream shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let width = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_be_bytes(bytes[8..12].try_into().unwrap());
    let m = bytes[12] as usize;
    let k = u16::from_be_bytes(bytes[13..15].try_into().unwrap());
    let dc_bits = bytes[15];
    let r_bits = bytes[16];
    if m < 2 {
        return Err(Error::Format("block side must be >= 2".into()));
    }
    if k == 0 {
        return Err(Error::Format("k must be >= 1".into()));
    }
    if dc_bits > 16 || r_bits > 16 {
        return Err(Error::Format("quantizer width out of range".into()));
    }
    if width == 0 || height == 0 || width as usize % m != 0 || height as usize % m != 0 {
        return Err(Error::Format("dimensions must be positive multiples of the block side".into()));
    }
    let n_blocks = (width as usize / m) * (height as usize / m);
    let idx_bits = pyramid::bits_required(m * m - 1, k as usize)?;

    let mut r = BitReader::new(&bytes[HEADER_LEN..]);
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let dc = if dc_bits == 0 {
            let v = r.read_f32()?;
            if !v.is_finite() {
                return Err(Error::Format("non-finite DC".into()));
            }
            v
        } else {
            dc_from_code(r.read_bits(dc_bits as u32)? as u64, dc_bits, m)
        };
        let radius = if r_bits == 0 {
            let v = r.read_f32()?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Format("invalid radius".into()));
            }
            v
        } else {
            radius_from_code(r.read_bits(r_bits as u32)? as u64, r_bits, m)
        };
        let value = r.read_bits(idx_bits)?;
        let index = PyramidIndex::new(m * m - 1, k as usize, value)
            .map_err(|e| Error::Format(format!("invalid block index: {e}")))?;
        let block = if radius == 0.0 && value != 0 {
            return Err(Error::Format("null block with nonzero index".into()));
        } else {
            EncodedBlock { dc, radius, index }
        };
        blocks.push(block);
    }
    Ok(EncodedImage { width, height, m: m as u8, k, dc_bits, r_bits, blocks })
}
