//! MSB-first bit packing for the fixed-rate bitstream and the descriptor
//! database: fields of up to 128 bits written back to back, final byte
//! zero-padded.

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter::default()
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u128, width: u32) -> Result<()> {
        if width > 128 {
            return Err(Error::InvalidArgument("bit width exceeds 128".into()));
        }
        if width < 128 && value >> width != 0 {
            return Err(Error::InvalidArgument(format!(
                "value {value} does not fit in {width} bits"
            )));
        }
        for i in (0..width).rev() {
            let bit = ((value >> i) & 1) as u8;
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            let last = self.bytes.len() - 1;
            self.bytes[last] |= bit << (7 - self.bits % 8);
            self.bits += 1;
        }
        Ok(())
    }

    pub fn write_f32(&mut self, v: f32) -> Result<()> {
        self.write_bits(v.to_bits() as u128, 32)
    }

    pub fn bit_len(&self) -> usize {
        self.bits
    }

    /// The packed bytes; the final partial byte, if any, is zero-padded.
    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u128> {
        if width > 128 {
            return Err(Error::InvalidArgument("bit width exceeds 128".into()));
        }
        if self.pos + width as usize > self.bytes.len() * 8 {
            return Err(Error::Format("bitstream truncated".into()));
        }
        let mut out: u128 = 0;
        for _ in 0..width {
            let byte = self.bytes[self.pos / 8];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            out = (out << 1) | bit as u128;
            self.pos += 1;
        }
        Ok(out)
    }

    pub fn read_f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.read_bits(32)? as u32))
    }

    pub fn bits_remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_bit_pattern() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3).unwrap();
        w.write_bits(0b1, 1).unwrap();
        assert_eq!(w.finish(), vec![0b1011_0000]);
    }

    #[test]
    fn crosses_byte_boundaries() {
        let mut w = BitWriter::new();
        w.write_bits(0xABC, 12).unwrap();
        w.write_bits(0xD, 4).unwrap();
        assert_eq!(w.finish(), vec![0xAB, 0xCD]);
    }

    #[test]
    fn zero_width_writes_nothing() {
        let mut w = BitWriter::new();
        w.write_bits(0, 0).unwrap();
        assert_eq!(w.bit_len(), 0);
        assert!(w.finish().is_empty());
    }

    #[test]
    fn oversized_value_rejected() {
        let mut w = BitWriter::new();
        assert!(w.write_bits(4, 2).is_err());
        assert!(w.write_bits(0, 129).is_err());
    }

    #[test]
    fn round_trip_mixed_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fields: Vec<(u128, u32)> = (0..500)
            .map(|_| {
                let width = rng.gen_range(0..=128u32);
                let value = if width == 0 {
                    0
                } else if width == 128 {
                    rng.gen()
                } else {
                    rng.gen::<u128>() & ((1u128 << width) - 1)
                };
                (value, width)
            })
            .collect();
        let mut w = BitWriter::new();
        for &(v, width) in &fields {
            w.write_bits(v, width).unwrap();
        }
        let total: usize = fields.iter().map(|&(_, w)| w as usize).sum();
        assert_eq!(w.bit_len(), total);
        let bytes = w.finish();
        assert_eq!(bytes.len(), total.div_ceil(8));

        let mut r = BitReader::new(&bytes);
        for &(v, width) in &fields {
            assert_eq!(r.read_bits(width).unwrap(), v);
        }
    }

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let values = [0.0f32, -0.0, 1.5, -3.25e-12, f32::MAX, f32::MIN_POSITIVE];
        let mut w = BitWriter::new();
        for &v in &values {
            w.write_f32(v).unwrap();
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for &v in &values {
            assert_eq!(r.read_f32().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn truncated_read_is_an_error() {
        let mut r = BitReader::new(&[0xFF]);
        assert_eq!(r.read_bits(8).unwrap(), 0xFF);
        assert!(matches!(r.read_bits(1), Err(Error::Format(_))));
    }

    #[test]
    fn final_byte_zero_padded() {
        let mut w = BitWriter::new();
        w.write_bits(0b1, 1).unwrap();
        assert_eq!(w.finish(), vec![0b1000_0000]);
    }
}
