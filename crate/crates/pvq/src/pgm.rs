//! 8-bit grayscale images with binary PGM (P5) I/O, plus MSE/PSNR metrics.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>, // row-major
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimension("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidDimension(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

fn read_header_token(reader: &mut impl Read) -> Result<String> {
    // Tokens are separated by whitespace; '#' starts a comment to end of line.
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        let n = reader.read(&mut byte)?;
        if n == 0 {
            if token.is_empty() {
                return Err(Error::Format("unexpected end of PGM header".into()));
            }
            return Ok(token);
        }
        let c = byte[0];
        if in_comment {
            if c == b'\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            b'#' => in_comment = true,
            b' ' | b'\t' | b'\r' | b'\n' => {
                if !token.is_empty() {
                    return Ok(token);
                }
            }
            _ => token.push(c as char),
        }
    }
}

/// Reads a binary (P5) PGM with maxval <= 255.
pub fn read_pgm(mut reader: impl Read) -> Result<GrayImage> {
    let magic = read_header_token(&mut reader)?;
    if magic != "P5" {
        return Err(Error::Format(format!("not a binary PGM (magic {magic:?})")));
    }
    let parse = |tok: String| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {tok:?}")))
    };
    let width = parse(read_header_token(&mut reader)?)?;
    let height = parse(read_header_token(&mut reader)?)?;
    let maxval = parse(read_header_token(&mut reader)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let mut pixels = vec![0u8; width.checked_mul(height).ok_or_else(|| {
        Error::Format("PGM dimensions overflow".into())
    })?];
    reader.read_exact(&mut pixels).map_err(|_| Error::Format("PGM pixel data truncated".into()))?;
    GrayImage::new(width, height, pixels)
}

pub fn write_pgm(img: &GrayImage, mut writer: impl Write) -> Result<()> {
    write!(writer, "P5\n{} {}\n255\n", img.width(), img.height())?;
    writer.write_all(img.pixels())?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pgm(img, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Mean squared error between two same-sized images.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected: a.width() * a.height(),
            actual: b.width() * b.height(),
        });
    }
    let total: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    Ok(total / (a.width() * a.height()) as f64)
}

/// Peak signal-to-noise ratio in dB against a 255 peak; identical images
/// give +infinity.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / e).log10())
}
