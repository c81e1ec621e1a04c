//! Convolution evaluated directly on encoded blocks. A kernel's response to
//! a block is a weighted sum of the block's coefficients, so it costs the
//! same k-1 additions as any other PVQ dot product. Kernels that straddle
//! the block grid are split into four aligned sub-kernels; a sliding
//! processor caches the split per distinct (x, y) shift. The sparse paths
//! retain only the largest coefficients, spatially per block or spectrally
//! over a whole image.

use crate::codec::{EncodedBlock, EncodedImage};
use crate::dot::{pvq_dot, CostMeter};
use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::pyramid::{self, PvqVector};
use crate::transform::{self, BasisResponses, CoeffBlock, PixelBlock, TransformSpec};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Mutex;

/// An m1 x m1 convolution kernel (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    m1: usize,
    values: Vec<f64>,
}

impl Kernel {
    pub fn new(m1: usize, values: Vec<f64>) -> Result<Self> {
        if m1 == 0 || values.len() != m1 * m1 {
            return Err(Error::InvalidDimension(format!(
                "expected {} values for an {m1}x{m1} kernel, got {}",
                m1 * m1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Kernel { m1, values })
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m1 + j]
    }

    /// Parses the text format: first token the side m1, then m1*m1 reals.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let m1: usize = tokens
            .next()
            .ok_or_else(|| Error::Format("empty kernel file".into()))?
            .parse()
            .map_err(|_| Error::Format("kernel side must be an integer".into()))?;
        let values: Vec<f64> = tokens
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad kernel value {t:?}"))))
            .collect::<Result<_>>()?;
        Kernel::new(m1, values)
    }
}

/// Frobenius inner product of the kernel (zero-extended to m x m, anchored
/// top-left) with a pixel block. The pixel-domain oracle for everything else
/// in this module.
pub fn conv_direct(c: &Kernel, x: &PixelBlock) -> Result<f64> {
    if c.m1() > x.m() {
        return Err(Error::InvalidDimension(format!(
            "kernel side {} exceeds block side {}",
            c.m1(),
            x.m()
        )));
    }
    let mut acc = 0.0;
    for i in 0..c.m1() {
        for j in 0..c.m1() {
            acc += c.get(i, j) * x.get(i, j);
        }
    }
    Ok(acc)
}

/// Kernel response from an encoded block using precomputed basis responses:
/// dc * resp(0,0) + alpha * sum yhat_t * resp_t. The AC part is a PVQ dot
/// product (k-1 additions, 1 lookup, 2 multiplications); the DC term adds one
/// multiplication and one addition.
pub fn conv_pvq_basis(
    responses: &BasisResponses,
    b: &EncodedBlock,
    meter: &mut CostMeter,
) -> Result<f64> {
    conv_weighted(responses.dc(), responses.ac_scan(), b, meter)
}

/// Same response computed from the transformed kernel T(C) (identical to the
/// basis-response route for orthonormal transforms): q00 w00 + alpha * sum
/// yhat_t w_t. Complex coefficient blocks are rejected.
pub fn conv_pvq_transform(tc: &CoeffBlock, b: &EncodedBlock, meter: &mut CostMeter) -> Result<f64> {
    if tc.is_complex() {
        return Err(Error::InvalidArgument(
            "compressed-domain convolution requires a real orthonormal transform".into(),
        ));
    }
    conv_weighted(tc.dc(), tc.ac_scan(), b, meter)
}

fn conv_weighted(w_dc: f64, w_ac: &[f64], b: &EncodedBlock, meter: &mut CostMeter) -> Result<f64> {
    if w_ac.len() != b.index().n() {
        return Err(Error::DimensionMismatch { expected: b.index().n(), actual: w_ac.len() });
    }
    let ac = if b.is_null() {
        0.0
    } else {
        let point = pyramid::index_to_point(&b.index())?;
        let v = PvqVector::new(b.radius() as f64, point)?;
        pvq_dot(w_ac, &v, meter)?
    };
    let out = b.dc() as f64 * w_dc;
    meter.mul(1);
    if b.is_null() {
        Ok(out)
    } else {
        meter.add(1);
        Ok(out + ac)
    }
}

/// A kernel placed at shift (x, y) inside a 2x2 block neighborhood, split
/// into four block-aligned sub-kernels: index 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right. Nonzero entries of the sub-kernels
/// partition the original kernel.
#[derive(Debug, Clone)]
pub struct ShiftedKernelSet {
    m: usize,
    shift: (usize, usize),
    spatial: [PixelBlock; 4],
    transformed: [CoeffBlock; 4],
    zero: [bool; 4],
}

impl ShiftedKernelSet {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shift(&self) -> (usize, usize) {
        self.shift
    }

    /// The four zero-padded spatial sub-kernels.
    pub fn spatial(&self) -> &[PixelBlock; 4] {
        &self.spatial
    }

    /// The four transformed sub-kernels T(C_0..C_3).
    pub fn transformed(&self) -> &[CoeffBlock; 4] {
        &self.transformed
    }

    /// True when sub-kernel i has no support (the kernel never reaches that
    /// block at this shift).
    pub fn is_zero(&self, i: usize) -> bool {
        self.zero[i]
    }
}

/// Splits kernel C placed at (x, y) from the top-left block's origin into
/// four block-aligned sub-kernels, one per quadrant, and transforms each.
pub fn make_shifted_kernels(
    c: &Kernel,
    shift: (usize, usize),
    spec: TransformSpec,
) -> Result<ShiftedKernelSet> {
    if !spec.is_real() {
        return Err(Error::InvalidArgument(
            "compressed-domain convolution requires a real orthonormal transform".into(),
        ));
    }
    let m = spec.m();
    let (x, y) = shift;
    if x >= m || y >= m {
        return Err(Error::InvalidArgument(format!(
            "shift ({x}, {y}) outside [0, {m})"
        )));
    }
    if x + c.m1() > 2 * m || y + c.m1() > 2 * m {
        return Err(Error::InvalidDimension(
            "kernel at this shift overhangs the four-block neighborhood".into(),
        ));
    }
    let mut planes = [(); 4].map(|_| vec![0.0f64; m * m]);
    for ki in 0..c.m1() {
        for kj in 0..c.m1() {
            let py = y + ki;
            let px = x + kj;
            let quadrant = (py / m) * 2 + px / m;
            planes[quadrant][(py % m) * m + (px % m)] = c.get(ki, kj);
        }
    }
    let zero = [0, 1, 2, 3].map(|q| planes[q].iter().all(|&v| v == 0.0));
    let spatial = {
        let mut it = planes.into_iter();
        [(); 4].map(|_| PixelBlock::new(m, it.next().unwrap()).unwrap())
    };
    let mut transformed = Vec::with_capacity(4);
    for s in &spatial {
        transformed.push(transform::forward(spec, s)?);
    }
    let transformed: [CoeffBlock; 4] = transformed.try_into().unwrap();
    Ok(ShiftedKernelSet { m, shift, spatial, transformed, zero })
}

/// Response of the shifted kernel over its 2x2 neighborhood, blocks in
/// reading order (top-left, top-right, bottom-left, bottom-right).
/// Sub-kernels with no support are skipped at zero cost, so blocks the
/// kernel cannot reach are never consulted.
pub fn conv_overlap(
    set: &ShiftedKernelSet,
    blocks: [&EncodedBlock; 4],
    meter: &mut CostMeter,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut terms = 0u64;
    for q in 0..4 {
        if set.is_zero(q) {
            continue;
        }
        acc += conv_pvq_transform(&set.transformed[q], blocks[q], meter)?;
        terms += 1;
    }
    meter.add(terms.saturating_sub(1));
    Ok(acc)
}

/// Dense real-valued response map from a sliding convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ResponseMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidDimension("response map shape mismatch".into()));
        }
        Ok(ResponseMap { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Linear min-max normalization to 8-bit; a constant map becomes black.
    pub fn to_pgm_normalized(&self) -> GrayImage {
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = if max > min { 255.0 / (max - min) } else { 0.0 };
        let pixels = self.values.iter().map(|&v| ((v - min) * scale).round() as u8).collect();
        GrayImage::new(self.width, self.height, pixels).unwrap()
    }
}

const PVQR_MAGIC: &[u8; 4] = b"PVQR";

pub fn write_response_map(map: &ResponseMap, mut w: impl Write) -> Result<()> {
    w.write_all(PVQR_MAGIC)?;
    w.write_all(&(map.width as u32).to_be_bytes())?;
    w.write_all(&(map.height as u32).to_be_bytes())?;
    w.write_all(&0u32.to_be_bytes())?;
    for &v in &map.values {
        w.write_all(&(v as f32).to_be_bytes())?;
    }
    Ok(())
}

pub fn read_response_map(mut r: impl Read) -> Result<ResponseMap> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::Format("response map truncated".into()))?;
    if &header[0..4] != PVQR_MAGIC {
        return Err(Error::Format("bad response-map magic".into()));
    }
    let width = u32::from_be_bytes(header[4..8].try_into().unwrap()) as usize;
    let height = u32::from_be_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; width * height * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Format("response map truncated".into()))?;
    let values = buf
        .chunks_exact(4)
        .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ResponseMap::new(width, height, values)
}

/// Sliding compressed-domain convolution over an encoded image. Positions
/// sharing the same (x, y) shift relative to the block grid reuse one
/// transformed kernel set; the cache fills lazily and never holds more
/// entries than there are distinct shift classes.
pub struct ConvolutionProcessor {
    kernel: Kernel,
    spec: TransformSpec,
    cache: Mutex<HashMap<(usize, usize), ShiftedKernelSet>>,
}

impl ConvolutionProcessor {
    pub fn new(kernel: Kernel, spec: TransformSpec) -> Result<Self> {
        if kernel.m1() > 2 * spec.m() {
            return Err(Error::InvalidDimension(format!(
                "kernel side {} exceeds two blocks of side {}",
                kernel.m1(),
                spec.m()
            )));
        }
        if !spec.is_real() {
            return Err(Error::InvalidArgument(
                "compressed-domain convolution requires a real orthonormal transform".into(),
            ));
        }
        Ok(ConvolutionProcessor { kernel, spec, cache: Mutex::new(HashMap::new()) })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Number of distinct shift classes materialized so far.
    pub fn shift_classes_cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    /// Valid-mode sliding convolution: one response per position where the
    /// kernel lies fully inside the image, stepping by `stride` pixels.
    pub fn convolve(
        &self,
        img: &EncodedImage,
        stride: usize,
        meter: &mut CostMeter,
    ) -> Result<ResponseMap> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        let m = self.spec.m();
        if img.m() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: img.m() });
        }
        let (w, h) = (img.width() as usize, img.height() as usize);
        let m1 = self.kernel.m1();
        if m1 > w || m1 > h {
            return Err(Error::InvalidDimension("kernel larger than image".into()));
        }
        let out_w = (w - m1) / stride + 1;
        let out_h = (h - m1) / stride + 1;
        let mut values = Vec::with_capacity(out_w * out_h);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let px = ox * stride;
                let py = oy * stride;
                let (bx, by) = (px / m, py / m);
                let shift = (px % m, py % m);
                let set = {
                    let mut cache = self.cache.lock().unwrap();
                    if !cache.contains_key(&shift) {
                        let built = make_shifted_kernels(&self.kernel, shift, self.spec)?;
                        cache.insert(shift, built);
                    }
                    cache.get(&shift).unwrap().clone()
                };
                // Neighbors outside the grid are only needed when the kernel
                // reaches them; position validity rules that out, so the
                // top-left block stands in and is provably skipped.
                let b0 = img.block(bx, by);
                let bright = if bx + 1 < img.blocks_w() { img.block(bx + 1, by) } else { b0 };
                let bdown = if by + 1 < img.blocks_h() { img.block(bx, by + 1) } else { b0 };
                let bdiag = if bx + 1 < img.blocks_w() && by + 1 < img.blocks_h() {
                    img.block(bx + 1, by + 1)
                } else {
                    b0
                };
                debug_assert!(bx + 1 < img.blocks_w() || (set.is_zero(1) && set.is_zero(3)));
                debug_assert!(by + 1 < img.blocks_h() || (set.is_zero(2) && set.is_zero(3)));
                values.push(conv_overlap(&set, [b0, bright, bdown, bdiag], meter)?);
            }
        }
        ResponseMap::new(out_w, out_h, values)
    }
}

/// One-shot wrapper around `ConvolutionProcessor`.
pub fn conv_image(
    c: &Kernel,
    img: &EncodedImage,
    spec: TransformSpec,
    stride: usize,
    meter: &mut CostMeter,
) -> Result<ResponseMap> {
    ConvolutionProcessor::new(c.clone(), spec)?.convolve(img, stride, meter)
}

/// The K coefficients of largest absolute value from a real coefficient
/// block; all others are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoeffs {
    m: usize,
    retained: Vec<(usize, usize, f64)>,
}

impl SparseCoeffs {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn retained(&self) -> &[(usize, usize, f64)] {
        &self.retained
    }

    /// The dense block implied by the retained set.
    pub fn to_block(&self) -> CoeffBlock {
        let mut re = vec![0.0; self.m * self.m];
        for &(i, j, v) in &self.retained {
            re[i * self.m + j] = v;
        }
        CoeffBlock::real(self.m, re).unwrap()
    }
}

/// Keeps the K largest-|value| coefficients, ties broken by scan order.
pub fn topk_retain(q: &CoeffBlock, k: usize) -> Result<SparseCoeffs> {
    if q.is_complex() {
        return Err(Error::InvalidArgument("top-K retention operates on real blocks".into()));
    }
    let m = q.m();
    if k == 0 || k > m * m {
        return Err(Error::InvalidArgument(format!("retention count {k} outside 1..={}", m * m)));
    }
    let mut order: Vec<usize> = (0..m * m).collect();
    order.sort_by(|&a, &b| {
        q.re()[b]
            .abs()
            .partial_cmp(&q.re()[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();
    let retained = keep.into_iter().map(|p| (p / m, p % m, q.re()[p])).collect();
    Ok(SparseCoeffs { m, retained })
}

/// Kernel response from a sparse block: sum of value * w over the retained
/// coefficients, costing exactly |retained| multiplications and
/// |retained| - 1 additions.
pub fn conv_sparse(s: &SparseCoeffs, tc: &CoeffBlock, meter: &mut CostMeter) -> Result<f64> {
    if tc.is_complex() {
        return Err(Error::InvalidArgument("sparse convolution requires a real kernel block".into()));
    }
    if tc.m() != s.m() {
        return Err(Error::DimensionMismatch { expected: s.m(), actual: tc.m() });
    }
    let mut acc = 0.0;
    for &(i, j, v) in s.retained() {
        acc += v * tc.get(i, j);
    }
    meter.mul(s.retained().len() as u64);
    meter.add((s.retained().len() as u64).saturating_sub(1));
    Ok(acc)
}

// --- full-image spectral convolution -------------------------------------

fn fft2(
    data: &mut [Complex<f64>],
    w: usize,
    h: usize,
    planner: &mut FftPlanner<f64>,
    inverse: bool,
) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Circular convolution of an image with a kernel through the frequency
/// domain, keeping only the `retain` largest-magnitude image coefficients.
/// Non-power-of-two images are zero-padded up to the next power of two
/// internally (the circular wrap then happens at the padded boundary) and
/// the output is cropped back. `retain` = 0 yields the zero map; `retain`
/// >= the padded coefficient count keeps everything.
pub fn conv_fft_sparse(img: &GrayImage, kernel: &Kernel, retain: usize) -> Result<ResponseMap> {
    let w = img.width();
    let h = img.height();
    if kernel.m1() > w || kernel.m1() > h {
        return Err(Error::InvalidDimension("kernel larger than image".into()));
    }
    let wp = w.next_power_of_two();
    let hp = h.next_power_of_two();
    let mut planner = FftPlanner::new();

    let mut freq_img = vec![Complex::default(); wp * hp];
    for y in 0..h {
        for x in 0..w {
            freq_img[y * wp + x] = Complex::new(img.get(x, y) as f64, 0.0);
        }
    }
    fft2(&mut freq_img, wp, hp, &mut planner, false);

    if retain < wp * hp {
        let mut order: Vec<usize> = (0..wp * hp).collect();
        order.sort_by(|&a, &b| {
            freq_img[b]
                .norm_sqr()
                .partial_cmp(&freq_img[a].norm_sqr())
                .unwrap()
                .then(a.cmp(&b))
        });
        for &p in &order[retain..] {
            freq_img[p] = Complex::default();
        }
    }

    let mut freq_kern = vec![Complex::default(); wp * hp];
    for i in 0..kernel.m1() {
        for j in 0..kernel.m1() {
            freq_kern[i * wp + j] = Complex::new(kernel.get(i, j), 0.0);
        }
    }
    fft2(&mut freq_kern, wp, hp, &mut planner, false);

    for (a, b) in freq_img.iter_mut().zip(&freq_kern) {
        *a *= b;
    }
    fft2(&mut freq_img, wp, hp, &mut planner, true);

    let scale = 1.0 / (wp * hp) as f64;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(freq_img[y * wp + x].re * scale);
        }
    }
    ResponseMap::new(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{self, encode_block};
    use crate::transform::TransformKind;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dct(m: usize) -> TransformSpec {
        TransformSpec::new(TransformKind::Dct2, m).unwrap()
    }

    fn random_kernel(m1: usize, rng: &mut impl Rng) -> Kernel {
        Kernel::new(m1, (0..m1 * m1).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    fn random_block(m: usize, rng: &mut impl Rng) -> PixelBlock {
        PixelBlock::new(m, (0..m * m).map(|_| rng.gen_range(0.0..255.0)).collect()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    fn textured_image(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let v = 110.0
                + 70.0 * ((x as f64) * 0.13).sin() * ((y as f64) * 0.05).cos()
                + if (x / 11 + y / 7) % 2 == 0 { 35.0 } else { -35.0 };
            v.clamp(0.0, 255.0) as u8
        })
        .unwrap()
    }

    #[test]
    fn direct_conv_basics() {
        let x = PixelBlock::new(3, (1..=9).map(|v| v as f64).collect()).unwrap();
        let ones = Kernel::new(3, vec![1.0; 9]).unwrap();
        assert_eq!(conv_direct(&ones, &x).unwrap(), 45.0);
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        assert_eq!(conv_direct(&delta, &x).unwrap(), 1.0);
    }

    #[test]
    fn direct_conv_matches_reordered_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = random_block(8, &mut rng);
            let c = random_kernel(5, &mut rng);
            let got = conv_direct(&c, &x).unwrap();
            let mut terms: Vec<f64> = Vec::new();
            for i in 0..5 {
                for j in 0..5 {
                    terms.push(c.get(i, j) * x.get(i, j));
                }
            }
            terms.reverse();
            let want: f64 = terms.iter().sum();
            assert!(close(got, want, 1e-12));
        }
    }

    #[test]
    fn null_block_responds_through_dc_only() {
        let spec = dct(8);
        let x = PixelBlock::constant(8, 100.0).unwrap();
        let b = encode_block(&x, spec, 10).unwrap();
        assert!(b.is_null());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_kernel(8, &mut rng);
        let r = transform::basis_responses(&zero_extend(&c, 8), spec).unwrap();
        let mut meter = CostMeter::new();
        let got = conv_pvq_basis(&r, &b, &mut meter).unwrap();
        assert!(close(got, b.dc() as f64 * r.dc(), 1e-12));
        assert_eq!(meter.multiplications, 1);
        assert_eq!(meter.additions, 0);
    }

    #[test]
    fn both_compressed_routes_match_the_pixel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [TransformKind::Dct2, TransformKind::Wht] {
            for &m in &[4usize, 8] {
                let spec = TransformSpec::new(kind, m).unwrap();
                for _ in 0..60 {
                    let x = random_block(m, &mut rng);
                    let m1 = rng.gen_range(1..=m);
                    let c = random_kernel(m1, &mut rng);
                    let b = encode_block(&x, spec, 10).unwrap();
                    let decoded = codec::decode_block(&b, spec).unwrap();

                    let want = conv_direct(&c, &decoded).unwrap();
                    let resp = transform::basis_responses(
                        &zero_extend(&c, m),
                        spec,
                    )
                    .unwrap();
                    let tc = transform::forward(spec, &zero_extend(&c, m)).unwrap();

                    let mut m1m = CostMeter::new();
                    let via_basis = conv_pvq_basis(&resp, &b, &mut m1m).unwrap();
                    let mut m2m = CostMeter::new();
                    let via_transform = conv_pvq_transform(&tc, &b, &mut m2m).unwrap();

                    assert!(close(via_basis, want, 1e-9), "basis {via_basis} vs {want}");
                    assert!(close(via_transform, want, 1e-9));
                    assert!(close(via_basis, via_transform, 1e-9));
                    assert_eq!(m1m, m2m);
                }
            }
        }
    }

    fn zero_extend(c: &Kernel, m: usize) -> PixelBlock {
        let mut values = vec![0.0; m * m];
        for i in 0..c.m1() {
            for j in 0..c.m1() {
                values[i * m + j] = c.get(i, j);
            }
        }
        PixelBlock::new(m, values).unwrap()
    }

    #[test]
    fn cost_profile_for_p63_10_blocks() {
        // 8x8 kernel against a P(63,10) block: 9 additions and 2
        // multiplications for the AC sum, plus 1 addition and 1
        // multiplication for the DC term.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = dct(8);
        let x = random_block(8, &mut rng);
        let b = encode_block(&x, spec, 10).unwrap();
        assert!(!b.is_null());
        let c = random_kernel(8, &mut rng);
        let resp = transform::basis_responses(&zero_extend(&c, 8), spec).unwrap();
        let mut meter = CostMeter::new();
        conv_pvq_basis(&resp, &b, &mut meter).unwrap();
        assert_eq!(meter.additions, 9 + 1);
        assert_eq!(meter.multiplications, 2 + 1);
        assert_eq!(meter.table_lookups, 1);
    }

    #[test]
    fn shifted_kernels_tile_the_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = dct(8);
        for _ in 0..100 {
            let m1 = rng.gen_range(1..=16);
            let max_shift = (2 * 8usize).saturating_sub(m1).min(7);
            let x = rng.gen_range(0..=max_shift);
            let y = rng.gen_range(0..=max_shift);
            let c = random_kernel(m1, &mut rng);
            let set = make_shifted_kernels(&c, (x, y), spec).unwrap();

            // Rebuild the 16x16 placement from the four sub-kernels and
            // check supports are disjoint and reassemble C.
            let mut seen = vec![0u8; 256];
            let mut rebuilt = vec![0.0; 256];
            for q in 0..4 {
                let (oy, ox) = (q / 2 * 8, q % 2 * 8);
                for i in 0..8 {
                    for j in 0..8 {
                        let v = set.spatial()[q].get(i, j);
                        if v != 0.0 {
                            let p = (oy + i) * 16 + ox + j;
                            seen[p] += 1;
                            rebuilt[p] = v;
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&s| s <= 1), "sub-kernel supports overlap");
            for ki in 0..m1 {
                for kj in 0..m1 {
                    let p = (y + ki) * 16 + x + kj;
                    let want = c.get(ki, kj);
                    if want != 0.0 {
                        assert_eq!(rebuilt[p], want);
                    }
                }
            }
        }
    }

    #[test]
    fn shift_zero_small_kernel_uses_only_b0() {
        let spec = dct(8);
        let c = Kernel::new(3, (1..=9).map(|v| v as f64).collect()).unwrap();
        let set = make_shifted_kernels(&c, (0, 0), spec).unwrap();
        assert!(!set.is_zero(0));
        assert!(set.is_zero(1) && set.is_zero(2) && set.is_zero(3));
        assert_eq!(set.spatial()[0].get(2, 2), 9.0);
    }

    #[test]
    fn corner_shift_splits_across_all_four() {
        let spec = dct(8);
        let c = Kernel::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let set = make_shifted_kernels(&c, (7, 7), spec).unwrap();
        for q in 0..4 {
            assert!(!set.is_zero(q));
            let nonzero: Vec<f64> = set.spatial()[q]
                .values()
                .iter()
                .cloned()
                .filter(|&v| v != 0.0)
                .collect();
            assert_eq!(nonzero.len(), 1, "quadrant {q} should hold exactly one tap");
        }
        assert_eq!(set.spatial()[0].get(7, 7), 1.0);
        assert_eq!(set.spatial()[1].get(7, 0), 2.0);
        assert_eq!(set.spatial()[2].get(0, 7), 3.0);
        assert_eq!(set.spatial()[3].get(0, 0), 4.0);
    }

    #[test]
    fn overhanging_kernel_rejected() {
        let spec = dct(8);
        let c = Kernel::new(12, vec![1.0; 144]).unwrap();
        assert!(make_shifted_kernels(&c, (5, 0), spec).is_err());
        assert!(make_shifted_kernels(&c, (4, 4), spec).is_ok());
    }

    /// Stitches the decoded pixels of a 2x2 block neighborhood.
    fn stitch(blocks: [&EncodedBlock; 4], spec: TransformSpec) -> Vec<f64> {
        let m = spec.m();
        let mut out = vec![0.0; 4 * m * m];
        for q in 0..4 {
            let dec = codec::decode_block(blocks[q], spec).unwrap();
            let (oy, ox) = (q / 2 * m, q % 2 * m);
            for i in 0..m {
                for j in 0..m {
                    out[(oy + i) * 2 * m + ox + j] = dec.get(i, j);
                }
            }
        }
        out
    }

    #[test]
    fn overlap_matches_stitched_pixel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = dct(8);
        for _ in 0..40 {
            let blocks: Vec<EncodedBlock> = (0..4)
                .map(|_| encode_block(&random_block(8, &mut rng), spec, 10).unwrap())
                .collect();
            let refs = [&blocks[0], &blocks[1], &blocks[2], &blocks[3]];
            let stitched = stitch(refs, spec);
            let m1 = rng.gen_range(1..=8);
            let c = random_kernel(m1, &mut rng);
            for _ in 0..4 {
                let x = rng.gen_range(0..8);
                let y = rng.gen_range(0..8);
                let set = make_shifted_kernels(&c, (x, y), spec).unwrap();
                let mut meter = CostMeter::new();
                let got = conv_overlap(&set, refs, &mut meter).unwrap();
                let mut want = 0.0;
                for ki in 0..m1 {
                    for kj in 0..m1 {
                        want += c.get(ki, kj) * stitched[(y + ki) * 16 + x + kj];
                    }
                }
                assert!(close(got, want, 1e-8), "shift ({x},{y}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn overlap_of_four_nulls_is_dc_combination() {
        let spec = dct(8);
        let dcs = [50.0, 100.0, 150.0, 200.0];
        let blocks: Vec<EncodedBlock> = dcs
            .iter()
            .map(|&v| encode_block(&PixelBlock::constant(8, v).unwrap(), spec, 10).unwrap())
            .collect();
        let c = Kernel::new(8, vec![1.0; 64]).unwrap();
        let set = make_shifted_kernels(&c, (4, 4), spec).unwrap();
        let refs = [&blocks[0], &blocks[1], &blocks[2], &blocks[3]];
        let mut meter = CostMeter::new();
        let got = conv_overlap(&set, refs, &mut meter).unwrap();
        // Each quadrant contributes (number of covered pixels) * block value.
        let want = 16.0 * (50.0 + 100.0 + 150.0 + 200.0);
        assert!(close(got, want, 1e-6));
    }

    /// Decoded image as reals (no 8-bit rounding), for sliding oracles.
    fn decoded_reals(enc: &EncodedImage, spec: TransformSpec) -> (Vec<f64>, usize, usize) {
        let m = spec.m();
        let (w, h) = (enc.width() as usize, enc.height() as usize);
        let mut out = vec![0.0; w * h];
        for by in 0..enc.blocks_h() {
            for bx in 0..enc.blocks_w() {
                let dec = codec::decode_block(enc.block(bx, by), spec).unwrap();
                for i in 0..m {
                    for j in 0..m {
                        out[(by * m + i) * w + bx * m + j] = dec.get(i, j);
                    }
                }
            }
        }
        (out, w, h)
    }

    #[test]
    fn sliding_convolution_matches_pixel_oracle() {
        let spec = dct(8);
        let img = textured_image(48, 40);
        let enc = codec::encode_image(&img, spec, 10, 0, 0).unwrap();
        let (pixels, w, _h) = decoded_reals(&enc, spec);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m1, stride) in &[(3usize, 1usize), (5, 2), (8, 3), (11, 4)] {
            let c = random_kernel(m1, &mut rng);
            let mut meter = CostMeter::new();
            let map = conv_image(&c, &enc, spec, stride, &mut meter).unwrap();
            for oy in 0..map.height() {
                for ox in 0..map.width() {
                    let (px, py) = (ox * stride, oy * stride);
                    let mut want = 0.0;
                    for ki in 0..m1 {
                        for kj in 0..m1 {
                            want += c.get(ki, kj) * pixels[(py + ki) * w + px + kj];
                        }
                    }
                    assert!(
                        close(map.get(ox, oy), want, 1e-7),
                        "kernel {m1} stride {stride} at ({ox},{oy})"
                    );
                }
            }
        }
    }

    #[test]
    fn processor_caches_one_set_per_shift_class() {
        let spec = dct(8);
        let img = textured_image(32, 32);
        let enc = codec::encode_image(&img, spec, 5, 0, 0).unwrap();

        // Block-aligned stride and kernel: single shift class.
        let c8 = Kernel::new(8, vec![0.5; 64]).unwrap();
        let proc = ConvolutionProcessor::new(c8, spec).unwrap();
        let mut meter = CostMeter::new();
        proc.convolve(&enc, 8, &mut meter).unwrap();
        assert_eq!(proc.shift_classes_cached(), 1);

        // Stride 2 over x and y: shifts {0,2,4,6}^2 = 16 classes.
        let c3 = Kernel::new(3, vec![1.0; 9]).unwrap();
        let proc = ConvolutionProcessor::new(c3, spec).unwrap();
        proc.convolve(&enc, 2, &mut meter).unwrap();
        assert_eq!(proc.shift_classes_cached(), 16);
    }

    #[test]
    fn identity_kernel_at_block_stride_reads_block_means() {
        let spec = dct(8);
        // Each 8x8 block constant: all blocks null, DC = 8 * value.
        let img = GrayImage::from_fn(32, 24, |x, y| (40 + 20 * (x / 8) + 10 * (y / 8)) as u8)
            .unwrap();
        let enc = codec::encode_image(&img, spec, 10, 0, 0).unwrap();
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        let mut meter = CostMeter::new();
        let map = conv_image(&delta, &enc, spec, 8, &mut meter).unwrap();
        for by in 0..enc.blocks_h() {
            for bx in 0..enc.blocks_w() {
                let want = img.get(bx * 8, by * 8) as f64;
                assert!(close(map.get(bx, by), want, 1e-5));
            }
        }
    }

    #[test]
    fn response_map_round_trip_and_pgm() {
        let map = ResponseMap::new(3, 2, vec![0.0, 1.5, -2.0, 8.0, 4.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_response_map(&map, &mut buf).unwrap();
        let back = read_response_map(buf.as_slice()).unwrap();
        assert_eq!(back.width(), 3);
        for (a, b) in back.values().iter().zip(map.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        // min -2, max 8: v maps to round((v + 2) / 10 * 255).
        let pgm = map.to_pgm_normalized();
        assert_eq!(pgm.get(2, 0), 0);
        assert_eq!(pgm.get(0, 1), 255);
        assert_eq!(pgm.get(1, 0), ((1.5_f64 + 2.0) / 10.0 * 255.0).round() as u8);
        assert_eq!(pgm.get(2, 1), ((1.0_f64 + 2.0) / 10.0 * 255.0).round() as u8);
    }

    #[test]
    fn topk_keeps_largest_with_scan_ties() {
        let q = CoeffBlock::real(2, vec![3.0, -5.0, 5.0, 1.0]).unwrap();
        let s = topk_retain(&q, 2).unwrap();
        // |-5| ties |5|; scan order prefers position (0,1).
        assert_eq!(s.retained(), &[(0, 1, -5.0), (1, 0, 5.0)]);
        let all = topk_retain(&q, 4).unwrap();
        assert_eq!(all.retained().len(), 4);
        assert!(topk_retain(&q, 0).is_err());
        assert!(topk_retain(&q, 5).is_err());
    }

    #[test]
    fn topk_is_the_optimal_subset_for_reconstruction() {
        // Exhaustive over all 3-subsets of a 4x4 block: no subset beats the
        // top-3 by energy (orthonormal transforms make coefficient energy
        // equal reconstruction energy).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = dct(4);
        let q = transform::forward(spec, &random_block(4, &mut rng)).unwrap();
        let s = topk_retain(&q, 3).unwrap();
        let kept_energy: f64 = s.retained().iter().map(|&(_, _, v)| v * v).sum();
        let positions: Vec<usize> = (0..16).collect();
        for a in 0..16 {
            for b in a + 1..16 {
                for c in b + 1..16 {
                    let e: f64 = [a, b, c]
                        .iter()
                        .map(|&p| q.re()[positions[p]].powi(2))
                        .sum();
                    assert!(e <= kept_energy + 1e-12);
                }
            }
        }
    }

    #[test]
    fn sparse_conv_matches_zeroed_block_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = dct(8);
        for _ in 0..30 {
            let x = random_block(8, &mut rng);
            let q = transform::forward(spec, &x).unwrap();
            let s = topk_retain(&q, 16).unwrap();
            let c = random_kernel(8, &mut rng);
            let tc = transform::forward(spec, &zero_extend(&c, 8)).unwrap();

            let mut meter = CostMeter::new();
            let got = conv_sparse(&s, &tc, &mut meter).unwrap();
            assert_eq!(meter.multiplications, 16);
            assert_eq!(meter.additions, 15);

            // Oracle: dense coefficient dot on the explicitly zeroed block.
            let z = s.to_block();
            let want: f64 = z.re().iter().zip(tc.re()).map(|(a, b)| a * b).sum();
            assert!(close(got, want, 1e-9));
        }
    }

    #[test]
    fn sparse_conv_with_full_retention_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let spec = dct(8);
        let x = random_block(8, &mut rng);
        let q = transform::forward(spec, &x).unwrap();
        let s = topk_retain(&q, 64).unwrap();
        let c = random_kernel(8, &mut rng);
        let tc = transform::forward(spec, &zero_extend(&c, 8)).unwrap();
        let mut meter = CostMeter::new();
        let got = conv_sparse(&s, &tc, &mut meter).unwrap();
        let want = conv_direct(&c, &x).unwrap();
        assert!(close(got, want, 1e-9));
    }

    #[test]
    fn single_retained_coefficient_costs_one_multiplication() {
        let q = CoeffBlock::real(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let s = topk_retain(&q, 1).unwrap();
        let tc = CoeffBlock::real(2, vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut meter = CostMeter::new();
        assert_eq!(conv_sparse(&s, &tc, &mut meter).unwrap(), 2.0);
        assert_eq!(meter.multiplications, 1);
        assert_eq!(meter.additions, 0);
    }

    /// Direct circular convolution on the zero-padded power-of-two canvas.
    fn circular_oracle(img: &GrayImage, kernel: &Kernel) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let wp = w.next_power_of_two();
        let hp = h.next_power_of_two();
        let mut padded = vec![0.0; wp * hp];
        for y in 0..h {
            for x in 0..w {
                padded[y * wp + x] = img.get(x, y) as f64;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ki in 0..kernel.m1() {
                    for kj in 0..kernel.m1() {
                        let sy = (y + hp - ki) % hp;
                        let sx = (x + wp - kj) % wp;
                        acc += kernel.get(ki, kj) * padded[sy * wp + sx];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    #[test]
    fn fft_full_retention_matches_circular_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = textured_image(32, 32);
        for m1 in [1usize, 3, 7] {
            let c = random_kernel(m1, &mut rng);
            let got = conv_fft_sparse(&img, &c, 32 * 32).unwrap();
            let want = circular_oracle(&img, &c);
            for (g, w) in got.values().iter().zip(&want) {
                assert!((g - w).abs() <= 1e-6 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn fft_delta_kernel_full_retention_is_identity() {
        let img = textured_image(16, 16);
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        let got = conv_fft_sparse(&img, &delta, 256).unwrap();
        for (g, &p) in got.values().iter().zip(img.pixels()) {
            assert!((g - p as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn fft_handles_non_power_of_two_by_padding() {
        let img = textured_image(20, 12);
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        let got = conv_fft_sparse(&img, &delta, 32 * 16).unwrap();
        assert_eq!(got.width(), 20);
        assert_eq!(got.height(), 12);
        for (g, &p) in got.values().iter().zip(img.pixels()) {
            assert!((g - p as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn fft_retention_zero_gives_zero_map() {
        let img = textured_image(8, 8);
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        let got = conv_fft_sparse(&img, &delta, 0).unwrap();
        assert!(got.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heavier_retention_reconstructs_better() {
        let img = textured_image(64, 64);
        let delta = Kernel::new(1, vec![1.0]).unwrap();
        let total = 64 * 64;
        let mse_at = |fraction: f64| {
            let keep = (total as f64 * fraction) as usize;
            let rec = conv_fft_sparse(&img, &delta, keep).unwrap();
            rec.values()
                .iter()
                .zip(img.pixels())
                .map(|(r, &p)| (r - p as f64).powi(2))
                .sum::<f64>()
                / total as f64
        };
        let coarse = mse_at(0.01);
        let fine = mse_at(0.10);
        assert!(
            fine < coarse,
            "10% retention (mse {fine}) should beat 1% (mse {coarse})"
        );
    }

    #[test]
    fn kernel_parse_round_trip() {
        let text = "3\n1 0 -1\n2 0 -2\n1 0 -1\n";
        let k = Kernel::parse(text).unwrap();
        assert_eq!(k.m1(), 3);
        assert_eq!(k.get(1, 0), 2.0);
        assert!(Kernel::parse("2\n1 2 3").is_err());
        assert!(Kernel::parse("").is_err());
        assert!(Kernel::parse("x").is_err());
    }

    #[test]
    fn conv_weighted_rejects_mismatched_sizes() {
        let spec = dct(4);
        let x = PixelBlock::constant(4, 9.0).unwrap();
        let b = encode_block(&x, spec, 3).unwrap();
        let resp8 = transform::basis_responses(
            &PixelBlock::constant(8, 1.0).unwrap(),
            dct(8),
        )
        .unwrap();
        let mut meter = CostMeter::new();
        assert!(matches!(
            conv_pvq_basis(&resp8, &b, &mut meter),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
