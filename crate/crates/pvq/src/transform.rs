//! Orthonormal 2D block transforms: DCT-II, Walsh-Hadamard, and the unitary
//! DFT, all separable row/column passes. Orthonormal scaling makes the
//! transform-domain inner product equal the pixel-domain inner product with
//! constant exactly 1, which the compressed-domain convolution relies on.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Dct2,
    Wht,
    Dft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformSpec {
    kind: TransformKind,
    m: usize,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDimension("block side must be >= 2".into()));
        }
        if matches!(kind, TransformKind::Wht | TransformKind::Dft) && !m.is_power_of_two() {
            return Err(Error::InvalidDimension(
                "WHT and DFT require a power-of-two block side".into(),
            ));
        }
        Ok(TransformSpec { kind, m })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// True for transforms whose coefficients are real (DCT-II, WHT).
    pub fn is_real(&self) -> bool {
        !matches!(self.kind, TransformKind::Dft)
    }
}

/// An m x m block of pixel-domain values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBlock {
    m: usize,
    values: Vec<f64>,
}

impl PixelBlock {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != m * m {
            return Err(Error::InvalidDimension(format!(
                "expected {} values for an {m}x{m} block, got {}",
                m * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(PixelBlock { m, values })
    }

    pub fn constant(m: usize, c: f64) -> Result<Self> {
        PixelBlock::new(m, vec![c; m * m])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }
}

/// An m x m block of transform coefficients, row-major. Real transforms
/// carry a single plane; the DFT carries a second, imaginary plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffBlock {
    m: usize,
    re: Vec<f64>,
    im: Option<Vec<f64>>,
}

impl CoeffBlock {
    pub fn real(m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != m * m {
            return Err(Error::InvalidDimension(format!(
                "expected {} coefficients for an {m}x{m} block, got {}",
                m * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(CoeffBlock { m, re: values, im: None })
    }

    pub fn complex(m: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if m == 0 || re.len() != m * m || im.len() != m * m {
            return Err(Error::InvalidDimension(
                "real and imaginary planes must both be m*m".into(),
            ));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(CoeffBlock { m, re, im: Some(im) })
    }

    /// The (i, j) = (0, 0) unit coefficient block, i.e. U_00 scaled by 1.
    pub fn unit(m: usize, i: usize, j: usize) -> Result<Self> {
        if i >= m || j >= m {
            return Err(Error::InvalidDimension("unit coefficient outside block".into()));
        }
        let mut re = vec![0.0; m * m];
        re[i * m + j] = 1.0;
        CoeffBlock::real(m, re)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> Option<&[f64]> {
        self.im.as_deref()
    }

    pub fn is_complex(&self) -> bool {
        self.im.is_some()
    }

    /// Real part of coefficient (i, j).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.re[i * self.m + j]
    }

    /// The DC coefficient q_00.
    pub fn dc(&self) -> f64 {
        self.re[0]
    }

    /// |q_ij|: absolute value for real blocks, complex modulus for DFT blocks.
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        let p = i * self.m + j;
        match &self.im {
            None => self.re[p].abs(),
            Some(im) => self.re[p].hypot(im[p]),
        }
    }

    /// AC coefficients in the fixed scan order: row-major with (0,0) skipped,
    /// so the element at scan position t is q_ij with t = m*i + j - 1.
    pub fn ac_scan(&self) -> &[f64] {
        &self.re[1..]
    }

    /// Rebuilds a real coefficient block from a DC value and scan-ordered ACs.
    pub fn from_dc_and_ac(m: usize, dc: f64, ac: &[f64]) -> Result<Self> {
        if ac.len() != m * m - 1 {
            return Err(Error::InvalidDimension(format!(
                "expected {} AC coefficients, got {}",
                m * m - 1,
                ac.len()
            )));
        }
        let mut re = Vec::with_capacity(m * m);
        re.push(dc);
        re.extend_from_slice(ac);
        CoeffBlock::real(m, re)
    }
}

/// The (i, j) block coordinates of AC scan position t.
pub fn scan_coords(m: usize, t: usize) -> (usize, usize) {
    let p = t + 1;
    (p / m, p % m)
}

// --- 1D passes ---------------------------------------------------------

/// Orthonormal DCT-II: out[i] = s(i) * sum_j in[j] cos(pi (2j+1) i / 2m),
/// s(0) = sqrt(1/m), s(i>0) = sqrt(2/m).
fn dct2_1d(input: &[f64], out: &mut [f64]) {
    let m = input.len();
    let s0 = (1.0 / m as f64).sqrt();
    let s = (2.0 / m as f64).sqrt();
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &v) in input.iter().enumerate() {
            acc += v * (std::f64::consts::PI * (2 * j + 1) as f64 * i as f64
                / (2 * m) as f64)
                .cos();
        }
        *slot = acc * if i == 0 { s0 } else { s };
    }
}

/// Orthonormal DCT-III (inverse of the above).
fn dct3_1d(input: &[f64], out: &mut [f64]) {
    let m = input.len();
    let s0 = (1.0 / m as f64).sqrt();
    let s = (2.0 / m as f64).sqrt();
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = s0 * input[0];
        for (i, &v) in input.iter().enumerate().skip(1) {
            acc += s
                * v
                * (std::f64::consts::PI * (2 * j + 1) as f64 * i as f64 / (2 * m) as f64)
                    .cos();
        }
        *slot = acc;
    }
}

/// In-place orthonormal Walsh-Hadamard butterfly; self-inverse.
fn wht_1d(data: &mut [f64]) {
    let m = data.len();
    let mut h = 1;
    while h < m {
        for start in (0..m).step_by(2 * h) {
            for i in start..start + h {
                let a = data[i];
                let b = data[i + h];
                data[i] = a + b;
                data[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (m as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary 1D DFT (direct evaluation; block sides are small).
/// sign = -1 for forward, +1 for inverse.
fn dft_1d(re_in: &[f64], im_in: &[f64], re_out: &mut [f64], im_out: &mut [f64], sign: f64) {
    let m = re_in.len();
    let scale = 1.0 / (m as f64).sqrt();
    for i in 0..m {
        let mut ar = 0.0;
        let mut ai = 0.0;
        for j in 0..m {
            let ang = sign * 2.0 * std::f64::consts::PI * (i * j) as f64 / m as f64;
            let (sn, cs) = ang.sin_cos();
            ar += re_in[j] * cs - im_in[j] * sn;
            ai += re_in[j] * sn + im_in[j] * cs;
        }
        re_out[i] = ar * scale;
        im_out[i] = ai * scale;
    }
}

/// Applies a real 1D pass separably: rows first, then columns.
fn separable_real(values: &[f64], m: usize, pass: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
    let mut mid = vec![0.0; m * m];
    let mut row_out = vec![0.0; m];
    for i in 0..m {
        pass(&values[i * m..(i + 1) * m], &mut row_out);
        mid[i * m..(i + 1) * m].copy_from_slice(&row_out);
    }
    let mut out = vec![0.0; m * m];
    let mut col_in = vec![0.0; m];
    let mut col_out = vec![0.0; m];
    for j in 0..m {
        for i in 0..m {
            col_in[i] = mid[i * m + j];
        }
        pass(&col_in, &mut col_out);
        for i in 0..m {
            out[i * m + j] = col_out[i];
        }
    }
    out
}

fn separable_wht(values: &[f64], m: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut col = vec![0.0; m];
    for i in 0..m {
        wht_1d(&mut out[i * m..(i + 1) * m]);
    }
    for j in 0..m {
        for i in 0..m {
            col[i] = out[i * m + j];
        }
        wht_1d(&mut col);
        for i in 0..m {
            out[i * m + j] = col[i];
        }
    }
    out
}

fn separable_dft(re: &[f64], im: &[f64], m: usize, sign: f64) -> (Vec<f64>, Vec<f64>) {
    let mut mid_re = vec![0.0; m * m];
    let mut mid_im = vec![0.0; m * m];
    let mut row_re = vec![0.0; m];
    let mut row_im = vec![0.0; m];
    for i in 0..m {
        dft_1d(
            &re[i * m..(i + 1) * m],
            &im[i * m..(i + 1) * m],
            &mut row_re,
            &mut row_im,
            sign,
        );
        mid_re[i * m..(i + 1) * m].copy_from_slice(&row_re);
        mid_im[i * m..(i + 1) * m].copy_from_slice(&row_im);
    }
    let mut out_re = vec![0.0; m * m];
    let mut out_im = vec![0.0; m * m];
    let mut col_re = vec![0.0; m];
    let mut col_im = vec![0.0; m];
    let mut cr = vec![0.0; m];
    let mut ci = vec![0.0; m];
    for j in 0..m {
        for i in 0..m {
            cr[i] = mid_re[i * m + j];
            ci[i] = mid_im[i * m + j];
        }
        dft_1d(&cr, &ci, &mut col_re, &mut col_im, sign);
        for i in 0..m {
            out_re[i * m + j] = col_re[i];
            out_im[i * m + j] = col_im[i];
        }
    }
    (out_re, out_im)
}

// --- public transform API ----------------------------------------------

/// Q = T(X).
pub fn forward(spec: TransformSpec, x: &PixelBlock) -> Result<CoeffBlock> {
    if x.m() != spec.m() {
        return Err(Error::DimensionMismatch { expected: spec.m(), actual: x.m() });
    }
    let m = spec.m();
    match spec.kind() {
        TransformKind::Dct2 => CoeffBlock::real(m, separable_real(x.values(), m, dct2_1d)),
        TransformKind::Wht => CoeffBlock::real(m, separable_wht(x.values(), m)),
        TransformKind::Dft => {
            let zeros = vec![0.0; m * m];
            let (re, im) = separable_dft(x.values(), &zeros, m, -1.0);
            CoeffBlock::complex(m, re, im)
        }
    }
}

/// X = T^-1(Q). The DFT discards the residual imaginary part, which is zero
/// (to rounding) whenever Q came from a real block.
pub fn inverse(spec: TransformSpec, q: &CoeffBlock) -> Result<PixelBlock> {
    if q.m() != spec.m() {
        return Err(Error::DimensionMismatch { expected: spec.m(), actual: q.m() });
    }
    let m = spec.m();
    match spec.kind() {
        TransformKind::Dct2 => {
            if q.is_complex() {
                return Err(Error::InvalidArgument(
                    "DCT coefficients must be real".into(),
                ));
            }
            PixelBlock::new(m, separable_real(q.re(), m, dct3_1d))
        }
        TransformKind::Wht => {
            if q.is_complex() {
                return Err(Error::InvalidArgument(
                    "WHT coefficients must be real".into(),
                ));
            }
            PixelBlock::new(m, separable_wht(q.re(), m))
        }
        TransformKind::Dft => {
            let zeros = vec![0.0; m * m];
            let im = q.im().unwrap_or(&zeros);
            let (re, _) = separable_dft(q.re(), im, m, 1.0);
            PixelBlock::new(m, re)
        }
    }
}

/// Elementwise coefficient weighting with positive weights; weights apply to
/// both planes of a complex block.
pub fn weight_coefficients(q: &CoeffBlock, w: &[f64]) -> Result<CoeffBlock> {
    let m = q.m();
    if w.len() != m * m {
        return Err(Error::DimensionMismatch { expected: m * m, actual: w.len() });
    }
    if w.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    let re = q.re().iter().zip(w).map(|(a, b)| a * b).collect();
    match q.im() {
        None => CoeffBlock::real(m, re),
        Some(im) => {
            let im = im.iter().zip(w).map(|(a, b)| a * b).collect();
            CoeffBlock::complex(m, re, im)
        }
    }
}

/// Per-coefficient responses of a kernel against the spatial basis images:
/// entry (i, j) is the Frobenius inner product of C with T^-1(U_ij).
/// Precomputing these turns block convolution into a weighted coefficient sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisResponses {
    m: usize,
    values: Vec<f64>,
}

impl BasisResponses {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    /// The DC response C * (T^-1(U_00)).
    pub fn dc(&self) -> f64 {
        self.values[0]
    }

    /// AC responses in the fixed scan order.
    pub fn ac_scan(&self) -> &[f64] {
        &self.values[1..]
    }
}

/// Computes each response literally: builds U_ij, inverse-transforms it, and
/// takes the inner product with the kernel. Real transforms only; for
/// orthonormal T these equal T(C) entrywise, but that identity is left to
/// callers (and tests) rather than assumed here.
pub fn basis_responses(c: &PixelBlock, spec: TransformSpec) -> Result<BasisResponses> {
    if c.m() != spec.m() {
        return Err(Error::DimensionMismatch { expected: spec.m(), actual: c.m() });
    }
    if !spec.is_real() {
        return Err(Error::InvalidArgument(
            "basis responses are defined for real transforms".into(),
        ));
    }
    let m = spec.m();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let unit = CoeffBlock::unit(m, i, j)?;
            let basis = inverse(spec, &unit)?;
            values[i * m + j] = basis
                .values()
                .iter()
                .zip(c.values())
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    Ok(BasisResponses { m, values })
}
