//! HOG features with PVQ-encoded descriptors and linear-SVM sliding-window
//! detection. Each feature is a 2x2 group of 9-bin cell histograms encoded
//! onto P(36, k) with unit radius, so a window score is a sum of PVQ dot
//! products: for a 7x15 window, 105(k-1) accumulation additions, 105
//! multiplications, and 105 combining additions including the bias.

use crate::bits::{BitReader, BitWriter};
use crate::dot::{pvq_dot, CostMeter};
use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::pyramid::{self, PvqPoint, PvqVector, PyramidIndex};
use std::io::{Read, Write};
use std::path::Path;

pub const HOG_BINS: usize = 9;
pub const FEATURE_DIMS: usize = 4 * HOG_BINS;
const BIN_WIDTH_DEG: f64 = 180.0 / HOG_BINS as f64;

/// Per-cell orientation histograms over a grid of square cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    cells_w: usize,
    cells_h: usize,
    hist: Vec<f64>, // (cells_w * cells_h) x HOG_BINS, row-major cells
}

impl CellGrid {
    pub fn new(cells_w: usize, cells_h: usize, hist: Vec<f64>) -> Result<Self> {
        if cells_w == 0 || cells_h == 0 || hist.len() != cells_w * cells_h * HOG_BINS {
            return Err(Error::InvalidDimension("cell grid shape mismatch".into()));
        }
        if hist.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidArgument("histogram bins must be non-negative".into()));
        }
        Ok(CellGrid { cells_w, cells_h, hist })
    }

    pub fn cells_w(&self) -> usize {
        self.cells_w
    }

    pub fn cells_h(&self) -> usize {
        self.cells_h
    }

    /// The 9 bins of cell (cx, cy).
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let base = (cy * self.cells_w + cx) * HOG_BINS;
        &self.hist[base..base + HOG_BINS]
    }
}

/// Gradient-orientation histograms per cell: centered differences, unsigned
/// orientation in [0, 180) split over 9 bins with linear interpolation
/// between the two nearest bin centers (centers at (b + 0.5) * 20 degrees),
/// votes weighted by gradient magnitude. Image-border pixels take zero
/// gradient; trailing pixels beyond the last full cell are ignored.
pub fn hog_cells(img: &GrayImage, cell_size: usize) -> Result<CellGrid> {
    if cell_size == 0 {
        return Err(Error::InvalidArgument("cell size must be >= 1".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w < cell_size || h < cell_size {
        return Err(Error::InvalidDimension("image smaller than one cell".into()));
    }
    let cells_w = w / cell_size;
    let cells_h = h / cell_size;
    let mut hist = vec![0.0f64; cells_w * cells_h * HOG_BINS];
    for y in 0..cells_h * cell_size {
        for x in 0..cells_w * cell_size {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                continue;
            }
            let gx = img.get(x + 1, y) as f64 - img.get(x - 1, y) as f64;
            let gy = img.get(x, y + 1) as f64 - img.get(x, y - 1) as f64;
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let mag = gx.hypot(gy);
            let mut deg = gy.atan2(gx).to_degrees();
            if deg < 0.0 {
                deg += 180.0;
            }
            if deg >= 180.0 {
                deg -= 180.0;
            }
            let t = deg / BIN_WIDTH_DEG - 0.5;
            let lower = t.floor();
            let frac = t - lower;
            let lo = (lower as i64).rem_euclid(HOG_BINS as i64) as usize;
            let hi = (lo + 1) % HOG_BINS;
            let cell = (y / cell_size) * cells_w + x / cell_size;
            hist[cell * HOG_BINS + lo] += mag * (1.0 - frac);
            hist[cell * HOG_BINS + hi] += mag * frac;
        }
    }
    CellGrid::new(cells_w, cells_h, hist)
}

/// PVQ-encoded features over the cell grid: each feature is the 36-vector of
/// a 2x2 cell group (overlapping, one-cell stride) quantized onto P(36, k)
/// and treated as having unit radius. All-zero groups become null features.
#[derive(Debug, Clone, PartialEq)]
pub struct PvqFeatureGrid {
    feats_w: usize,
    feats_h: usize,
    k: usize,
    points: Vec<PvqPoint>, // row-major
}

impl PvqFeatureGrid {
    pub fn new(feats_w: usize, feats_h: usize, k: usize, points: Vec<PvqPoint>) -> Result<Self> {
        if feats_w == 0 || feats_h == 0 || points.len() != feats_w * feats_h {
            return Err(Error::InvalidDimension("feature grid shape mismatch".into()));
        }
        for p in &points {
            if p.n() != FEATURE_DIMS || (p.k() != k && !p.is_zero()) {
                return Err(Error::InvalidArgument(
                    "features must lie on P(36, k) or be null".into(),
                ));
            }
        }
        Ok(PvqFeatureGrid { feats_w, feats_h, k, points })
    }

    pub fn feats_w(&self) -> usize {
        self.feats_w
    }

    pub fn feats_h(&self) -> usize {
        self.feats_h
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Feature at row i, column j.
    pub fn feature(&self, i: usize, j: usize) -> &PvqPoint {
        &self.points[i * self.feats_w + j]
    }
}

pub fn pvq_features(cells: &CellGrid, k: usize) -> Result<PvqFeatureGrid> {
    if cells.cells_w() < 2 || cells.cells_h() < 2 {
        return Err(Error::InvalidDimension("feature extraction needs a 2x2 cell group".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("pyramid parameter k must be >= 1".into()));
    }
    let feats_w = cells.cells_w() - 1;
    let feats_h = cells.cells_h() - 1;
    let mut points = Vec::with_capacity(feats_w * feats_h);
    let mut raw = [0.0f64; FEATURE_DIMS];
    for fy in 0..feats_h {
        for fx in 0..feats_w {
            for (g, &(dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                raw[g * HOG_BINS..(g + 1) * HOG_BINS]
                    .copy_from_slice(cells.cell(fx + dx, fy + dy));
            }
            points.push(pyramid::encode(&raw, k)?);
        }
    }
    PvqFeatureGrid::new(feats_w, feats_h, k, points)
}

/// A trained linear classifier over a window_h x window_w grid of features,
/// `dims` weights per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    weights: Vec<f64>,
    bias: f64,
    window_w: usize,
    window_h: usize,
    dims: usize,
}

impl LinearSvm {
    pub fn new(
        weights: Vec<f64>,
        bias: f64,
        window_w: usize,
        window_h: usize,
        dims: usize,
    ) -> Result<Self> {
        if window_w == 0 || window_h == 0 || dims == 0 {
            return Err(Error::InvalidDimension("window dimensions must be positive".into()));
        }
        if weights.len() != window_w * window_h * dims {
            return Err(Error::DimensionMismatch {
                expected: window_w * window_h * dims,
                actual: weights.len(),
            });
        }
        if !bias.is_finite() || weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(LinearSvm { weights, bias, window_w, window_h, dims })
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn window_w(&self) -> usize {
        self.window_w
    }

    pub fn window_h(&self) -> usize {
        self.window_h
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The weight sub-vector for window position (row wi, column wj).
    pub fn sub_weights(&self, wi: usize, wj: usize) -> &[f64] {
        let base = (wi * self.window_w + wj) * self.dims;
        &self.weights[base..base + self.dims]
    }
}

/// Window score at top-left feature (row i, column j): bias plus the sum of
/// per-feature compressed dot products w . fhat / ||fhat||. Null features
/// contribute nothing at no cost; each non-null feature costs k-1
/// accumulation additions, one norm lookup, one multiplication, and one
/// combining addition.
pub fn svm_window_score(
    feats: &PvqFeatureGrid,
    at: (usize, usize),
    model: &LinearSvm,
    meter: &mut CostMeter,
) -> Result<f64> {
    let (i, j) = at;
    if i + model.window_h() > feats.feats_h() || j + model.window_w() > feats.feats_w() {
        return Err(Error::InvalidArgument(format!(
            "window at ({i}, {j}) exceeds the {}x{} feature grid",
            feats.feats_h(),
            feats.feats_w()
        )));
    }
    let mut acc = model.bias();
    for wi in 0..model.window_h() {
        for wj in 0..model.window_w() {
            let p = feats.feature(i + wi, j + wj);
            if p.is_zero() {
                continue;
            }
            let v = PvqVector::new(1.0, p.clone())?;
            let d = pvq_dot(model.sub_weights(wi, wj), &v, meter)?;
            acc += d;
            meter.add(1);
        }
    }
    Ok(acc)
}

/// Strict-threshold decision: positive class iff the score exceeds zero.
pub fn decide(score: f64) -> bool {
    score > 0.0
}

/// Evaluates every window position (stepping by `step` features) and returns
/// the positive detections (i, j, score) sorted by descending score, ties by
/// position.
pub fn slide_detect(
    feats: &PvqFeatureGrid,
    model: &LinearSvm,
    step: usize,
    meter: &mut CostMeter,
) -> Result<Vec<(usize, usize, f64)>> {
    if step == 0 {
        return Err(Error::InvalidArgument("step must be >= 1".into()));
    }
    if feats.feats_h() < model.window_h() || feats.feats_w() < model.window_w() {
        return Err(Error::InvalidDimension("feature grid smaller than the window".into()));
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i + model.window_h() <= feats.feats_h() {
        let mut j = 0;
        while j + model.window_w() <= feats.feats_w() {
            let score = svm_window_score(feats, (i, j), model, meter)?;
            if decide(score) {
                out.push((i, j, score));
            }
            j += step;
        }
        i += step;
    }
    out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
    Ok(out)
}

// --- file formats ---------------------------------------------------------

/// Text model file: header line "window_w window_h dims bias", then the
/// weights whitespace-separated in window row-major, feature-component order.
pub fn write_model(model: &LinearSvm, mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "{} {} {} {}",
        model.window_w(),
        model.window_h(),
        model.dims(),
        model.bias()
    )?;
    for chunk in model.weights().chunks(model.dims()) {
        let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_model(mut r: impl Read) -> Result<LinearSvm> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<String> {
        tokens
            .next()
            .map(str::to_owned)
            .ok_or_else(|| Error::Format(format!("model file missing {what}")))
    };
    let window_w: usize = next("window width")?
        .parse()
        .map_err(|_| Error::Format("bad window width".into()))?;
    let window_h: usize = next("window height")?
        .parse()
        .map_err(|_| Error::Format("bad window height".into()))?;
    let dims: usize = next("feature dims")?
        .parse()
        .map_err(|_| Error::Format("bad feature dims".into()))?;
    let bias: f64 = next("bias")?.parse().map_err(|_| Error::Format("bad bias".into()))?;
    let weights: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad weight {t:?}"))))
        .collect::<Result<_>>()?;
    LinearSvm::new(weights, bias, window_w, window_h, dims)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearSvm> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_model(model: &LinearSvm, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, &mut out)?;
    Ok(())
}

const FEATURES_MAGIC: &[u8; 4] = b"PVQF";

/// Binary feature-grid file: magic "PVQF" | feats_w u32 | feats_h u32 |
/// k u16 | reserved u16 | per feature: 1 presence bit, then the pyramid
/// index at bits_required(36, k) bits when present; zero-padded.
pub fn write_features(feats: &PvqFeatureGrid, mut w: impl Write) -> Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    w.write_all(&(feats.feats_w() as u32).to_be_bytes())?;
    w.write_all(&(feats.feats_h() as u32).to_be_bytes())?;
    w.write_all(&(feats.k() as u16).to_be_bytes())?;
    w.write_all(&0u16.to_be_bytes())?;
    let idx_bits = pyramid::bits_required(FEATURE_DIMS, feats.k())?;
    let mut bw = BitWriter::new();
    for i in 0..feats.feats_h() {
        for j in 0..feats.feats_w() {
            let p = feats.feature(i, j);
            if p.is_zero() {
                bw.write_bits(0, 1)?;
            } else {
                bw.write_bits(1, 1)?;
                bw.write_bits(pyramid::point_to_index(p)?.value(), idx_bits)?;
            }
        }
    }
    w.write_all(&bw.finish())?;
    Ok(())
}

pub fn read_features(mut r: impl Read) -> Result<PvqFeatureGrid> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::Format("feature file truncated".into()))?;
    if &header[0..4] != FEATURES_MAGIC {
        return Err(Error::Format("bad feature-file magic".into()));
    }
    let feats_w = u32::from_be_bytes(header[4..8].try_into().unwrap()) as usize;
    let feats_h = u32::from_be_bytes(header[8..12].try_into().unwrap()) as usize;
    let k = u16::from_be_bytes(header[12..14].try_into().unwrap()) as usize;
    if feats_w == 0 || feats_h == 0 || k == 0 {
        return Err(Error::Format("bad feature-file header".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let idx_bits = pyramid::bits_required(FEATURE_DIMS, k)?;
    let mut br = BitReader::new(&payload);
    let mut points = Vec::with_capacity(feats_w * feats_h);
    for _ in 0..feats_w * feats_h {
        if br.read_bits(1)? == 1 {
            let value = br.read_bits(idx_bits)?;
            let idx = PyramidIndex::new(FEATURE_DIMS, k, value)
                .map_err(|e| Error::Format(format!("invalid feature index: {e}")))?;
            points.push(pyramid::index_to_point(&idx)?);
        } else {
            points.push(PvqPoint::zero(FEATURE_DIMS)?);
        }
    }
    PvqFeatureGrid::new(feats_w, feats_h, k, points)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<PvqFeatureGrid> {
    read_features(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_features(feats: &PvqFeatureGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_features(feats, &mut out)?;
    Ok(())
}
