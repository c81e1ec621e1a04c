//! The pyramid surface P(N, K): the integer lattice points whose absolute
//! component values sum to exactly K. Provides exact point counting, a greedy
//! nearest-direction encoder, and a bijective mapping between surface points
//! and integers in [0, N_p(N, K)).

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// An integer lattice point on P(n, k), i.e. sum of |components| == k.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PvqPoint {
    components: Vec<i32>,
    k: u32,
}

impl PvqPoint {
    /// Wraps a component vector; k is the L1 norm of the components.
    pub fn new(components: Vec<i32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDimension("point dimension must be >= 1".into()));
        }
        let mut k: u64 = 0;
        for &c in &components {
            k += c.unsigned_abs() as u64;
        }
        let k = u32::try_from(k)
            .map_err(|_| Error::InvalidArgument("pulse count exceeds u32 range".into()))?;
        Ok(PvqPoint { components, k })
    }

    /// The all-zeros point (the sole point of P(n, 0)).
    pub fn zero(n: usize) -> Result<Self> {
        PvqPoint::new(vec![0; n.max(1)]).and_then(|p| {
            if n == 0 {
                Err(Error::InvalidDimension("point dimension must be >= 1".into()))
            } else {
                Ok(p)
            }
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn components(&self) -> &[i32] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.k == 0
    }

    /// Sum of squared components, exact in integer arithmetic.
    pub fn sum_sq(&self) -> u64 {
        self.components
            .iter()
            .map(|&c| (c as i64 * c as i64) as u64)
            .sum()
    }

    /// Euclidean norm; lies in [sqrt(k), k] for k >= 1.
    pub fn l2_norm(&self) -> Result<f64> {
        if self.k == 0 {
            return Err(Error::ZeroVector);
        }
        Ok((self.sum_sq() as f64).sqrt())
    }
}

/// A product-PVQ approximation: a radius together with a quantized direction.
/// The radius is zero exactly when the point is the all-zeros point.
#[derive(Debug, Clone, PartialEq)]
pub struct PvqVector {
    radius: f64,
    point: PvqPoint,
}

impl PvqVector {
    pub fn new(radius: f64, point: PvqPoint) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::NonFiniteInput);
        }
        if (radius == 0.0) != point.is_zero() {
            return Err(Error::InvalidArgument(
                "radius is zero iff the point is the all-zeros point".into(),
            ));
        }
        Ok(PvqVector { radius, point })
    }

    /// The null vector of dimension n.
    pub fn null(n: usize) -> Result<Self> {
        PvqVector::new(0.0, PvqPoint::zero(n)?)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn point(&self) -> &PvqPoint {
        &self.point
    }

    pub fn n(&self) -> usize {
        self.point.n()
    }

    /// radius * point / ||point||, or the zero vector when the radius is zero.
    pub fn reconstruct(&self) -> Vec<f64> {
        if self.radius == 0.0 {
            return vec![0.0; self.point.n()];
        }
        let scale = self.radius / (self.point.sum_sq() as f64).sqrt();
        self.point
            .components
            .iter()
            .map(|&c| c as f64 * scale)
            .collect()
    }
}

/// An integer in [0, N_p(n, k)) naming one point of P(n, k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PyramidIndex {
    n: usize,
    k: usize,
    value: u128,
}

impl PyramidIndex {
    pub fn new(n: usize, k: usize, value: u128) -> Result<Self> {
        let limit = count_points(n, k)?;
        if value >= limit {
            return Err(Error::IndexOutOfRange { value, limit });
        }
        Ok(PyramidIndex { n, k, value })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self) -> u128 {
        self.value
    }
}

/// Table of N_p(i, j) for i <= n, j <= k, built from the additive recurrence
/// N_p(n, k) = N_p(n-1, k) + N_p(n, k-1) + N_p(n-1, k-1).
pub(crate) struct CountTable {
    k: usize,
    counts: Vec<u128>, // (n+1) x (k+1), row-major by dimension
}

impl CountTable {
    pub(crate) fn new(n: usize, k: usize) -> Result<Self> {
        let cols = k + 1;
        let mut counts = vec![0u128; (n + 1) * cols];
        counts[0] = 1; // N_p(0, 0)
        for i in 1..=n {
            counts[i * cols] = 1; // N_p(n, 0)
            for j in 1..=k {
                let a = counts[(i - 1) * cols + j];
                let b = counts[i * cols + j - 1];
                let c = counts[(i - 1) * cols + j - 1];
                let sum = a
                    .checked_add(b)
                    .and_then(|s| s.checked_add(c))
                    .ok_or(Error::CountOverflow { n: i, k: j })?;
                counts[i * cols + j] = sum;
            }
        }
        Ok(CountTable { k, counts })
    }

    pub(crate) fn get(&self, n: usize, k: usize) -> u128 {
        self.counts[n * (self.k + 1) + k]
    }
}

/// Exact number of points on P(n, k). Overflow of 128-bit arithmetic is an
/// error, never a silent wraparound.
pub fn count_points(n: usize, k: usize) -> Result<u128> {
    if n == 0 {
        return Err(Error::InvalidDimension("pyramid dimension must be >= 1".into()));
    }
    Ok(CountTable::new(n, k)?.get(n, k))
}

/// ceil(log2(N_p(n, k))): the packed bit width of a PyramidIndex.
pub fn bits_required(n: usize, k: usize) -> Result<u32> {
    let np = count_points(n, k)?;
    if np <= 1 {
        return Ok(0);
    }
    Ok(128 - (np - 1).leading_zeros())
}

/// Greedy PVQ direction encoder: pre-projects y onto the pyramid by taking
/// floor(k*|y_i|/||y||_1), then adds single pulses, always picking the
/// component whose change maximizes the unnormalized cosine with y (ties go
/// to the lowest index). Flooring deliberately undershoots so the greedy
/// phase always places the last few pulses; rounding instead can land on
/// sum k directly and strand the result at a clearly worse point. The zero
/// vector encodes to the all-zeros point and must be paired with radius 0
/// by the caller.
pub fn encode(y: &[f64], k: usize) -> Result<PvqPoint> {
    if y.is_empty() {
        return Err(Error::InvalidDimension("input dimension must be >= 1".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("pyramid parameter k must be >= 1".into()));
    }
    if k > i32::MAX as usize {
        return Err(Error::InvalidArgument("pyramid parameter k too large".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return PvqPoint::zero(y.len());
    }

    let n = y.len();
    let mut mags = vec![0i64; n];
    let mut sum: i64 = 0;
    for i in 0..n {
        let m = (k as f64 * y[i].abs() / l1).floor() as i64;
        mags[i] = m;
        sum += m;
    }

    // Running dot(y, yhat) and sum of squares, updated one pulse at a time.
    let mut dot: f64 = mags.iter().zip(y).map(|(&m, &v)| m as f64 * v.abs()).sum();
    let mut sum_sq: i64 = mags.iter().map(|&m| m * m).sum();

    while sum < k as i64 {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..n {
            let score =
                (dot + y[i].abs()) / ((sum_sq + 2 * mags[i] + 1) as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        dot += y[best].abs();
        sum_sq += 2 * mags[best] + 1;
        mags[best] += 1;
        sum += 1;
    }
    while sum > k as i64 {
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..n {
            if mags[i] == 0 {
                continue;
            }
            let denom_sq = sum_sq - 2 * mags[i] + 1;
            let score = if denom_sq == 0 {
                f64::NEG_INFINITY
            } else {
                (dot - y[i].abs()) / (denom_sq as f64).sqrt()
            };
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        dot -= y[best].abs();
        sum_sq -= 2 * mags[best] - 1;
        mags[best] -= 1;
        sum -= 1;
    }

    let components = mags
        .iter()
        .zip(y)
        .map(|(&m, &v)| {
            let c = m as i32;
            if v < 0.0 {
                -c
            } else {
                c
            }
        })
        .collect();
    PvqPoint::new(components)
}

/// Candidate component values in canonical enumeration order:
/// 0, +1, -1, +2, -2, ...
fn candidate_order(slot: usize) -> i64 {
    if slot == 0 {
        0
    } else {
        let mag = ((slot + 1) / 2) as i64;
        if slot % 2 == 1 {
            mag
        } else {
            -mag
        }
    }
}

/// Bijection from a surface point to its canonical integer index.
///
/// Components are enumerated left to right; each component value v is drawn
/// in the order 0, +1, -1, +2, -2, ... and skips N_p(dims left, pulses left)
/// points per value passed over.
pub fn point_to_index(p: &PvqPoint) -> Result<PyramidIndex> {
    let n = p.n();
    let k = p.k();
    let table = CountTable::new(n, k)?;
    let mut value: u128 = 0;
    let mut remaining = k;
    for (pos, &c) in p.components().iter().enumerate() {
        let dims_left = n - pos - 1;
        let mag = c.unsigned_abs() as usize;
        // Everything with smaller magnitude precedes c, and +|c| precedes -|c|.
        for m in 0..mag {
            let count = table.get(dims_left, remaining - m);
            value = if m == 0 {
                value + count
            } else {
                value + 2 * count
            };
        }
        if c < 0 {
            value += table.get(dims_left, remaining - mag);
        }
        remaining -= mag;
    }
    debug_assert_eq!(remaining, 0);
    PyramidIndex::new(n, k, value)
}

/// Exact inverse of `point_to_index`.
pub fn index_to_point(idx: &PyramidIndex) -> Result<PvqPoint> {
    let n = idx.n();
    let k = idx.k();
    let table = CountTable::new(n, k)?;
    let limit = table.get(n, k);
    if idx.value() >= limit {
        return Err(Error::IndexOutOfRange { value: idx.value(), limit });
    }
    let mut rest = idx.value();
    let mut remaining = k;
    let mut components = vec![0i32; n];
    for pos in 0..n {
        let dims_left = n - pos - 1;
        let mut slot = 0usize;
        loop {
            let v = candidate_order(slot);
            let mag = v.unsigned_abs() as usize;
            if mag > remaining {
                slot += 1;
                continue;
            }
            let count = table.get(dims_left, remaining - mag);
            if rest < count {
                components[pos] = v as i32;
                remaining -= mag;
                break;
            }
            rest -= count;
            slot += 1;
        }
    }
    debug_assert_eq!(remaining, 0);
    debug_assert_eq!(rest, 0);
    PvqPoint::new(components)
}

const INV_NORM_CACHE_LEN: usize = 4097;

/// 1/sqrt(sum of squares), served from a precomputed table for the small sums
/// that occur in practice (sum_sq <= k^2 with k <= 64) and computed directly
/// beyond it. Thread-safe; built once on first use.
pub(crate) fn inv_norm_cached(sum_sq: u64) -> f64 {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    debug_assert!(sum_sq > 0);
    if (sum_sq as usize) < INV_NORM_CACHE_LEN {
        let table = CACHE.get_or_init(|| {
            let mut t = vec![0.0; INV_NORM_CACHE_LEN];
            for (s, slot) in t.iter_mut().enumerate().skip(1) {
                *slot = 1.0 / (s as f64).sqrt();
            }
            t
        });
        table[sum_sq as usize]
    } else {
        1.0 / (sum_sq as f64).sqrt()
    }
}
