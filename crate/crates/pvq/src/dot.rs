//! Inner products against PVQ-compressed vectors. Because a pyramid point
//! holds k unit pulses, dot(x, yhat) reduces to k-1 signed additions of
//! components of x; the full product-PVQ dot costs one table lookup for
//! 1/||yhat|| and at most two multiplications on top of that.

use crate::error::{Error, Result};
use crate::pyramid::{inv_norm_cached, PvqPoint, PvqVector};

/// Tallies of arithmetic work. Counters only increase; callers pass one meter
/// through a pipeline to measure its total cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub additions: u64,
    pub multiplications: u64,
    pub table_lookups: u64,
}

impl CostMeter {
    pub fn new() -> Self {
        CostMeter::default()
    }

    pub fn add(&mut self, n: u64) {
        self.additions += n;
    }

    pub fn mul(&mut self, n: u64) {
        self.multiplications += n;
    }

    pub fn lookup(&mut self, n: u64) {
        self.table_lookups += n;
    }
}

/// dot(x, yhat) by repeated signed addition: each of the k pulses in yhat
/// contributes one signed copy of a component of x, so the total is formed
/// with exactly k-1 additions and no multiplications. k = 0 gives 0 at no
/// cost; k = 1 selects a component at no cost.
pub fn pulse_dot(x: &[f64], p: &PvqPoint, meter: &mut CostMeter) -> Result<f64> {
    if x.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), actual: x.len() });
    }
    let mut acc = 0.0;
    let mut terms: u64 = 0;
    for (&xi, &ci) in x.iter().zip(p.components()) {
        // |ci| signed copies of xi; adding the first term to the zero
        // accumulator is exact, so it acts as initialization and the real
        // additions number k-1.
        let term = if ci >= 0 { xi } else { -xi };
        for _ in 0..ci.unsigned_abs() {
            acc += term;
            terms += 1;
        }
    }
    meter.add(terms.saturating_sub(1));
    Ok(acc)
}

/// dot(x, v) for a product-PVQ vector v = r * yhat / ||yhat||. Costs the
/// k-1 additions of `pulse_dot`, one table lookup for 1/||yhat||, one
/// multiplication by that factor, and one more multiplication by r unless
/// r == 1. The null vector costs nothing and yields 0.
pub fn pvq_dot(x: &[f64], v: &PvqVector, meter: &mut CostMeter) -> Result<f64> {
    if x.len() != v.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), actual: x.len() });
    }
    if v.radius() == 0.0 {
        return Ok(0.0);
    }
    let raw = pulse_dot(x, v.point(), meter)?;
    let inv_norm = inv_norm_cached(v.point().sum_sq());
    meter.lookup(1);
    let mut out = raw * inv_norm;
    meter.mul(1);
    if v.radius() != 1.0 {
        out *= v.radius();
        meter.mul(1);
    }
    Ok(out)
}

/// Reference n-multiply dot product, metered for comparison: n
/// multiplications and n-1 additions.
pub fn dense_dot(x: &[f64], y: &[f64], meter: &mut CostMeter) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
    }
    if x.is_empty() {
        return Err(Error::InvalidDimension("dot product of empty vectors".into()));
    }
    let out = x.iter().zip(y).map(|(a, b)| a * b).sum();
    meter.mul(x.len() as u64);
    meter.add(x.len() as u64 - 1);
    Ok(out)
}
