//! Keypoint-descriptor database with cosine-similarity search in the
//! compressed domain. Descriptors are normalized, so the PVQ radius is
//! discarded and each entry is just an integer index on P(n, k); scoring an
//! entry against a dense query costs k-1 additions and one multiplication.
//!
//! Named `matching` because `match` is reserved.

use crate::bits::{BitReader, BitWriter};
use crate::dot::{pvq_dot, CostMeter};
use crate::error::{Error, Result};
use crate::pyramid::{self, PvqPoint, PvqVector, PyramidIndex};
use std::io::{Read, Write};
use std::path::Path;

const DB_MAGIC: &[u8; 4] = b"PVQD";
const DB_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDb {
    n: usize,
    k: usize,
    entries: Vec<(u64, PyramidIndex)>,
}

impl DescriptorDb {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || n > u16::MAX as usize {
            return Err(Error::InvalidArgument("descriptor dimension out of range".into()));
        }
        if k == 0 || k > u16::MAX as usize {
            return Err(Error::InvalidArgument("pyramid parameter k out of range".into()));
        }
        Ok(DescriptorDb { n, k, entries: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u64, PyramidIndex)] {
        &self.entries
    }

    /// Encodes a raw descriptor onto P(n, k), discards the radius, and
    /// stores its integer index under `id`.
    pub fn add_descriptor(&mut self, raw: &[f64], id: u64) -> Result<()> {
        self.add_descriptor_transformed(raw, id, |v| v.to_vec())
    }

    /// Same, but applies a caller-supplied pre-encode transform first (the
    /// plain `add_descriptor` uses the identity).
    pub fn add_descriptor_transformed(
        &mut self,
        raw: &[f64],
        id: u64,
        transform: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<()> {
        if raw.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: raw.len() });
        }
        if self.entries.iter().any(|&(eid, _)| eid == id) {
            return Err(Error::InvalidArgument(format!("duplicate descriptor id {id}")));
        }
        let prepared = transform(raw);
        if prepared.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: prepared.len() });
        }
        let point = pyramid::encode(&prepared, self.k)?;
        if point.is_zero() {
            return Err(Error::ZeroVector);
        }
        let index = pyramid::point_to_index(&point)?;
        self.entries.push((id, index));
        Ok(())
    }

    /// Decodes the stored point for `id`, if present.
    pub fn get(&self, id: u64) -> Option<PvqPoint> {
        self.entries
            .iter()
            .find(|&&(eid, _)| eid == id)
            .map(|(_, idx)| pyramid::index_to_point(idx).expect("stored index is valid"))
    }
}

/// cos(angle) between a dense query and a pyramid point: a unit-radius PVQ
/// dot product divided by the query norm (computed once, outside the
/// per-entry cost model).
pub fn cosine_to(query: &[f64], p: &PvqPoint, meter: &mut CostMeter) -> Result<f64> {
    let qnorm = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    if qnorm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let v = PvqVector::new(1.0, p.clone())?;
    let d = pvq_dot(query, &v, meter)?;
    meter.mul(1);
    Ok(d / qnorm)
}

/// Returns the (id, score) maximizing x . yhat / ||yhat||, the cosine with
/// the query-norm factor dropped since it is shared by every entry. The
/// running maximum starts at negative infinity so all-negative databases
/// still return their true argmax; ties go to the lowest id. Each entry
/// costs k-1 additions, one multiplication, and one norm lookup.
pub fn best_match(db: &DescriptorDb, query: &[f64], meter: &mut CostMeter) -> Result<(u64, f64)> {
    if db.is_empty() {
        return Err(Error::InvalidArgument("empty descriptor database".into()));
    }
    if query.len() != db.n() {
        return Err(Error::DimensionMismatch { expected: db.n(), actual: query.len() });
    }
    if query.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut best: (u64, f64) = (0, f64::NEG_INFINITY);
    for (id, index) in db.entries() {
        let point = pyramid::index_to_point(index)?;
        let v = PvqVector::new(1.0, point)?;
        let score = pvq_dot(query, &v, meter)?;
        if score > best.1 || (score == best.1 && *id < best.0) {
            best = (*id, score);
        }
    }
    Ok(best)
}

/// Euclidean distance between unit vectors with the given cosine:
/// sqrt(2 - 2c). Accepts 1e-12 of slack outside [-1, 1] and clamps.
pub fn distance_from_cosine(c: f64) -> Result<f64> {
    if !c.is_finite() || c.abs() > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("cosine {c} outside [-1, 1]")));
    }
    let c = c.clamp(-1.0, 1.0);
    Ok((2.0 - 2.0 * c).sqrt())
}

/// Binary DB file: magic "PVQD" | n u16 | k u16 | count u64, then a single
/// bitstream of (id: 64 bits, index: bits_required(n, k) bits) per entry,
/// zero-padded to a byte at the end.
pub fn write_db(db: &DescriptorDb, mut w: impl Write) -> Result<()> {
    w.write_all(DB_MAGIC)?;
    w.write_all(&(db.n() as u16).to_be_bytes())?;
    w.write_all(&(db.k() as u16).to_be_bytes())?;
    w.write_all(&(db.len() as u64).to_be_bytes())?;
    let idx_bits = pyramid::bits_required(db.n(), db.k())?;
    let mut bw = BitWriter::new();
    for (id, index) in db.entries() {
        bw.write_bits(*id as u128, 64)?;
        bw.write_bits(index.value(), idx_bits)?;
    }
    w.write_all(&bw.finish())?;
    Ok(())
}

pub fn read_db(mut r: impl Read) -> Result<DescriptorDb> {
    let mut header = [0u8; DB_HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| Error::Format("db file truncated".into()))?;
    if &header[0..4] != DB_MAGIC {
        return Err(Error::Format("bad db magic".into()));
    }
    let n = u16::from_be_bytes(header[4..6].try_into().unwrap()) as usize;
    let k = u16::from_be_bytes(header[6..8].try_into().unwrap()) as usize;
    let count = u64::from_be_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut db = DescriptorDb::new(n, k).map_err(|e| Error::Format(format!("bad db header: {e}")))?;
    let idx_bits = pyramid::bits_required(n, k)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let want_bits = count as u128 * (64 + idx_bits as u128);
    if payload.len() as u128 != want_bits.div_ceil(8) {
        return Err(Error::Format("db payload length mismatch".into()));
    }
    let mut br = BitReader::new(&payload);
    for _ in 0..count {
        let id = br.read_bits(64)? as u64;
        let value = br.read_bits(idx_bits)?;
        let index = PyramidIndex::new(n, k, value)
            .map_err(|e| Error::Format(format!("invalid stored index: {e}")))?;
        if db.entries.iter().any(|&(eid, _)| eid == id) {
            return Err(Error::Format(format!("duplicate id {id} in db file")));
        }
        db.entries.push((id, index));
    }
    Ok(db)
}

pub fn load_db(path: impl AsRef<Path>) -> Result<DescriptorDb> {
    read_db(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_db(db: &DescriptorDb, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_db(db, &mut out)?;
    Ok(())
}
