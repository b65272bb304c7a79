//! Depth × trace grids and the SGRD1 binary container.
//!
//! SGRD1 layout (all little-endian): magic `SGRD1\0`, `u32` depth samples,
//! `u32` trace count, `f64` depth step, then `depth * n_traces` `f64` values,
//! trace-major (all depths of trace 0, then trace 1, ...).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SGRD_MAGIC: &[u8; 6] = b"SGRD1\0";

/// A 2-D section; each column is one trace. Values are stored trace-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionGrid {
    depth: usize,
    n_traces: usize,
    dz: f64,
    values: Vec<f64>,
}

impl SectionGrid {
    pub fn new(depth: usize, n_traces: usize, dz: f64, values: Vec<f64>) -> Result<Self> {
        if depth == 0 || n_traces == 0 {
            return Err(Error::invalid("grid needs at least one depth sample and one trace"));
        }
        if values.len() != depth * n_traces {
            return Err(Error::invalid(format!(
                "grid {depth}x{n_traces} needs {} values, got {}",
                depth * n_traces,
                values.len()
            )));
        }
        if !dz.is_finite() {
            return Err(Error::invalid("depth step must be finite"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value at index {i}")));
        }
        Ok(Self {
            depth,
            n_traces,
            dz,
            values,
        })
    }

    pub fn from_traces(dz: f64, traces: &[Vec<f64>]) -> Result<Self> {
        let depth = traces.first().map_or(0, Vec::len);
        if traces.iter().any(|t| t.len() != depth) {
            return Err(Error::invalid("traces differ in length"));
        }
        Self::new(depth, traces.len(), dz, traces.concat())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn trace(&self, i: usize) -> &[f64] {
        &self.values[i * self.depth..(i + 1) * self.depth]
    }

    pub fn traces(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.depth)
    }

    pub fn get(&self, depth: usize, trace: usize) -> f64 {
        self.values[trace * self.depth + depth]
    }

    pub fn same_dims(&self, other: &SectionGrid) -> bool {
        self.depth == other.depth && self.n_traces == other.n_traces
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SGRD_MAGIC)?;
        w.write_all(&(self.depth as u32).to_le_bytes())?;
        w.write_all(&(self.n_traces as u32).to_le_bytes())?;
        w.write_all(&self.dz.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::format("SGRD1", e.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != SGRD_MAGIC {
            return Err(Error::format("SGRD1", "bad magic"));
        }
        let depth = read_u32(&mut r).map_err(bad)? as usize;
        let n_traces = read_u32(&mut r).map_err(bad)? as usize;
        let dz = read_f64(&mut r).map_err(bad)?;
        let n = depth
            .checked_mul(n_traces)
            .ok_or_else(|| Error::format("SGRD1", "dimensions overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(bad)?;
        if bytes.len() != n * 8 {
            return Err(Error::format(
                "SGRD1",
                format!("expected {} payload bytes, found {}", n * 8, bytes.len()),
            ));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(depth, n_traces, dz, values).map_err(|e| Error::format("SGRD1", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
