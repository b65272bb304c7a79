//! JLCK1 network checkpoints.
//!
//! Layout (little-endian): magic `JLCK1\0`, `u32` tensor count, then for each
//! parameter tensor in layer order `u32` rank, `rank` × `u32` dims and the
//! `f64` values. The model configuration follows (`u32` blocks, channels,
//! kernel height, kernel width, dilation count, dilations, patch width) and
//! finally the four `f64` scaler values: seismic mean/std, property mean/std.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::grid::{read_f64, read_u32};
use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::model::{build_network, ModelConfig, Network};

pub const JLCK_MAGIC: &[u8; 6] = b"JLCK1\0";

/// A trained network with the scalers needed to apply it to raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub scaler_x: Scaler,
    pub scaler_y: Scaler,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value does not fit in u32"))?;
    w.write_all(&v.to_le_bytes())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(JLCK_MAGIC)?;
        let params = self.network.weights();
        put_u32(&mut w, params.len())?;
        for p in params {
            put_u32(&mut w, p.tensor.shape().len())?;
            for &d in p.tensor.shape() {
                put_u32(&mut w, d)?;
            }
            for v in p.tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let c = self.network.config();
        for v in [c.n_blocks, c.channels, c.kernel.0, c.kernel.1, c.dilations.len()] {
            put_u32(&mut w, v)?;
        }
        for &d in &c.dilations {
            put_u32(&mut w, d)?;
        }
        put_u32(&mut w, c.patch_width)?;
        for v in [self.scaler_x.mean, self.scaler_x.std, self.scaler_y.mean, self.scaler_y.std] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::format("JLCK1", e.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != JLCK_MAGIC {
            return Err(Error::format("JLCK1", "bad magic"));
        }
        let n = read_u32(&mut r).map_err(bad)? as usize;
        let mut tensors = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let rank = read_u32(&mut r).map_err(bad)? as usize;
            if rank > 8 {
                return Err(Error::format("JLCK1", format!("implausible tensor rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|v| v as usize))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(bad)?;
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 8];
            r.read_exact(&mut bytes).map_err(bad)?;
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((shape, data));
        }
        let mut u = || read_u32(&mut r).map(|v| v as usize).map_err(bad);
        let (n_blocks, channels, kh, kw, n_dil) = (u()?, u()?, u()?, u()?, u()?);
        if n_dil > 64 {
            return Err(Error::format("JLCK1", "implausible dilation count"));
        }
        let dilations = (0..n_dil).map(|_| u()).collect::<Result<Vec<_>>>()?;
        let patch_width = u()?;
        let cfg = ModelConfig {
            n_blocks,
            channels,
            kernel: (kh, kw),
            dilations,
            patch_width,
        };
        let mut f = || read_f64(&mut r).map_err(bad);
        let (xm, xs, ym, ys) = (f()?, f()?, f()?, f()?);
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(bad)?;
        if !rest.is_empty() {
            return Err(Error::format("JLCK1", format!("{} trailing bytes", rest.len())));
        }

        let mut network = build_network(&cfg, 0).map_err(|e| Error::format("JLCK1", e.to_string()))?;
        if network.weights().len() != tensors.len() {
            return Err(Error::format(
                "JLCK1",
                format!("{} tensors stored, configuration needs {}", tensors.len(), network.weights().len()),
            ));
        }
        for (p, (shape, data)) in network.weights_mut().iter_mut().zip(tensors) {
            if p.tensor.shape() != shape.as_slice() {
                return Err(Error::format(
                    "JLCK1",
                    format!("{} has shape {shape:?}, expected {:?}", p.name, p.tensor.shape()),
                ));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("JLCK1", format!("{} holds non-finite values", p.name)));
            }
            p.tensor.data_mut().copy_from_slice(&data);
        }
        let scaler = |m, s| Scaler::new(m, s).map_err(|e| Error::format("JLCK1", e.to_string()));
        Ok(Self {
            network,
            scaler_x: scaler(xm, xs)?,
            scaler_y: scaler(ym, ys)?,
        })
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
