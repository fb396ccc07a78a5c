//! Versioned binary checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SALEXNET"
//! version      u32      1
//! dtype        u32      4 = f32 payload, 8 = f64 payload
//! spec_len     u32      byte length of the spec text
//! spec         UTF-8    NetworkSpec::to_text()
//! epoch        u64
//! seed         u64
//! loss         f64
//! count        u64      number of parameter values
//! payload      count × dtype bytes, tensors in declaration order
//! ```
//!
//! Nothing may follow the payload.

use std::io::{Read, Write};
use std::path::Path;

use super::network::{Network, Params};
use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SALEXNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub epoch: u64,
    pub seed: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub network: Network<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(network: Network<T>, meta: TrainingMeta) -> Self {
        Self { network, meta }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.network.spec().to_text();
        let params = self.network.params();
        let mut out = Vec::with_capacity(64 + spec.len() + params.len() * T::DTYPE.size_of());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&T::DTYPE.code().to_le_bytes());
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&self.meta.epoch.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.loss.to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for t in &params.tensors {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic: not a salex checkpoint".into()));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let dtype = r.u32("dtype")?;
        match DType::from_code(dtype) {
            Some(d) if d == T::DTYPE => {}
            Some(d) => {
                return Err(Error::Checkpoint(format!(
                    "payload is {d:?}, requested {:?}",
                    T::DTYPE
                )))
            }
            None => return Err(Error::Checkpoint(format!("unknown dtype code {dtype}"))),
        }
        let spec_len = r.u32("spec length")? as usize;
        let spec_text = std::str::from_utf8(r.take(spec_len, "spec")?)
            .map_err(|_| Error::Checkpoint("spec text is not UTF-8".into()))?;
        let spec = NetworkSpec::from_text(spec_text)
            .map_err(|e| Error::Checkpoint(format!("invalid embedded spec: {e}")))?;
        let meta = TrainingMeta {
            epoch: r.u64("epoch")?,
            seed: r.u64("seed")?,
            loss: f64::from_le_bytes(r.take(8, "loss")?.try_into().expect("8 bytes")),
        };
        let count = r.u64("parameter count")? as usize;
        let shapes = spec.param_shapes()?;
        let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if count != expected {
            return Err(Error::Checkpoint(format!(
                "spec needs {expected} parameters, header declares {count}"
            )));
        }
        let width = T::DTYPE.size_of();
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let n: usize = shape.iter().product();
            let raw = r.take(n * width, "parameters")?;
            let data = raw.chunks_exact(width).map(T::read_le).collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} unexpected trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            network: Network::with_params(spec, Params { tensors })?,
            meta,
        })
    }

    /// Like [`Checkpoint::from_bytes`] but rejects a checkpoint whose network
    /// differs from `expected`.
    pub fn from_bytes_for(bytes: &[u8], expected: &NetworkSpec) -> Result<Self> {
        let ckpt = Self::from_bytes(bytes)?;
        if ckpt.network.spec() != expected {
            return Err(Error::Checkpoint(format!(
                "network spec mismatch: checkpoint has\n{}expected\n{}",
                ckpt.network.spec().to_text(),
                expected.to_text()
            )));
        }
        Ok(ckpt)
    }

    pub fn write_to<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(&self.to_bytes())?;
        sink.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        };
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
