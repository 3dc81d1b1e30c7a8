//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "GLFC" | u32 format_version | u32 echo_len | echo bytes (UTF-8)
//!   | u64 seed | u64 step | u32 n_blocks
//!   | per block: u32 name_len | name | u32 ndim | u64 dims... | f64 data...
//!
//! Write-then-read round-trips are bitwise identical.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GLFC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Canonical echo of the model-relevant configuration.
    pub spec_echo: String,
    pub seed: u64,
    pub step: u64,
    pub blocks: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&Tensor> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&self.format_version.to_le_bytes());
        let echo = self.spec_echo.as_bytes();
        buf.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        buf.extend_from_slice(echo);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, tensor) in &self.blocks {
            let nb = name.as_bytes();
            buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
            buf.extend_from_slice(nb);
            buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(&buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cur = Cursor::new(&bytes, path);
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse(format!(
                "{}: not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let format_version = cur.u32()?;
        if format_version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "{}: unsupported checkpoint version {format_version}",
                path.display()
            )));
        }
        let echo_len = cur.u32()? as usize;
        let echo_bytes = cur.take(echo_len)?;
        let spec_echo = String::from_utf8(echo_bytes.to_vec())
            .map_err(|_| Error::Parse(format!("{}: spec echo is not UTF-8", path.display())))?;
        let seed = cur.u64()?;
        let step = cur.u64()?;
        let n_blocks = cur.u32()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| Error::Parse(format!("{}: block name is not UTF-8", path.display())))?;
            let ndim = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(cur.f64()?);
            }
            blocks.push((name, Tensor::new(data, shape)?));
        }
        Ok(Checkpoint {
            format_version,
            spec_echo,
            seed,
            step,
            blocks,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Cursor {
            bytes,
            pos: 0,
            path,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "{}: truncated at byte offset {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
