//! The CMEM tensor container used for weights and dataset tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CMEM"  u16 version  u32 count
//! count x { u32 name_len, name (UTF-8), u32 rank, rank x u32 dim, u8 dtype, values }
//! ```
//!
//! dtype tags: 0 = f32, 1 = f64, 2 = u8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::nn::ModelParams;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CMEM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorValues {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorValues {
    fn tag(&self) -> u8 {
        match self {
            Self::F32(_) => 0,
            Self::F64(_) => 1,
            Self::U8(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Self::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Self::F64(v) => v.clone(),
            Self::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: TensorValues,
}

impl NamedTensor {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            dims: t.shape().to_vec(),
            values: TensorValues::F64(t.data().to_vec()),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.dims.clone(), self.values.to_f64())
    }
}

pub fn encode(out: &mut impl Write, tensors: &[NamedTensor]) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.values.len());
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for &d in &t.dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&[t.values.tag()])?;
        match &t.values {
            TensorValues::F32(v) => {
                for x in v {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
            TensorValues::F64(v) => {
                for x in v {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
            TensorValues::U8(v) => out.write_all(v)?,
        }
    }
    Ok(())
}

struct Cursor<'a, R> {
    inner: &'a mut R,
    origin: &'a Path,
}

impl<R: Read> Cursor<'_, R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Truncated {
                    path: self.origin.to_path_buf(),
                    detail: format!("while reading {what}"),
                },
                _ => Error::Io {
                    path: self.origin.to_path_buf(),
                    source: e,
                },
            })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Decodes a container; `origin` only labels errors.
pub fn decode(input: &mut impl Read, origin: &Path) -> Result<Vec<NamedTensor>> {
    let mut cur = Cursor {
        inner: input,
        origin,
    };
    let magic = cur.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a CMEM container (magic {magic:?})",
            origin.display()
        )));
    }
    let version = u16::from_le_bytes(cur.bytes(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported CMEM version {version} (expected {VERSION})",
            origin.display()
        )));
    }
    let count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = String::from_utf8(cur.bytes(name_len, "name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = cur.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("dims")? as usize);
        }
        let n: usize = dims.iter().product();
        let tag = cur.bytes(1, "dtype")?[0];
        let values = match tag {
            0 => TensorValues::F32(
                cur.bytes(n * 4, &name)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            1 => TensorValues::F64(
                cur.bytes(n * 8, &name)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            2 => TensorValues::U8(cur.bytes(n, &name)?),
            other => {
                return Err(Error::Format(format!(
                    "tensor `{name}` has unknown dtype tag {other}"
                )))
            }
        };
        tensors.push(NamedTensor { name, dims, values });
    }
    Ok(tensors)
}

pub fn write_file(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).at(path)?);
    encode(&mut out, tensors).at(path)?;
    out.flush().at(path)
}

pub fn read_file(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut input = BufReader::new(File::open(path).at(path)?);
    decode(&mut input, path)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    let tensors: Vec<_> = params
        .iter()
        .map(|(name, t)| NamedTensor::from_tensor(name, t))
        .collect();
    write_file(path, &tensors)
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    read_file(path)?
        .into_iter()
        .map(|t| Ok((t.name.clone(), t.to_tensor()?)))
        .collect()
}
