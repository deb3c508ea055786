use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OPTD";

#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::F32(v) => v.len(),
            Values::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Values::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Values::F64(v) => v.clone(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            Values::F32(_) => 0,
            Values::F64(_) => 1,
        }
    }
}

/// A dense, channel-interleaved array.
///
/// `extents` are in axis order, axis 0 varying fastest, which is how the
/// solver lays out its fields. On disk the extents are written outermost
/// first, so the payload reads as row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray {
    pub extents: Vec<usize>,
    pub channels: usize,
    pub values: Values,
}

impl DenseArray {
    pub fn new(extents: Vec<usize>, channels: usize, values: Values) -> Result<Self> {
        let want = extents.iter().product::<usize>() * channels;
        if values.len() != want {
            return Err(Error::ShapeMismatch(format!("{:?}×{channels} needs {want} values, got {}", extents, values.len())));
        }
        Ok(DenseArray { extents, channels, values })
    }

    pub fn from_f64(extents: Vec<usize>, channels: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(extents, channels, Values::F64(values))
    }

    pub fn elements(&self) -> usize {
        self.extents.iter().product()
    }
}

pub fn write_optd(a: &DenseArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + 8 * a.extents.len() + a.values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.push(a.values.dtype());
    let ndims = u8::try_from(a.extents.len()).map_err(|_| Error::format(path, "too many dimensions"))?;
    out.push(ndims);
    let channels = u16::try_from(a.channels).map_err(|_| Error::format(path, "too many channels"))?;
    out.extend_from_slice(&channels.to_le_bytes());
    for &e in a.extents.iter().rev() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    match &a.values {
        Values::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Values::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    write_file(path, &out)
}

pub fn read_optd(path: impl AsRef<Path>) -> Result<DenseArray> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.header(MAGIC)?;
    let dtype = r.u8()?;
    let size = match dtype {
        0 => 4,
        1 => 8,
        d => return Err(Error::format(path, format!("unknown dtype {d}"))),
    };
    let ndims = r.u8()? as usize;
    let channels = r.u16()? as usize;
    let mut extents = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        extents.push(usize::try_from(r.u64()?).map_err(|_| Error::format(path, "extent overflows"))?);
    }
    extents.reverse();
    let count = extents
        .iter()
        .try_fold(channels, |acc, &e| acc.checked_mul(e))
        .filter(|c| c.checked_mul(size).is_some())
        .ok_or_else(|| Error::format(path, "payload size overflows"))?;
    let payload = r.payload(count * size)?;
    let values = if dtype == 0 {
        Values::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    } else {
        Values::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    Ok(DenseArray { extents, channels, values })
}
