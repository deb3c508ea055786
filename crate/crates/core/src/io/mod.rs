//! On-disk formats: dense arrays, edge lists, NIST regression problems.

mod dense;
mod graph;
mod nist;

pub use dense::{read_optd, write_optd, DenseArray, Values};
pub use graph::{read_optg, write_optg};
pub use nist::{parse_nist, read_nist, Difficulty, NistProblem};

use std::path::Path;

use crate::error::{Error, Result};

/// Little-endian cursor over a byte buffer; running out is a truncation.
struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        Reader { path, buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::TruncatedFile { path: self.path.to_path_buf() });
        };
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.array::<4>()?;
        if &m != magic {
            return Err(Error::format(self.path, format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), std::str::from_utf8(magic).unwrap())));
        }
        let v = self.u32()?;
        if v != 1 {
            return Err(Error::format(self.path, format!("unsupported version {v}")));
        }
        Ok(())
    }

    /// Payload of exactly `n` bytes must follow; fewer is a truncation, more a format error.
    fn payload(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() > n {
            return Err(Error::format(self.path, format!("{} trailing bytes", self.remaining() - n)));
        }
        self.take(n)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
