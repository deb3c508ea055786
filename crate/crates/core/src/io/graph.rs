use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::backend::GraphData;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OPTG";

pub fn write_optg(g: &GraphData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let arity = u16::try_from(g.arity).map_err(|_| Error::format(path, "arity too large"))?;
    let mut out = Vec::with_capacity(18 + 8 * g.edges.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&arity.to_le_bytes());
    out.extend_from_slice(&(g.edge_count() as u64).to_le_bytes());
    for &v in &g.edges {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

/// Vertex indices are checked against their domains only when bound.
pub fn read_optg(path: impl AsRef<Path>) -> Result<GraphData> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.header(MAGIC)?;
    let arity = r.u16()? as usize;
    if arity == 0 {
        return Err(Error::format(path, "arity 0"));
    }
    let count = usize::try_from(r.u64()?).ok();
    let n = count
        .and_then(|c| c.checked_mul(arity))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::format(path, "edge count overflows"))?;
    let payload = r.payload(n * 8)?;
    let edges = payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    GraphData::new(arity, edges)
}
