//! Flat binary tensor record: `"AGT1"`, `u8` rank, `rank` x `u32` extents
//! (little-endian), then every value as a little-endian `f64`.

use std::io::{Read, Write};

use super::{Result, Tensor, TensorError};

pub const TENSOR_MAGIC: &[u8; 4] = b"AGT1";

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| TensorError::Format(format!("rank {} exceeds 255", t.rank())))?;
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[rank])?;
    for &e in t.shape() {
        let e = u32::try_from(e).map_err(|_| TensorError::Format(format!("extent {e} exceeds u32")))?;
        w.write_all(&e.to_le_bytes())?;
    }
    let data = t.data();
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TensorError::Format(format!("truncated {what}")),
        _ => TensorError::Io(e.to_string()),
    })
}

/// Reads one record; the result is a plain (non-trainable) leaf.
pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let mut rank = [0u8; 1];
    read_exact(r, &mut rank, "rank")?;
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut e = [0u8; 4];
        read_exact(r, &mut e, "extents")?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::Format(format!("invalid shape {shape:?}")));
    }
    let n = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
    let n = n.filter(|&n| n <= (1 << 34)).ok_or_else(|| TensorError::Format(format!("implausible shape {shape:?}")))?;
    let mut bytes = vec![0u8; n * 8];
    read_exact(r, &mut bytes, "values")?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Tensor::from_vec(&shape, data)
}
