//! Little-endian checkpoint files: magic, u16 version, then every tensor
//! as (u8 rank, u32 dims, f32 values) in [`TENSOR_NAMES`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{NetworkParams, NnError, Tensor, TENSOR_NAMES};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FBNN";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint(params: &NetworkParams<f32>, path: &Path) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for t in params.tensors() {
        w.write_all(&[t.shape.len() as u8])?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => NnError::Truncated,
        _ => NnError::Io(e),
    })?;
    Ok(buf)
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkParams<f32>, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic: [u8; 4] = read_exact(&mut r).map_err(|e| match e {
        NnError::Truncated => NnError::BadMagic,
        e => e,
    })?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(NnError::VersionMismatch(version));
    }
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for name in TENSOR_NAMES {
        let rank = read_exact::<_, 1>(&mut r)?[0] as usize;
        let shape = (0..rank)
            .map(|_| read_exact(&mut r).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        if n > 1 << 24 {
            return Err(NnError::ShapeMismatch(format!("{name} is implausibly large")));
        }
        let data = (0..n)
            .map(|_| read_exact(&mut r).map(f32::from_le_bytes))
            .collect::<Result<Vec<_>, _>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(NnError::ShapeMismatch("trailing bytes after last tensor".into()));
    }
    let tensors: [Tensor<f32>; 10] = tensors.try_into().expect("ten tensors");
    NetworkParams::from_tensors(tensors)
}
