//! Binary frame formats.
//!
//! Trajectory frame: `N: u64, d: u64, t: f64, step: u64`, then `N * d` f64,
//! all little-endian. Density grid: `origin_x, origin_y, h: f64, nx, ny: u64`,
//! then `nx * ny` f64 in row-major order (x fastest).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::measure::DensityGrid;
use crate::particles::ParticleState;

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::FileFormat(format!("payload of {len} values truncated: {e}")))?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    crate::particles::hex(&Sha256::digest(bytes))
}

pub fn write_frame<W: Write>(w: &mut W, state: &ParticleState) -> Result<()> {
    w.write_all(&(state.len() as u64).to_le_bytes())?;
    w.write_all(&(state.dim as u64).to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    w.write_all(&state.step_index.to_le_bytes())?;
    for x in &state.positions {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Next frame, or `None` at a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<ParticleState>> {
    let mut first = [0u8; 8];
    match r.read(&mut first)? {
        0 => return Ok(None),
        8 => {}
        k => r
            .read_exact(&mut first[k..])
            .map_err(|_| Error::FileFormat("truncated frame header".into()))?,
    }
    let n = u64::from_le_bytes(first) as usize;
    let header = (|| -> Result<(usize, f64, u64)> { Ok((read_u64(r)? as usize, read_f64(r)?, read_u64(r)?)) })()
        .map_err(|_| Error::FileFormat("truncated frame header".into()))?;
    let (dim, t, step_index) = header;
    if !(1..=3).contains(&dim) {
        return Err(Error::FileFormat(format!("frame dimension {dim} is not 1, 2 or 3")));
    }
    let len = n
        .checked_mul(dim)
        .filter(|&l| l <= 1 << 32)
        .ok_or_else(|| Error::FileFormat(format!("implausible frame size N = {n}")))?;
    let positions = read_payload(r, len)?;
    Ok(Some(ParticleState { positions, dim, t, step_index }))
}

pub fn read_frames<R: Read>(r: &mut R) -> Result<Vec<ParticleState>> {
    let mut out = Vec::new();
    while let Some(f) = read_frame(r)? {
        out.push(f);
    }
    Ok(out)
}

pub fn write_grid<W: Write>(w: &mut W, g: &DensityGrid) -> Result<()> {
    for v in [g.origin[0], g.origin[1], g.h] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.ny as u64).to_le_bytes())?;
    for v in &g.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: &mut R) -> Result<DensityGrid> {
    let head = (|| -> Result<[f64; 3]> { Ok([read_f64(r)?, read_f64(r)?, read_f64(r)?]) })()
        .map_err(|_| Error::FileFormat("truncated grid header".into()))?;
    let nx = read_u64(r).map_err(|_| Error::FileFormat("truncated grid header".into()))? as usize;
    let ny = read_u64(r).map_err(|_| Error::FileFormat("truncated grid header".into()))? as usize;
    let len = nx
        .checked_mul(ny)
        .filter(|&l| l <= 1 << 32)
        .ok_or_else(|| Error::FileFormat(format!("implausible grid size {nx} x {ny}")))?;
    let values = read_payload(r, len)?;
    DensityGrid::new([head[0], head[1]], head[2], nx, ny, values)
}
