//! Binary field files: "NSF1", u32 n, f64 L, u8 components, u8 representation,
//! then component-major, z-fastest little-endian f64 values (re/im interleaved
//! for spectral fields).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BoxField, BoxGrid, Representation};

const MAGIC: &[u8; 4] = b"NSF1";
const HEADER: usize = 4 + 4 + 8 + 1 + 1;

pub fn encode_field(f: &BoxField) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(HEADER + 16 * f.components() * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.push(f.components() as u8);
    match f.representation() {
        Representation::Physical => {
            out.push(0);
            for v in f.physical_values().expect("physical") {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Representation::Spectral => {
            out.push(1);
            for z in f.spectral_values().expect("spectral") {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<BoxField> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing NSF1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let l = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let comps = bytes[16] as usize;
    let repr = bytes[17];
    let grid = BoxGrid::new(n, l)?;
    let body = &bytes[HEADER..];
    let count = comps * grid.len();
    let read = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    match repr {
        0 => {
            if body.len() != 8 * count {
                return Err(Error::Format(format!("expected {} payload bytes, got {}", 8 * count, body.len())));
            }
            BoxField::from_physical(grid, comps, (0..count).map(read).collect())
        }
        1 => {
            if body.len() != 16 * count {
                return Err(Error::Format(format!("expected {} payload bytes, got {}", 16 * count, body.len())));
            }
            BoxField::from_spectral(grid, comps, (0..count).map(|i| Complex64::new(read(2 * i), read(2 * i + 1))).collect())
        }
        r => Err(Error::Format(format!("unknown representation tag {r}"))),
    }
}

pub fn write_field(path: &Path, f: &BoxField) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_field(f))?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<BoxField> {
    decode_field(&fs::read(path)?)
}
