//! Field and mask serialization.
//!
//! * CSV: a header line `nx,ny,ax,bx,ay,by`, a line with those values, then
//!   one line per grid row (`j` ascending) holding `nx` comma separated values.
//! * FBM1: the four bytes `FBM1`, `nx` and `ny` as little-endian `u32`, the box
//!   `ax, bx, ay, by` as little-endian `f64`, then the row-major values as
//!   little-endian `f64`.
//! * PGM: binary `P5` with the top image row at the largest `y`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{FbError, Result};
use crate::grid::{GridSpec, Mask, ScalarField};
use crate::scalar::{lit, to_f64, Scalar};

pub const FBM_MAGIC: &[u8; 4] = b"FBM1";
pub const CSV_HEADER: &str = "nx,ny,ax,bx,ay,by";

fn grid_header<T: Scalar>(grid: &GridSpec<T>) -> (u32, u32, [f64; 4]) {
    let lo = grid.lo();
    let hi = grid.hi();
    (
        grid.nx() as u32,
        grid.ny() as u32,
        [to_f64(lo[0]), to_f64(hi[0]), to_f64(lo[1]), to_f64(hi[1])],
    )
}

fn grid_from_header<T: Scalar>(nx: usize, ny: usize, b: [f64; 4]) -> Result<GridSpec<T>> {
    GridSpec::new([lit(b[0]), lit(b[2])], [lit(b[1]), lit(b[3])], [nx, ny])
}

pub fn encode_fbm<T: Scalar>(field: &ScalarField<T>) -> Vec<u8> {
    let (nx, ny, b) = grid_header(field.grid());
    let mut out = Vec::with_capacity(4 + 8 + 32 + 8 * field.values().len());
    out.extend_from_slice(FBM_MAGIC);
    out.extend_from_slice(&nx.to_le_bytes());
    out.extend_from_slice(&ny.to_le_bytes());
    for v in b {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in field.values() {
        out.extend_from_slice(&to_f64(v).to_le_bytes());
    }
    out
}

pub fn decode_fbm<T: Scalar>(bytes: &[u8]) -> Result<ScalarField<T>> {
    if bytes.len() < 44 || &bytes[0..4] != FBM_MAGIC {
        return Err(FbError::Format("missing FBM1 magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let nx = u32_at(4);
    let ny = u32_at(8);
    let b = [f64_at(12), f64_at(20), f64_at(28), f64_at(36)];
    let expected = 44 + 8 * nx * ny;
    if bytes.len() != expected {
        return Err(FbError::Format(format!(
            "FBM1 payload has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let grid = grid_from_header(nx, ny, b)?;
    let values = (0..nx * ny).map(|k| lit(f64_at(44 + 8 * k))).collect();
    ScalarField::new(grid, values)
}

pub fn write_fbm<T: Scalar>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    fs::write(path, encode_fbm(field))?;
    Ok(())
}

pub fn read_fbm<T: Scalar>(path: &Path) -> Result<ScalarField<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_fbm(&bytes)
}

pub fn encode_csv<T: Scalar>(field: &ScalarField<T>) -> String {
    let (nx, ny, b) = grid_header(field.grid());
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    s.push_str(&format!(
        "{nx},{ny},{:?},{:?},{:?},{:?}\n",
        b[0], b[1], b[2], b[3]
    ));
    for row in field.values().chunks(nx as usize) {
        let line: Vec<String> = row.iter().map(|v| format!("{:?}", to_f64(*v))).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv<T: Scalar, R: BufRead>(reader: R) -> Result<ScalarField<T>> {
    let mut lines = reader.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| FbError::Format(format!("missing {what}")))?
            .map_err(FbError::from)
    };
    let header = next("header")?;
    if header.trim() != CSV_HEADER {
        return Err(FbError::Format(format!("unexpected header {header:?}")));
    }
    let meta = next("grid line")?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 6 {
        return Err(FbError::Format("grid line needs six entries".into()));
    }
    let parse_usize = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| FbError::Format(format!("{s:?}: {e}")))
    };
    let parse_f64 = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| FbError::Format(format!("{s:?}: {e}")))
    };
    let nx = parse_usize(parts[0])?;
    let ny = parse_usize(parts[1])?;
    let b = [
        parse_f64(parts[2])?,
        parse_f64(parts[3])?,
        parse_f64(parts[4])?,
        parse_f64(parts[5])?,
    ];
    let grid = grid_from_header::<T>(nx, ny, b)?;
    let mut values = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        let line = next(&format!("row {row}"))?;
        let before = values.len();
        for tok in line.trim().split(',') {
            values.push(lit(parse_f64(tok)?));
        }
        if values.len() - before != nx {
            return Err(FbError::Format(format!("row {row} has wrong length")));
        }
    }
    ScalarField::new(grid, values)
}

pub fn write_csv<T: Scalar>(path: &Path, field: &ScalarField<T>) -> Result<()> {
    fs::write(path, encode_csv(field))?;
    Ok(())
}

pub fn read_csv<T: Scalar>(path: &Path) -> Result<ScalarField<T>> {
    decode_csv(BufReader::new(fs::File::open(path)?))
}

fn pgm_bytes(nx: usize, ny: usize, pixel: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in (0..ny).rev() {
        for i in 0..nx {
            out.push(pixel(j * nx + i));
        }
    }
    out
}

/// Mask as PGM: 0 on the zero set, 255 on the positivity set.
pub fn encode_mask_pgm<T: Scalar>(mask: &Mask<T>) -> Vec<u8> {
    let g = mask.grid();
    pgm_bytes(g.nx(), g.ny(), |p| if mask.get(p) { 255 } else { 0 })
}

/// Field as PGM, linearly scaled so that `[min(0, min), max]` maps onto `[0, 255]`.
pub fn encode_field_pgm<T: Scalar>(field: &ScalarField<T>) -> Vec<u8> {
    let lo = to_f64(field.min()).min(0.0);
    let hi = to_f64(field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let g = field.grid();
    pgm_bytes(g.nx(), g.ny(), |p| {
        let t = (to_f64(field.values()[p]) - lo) / span;
        (t * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Reads a PGM written by [`encode_mask_pgm`] back into a mask on `grid`.
pub fn decode_mask_pgm<T: Scalar>(bytes: &[u8], grid: &GridSpec<T>) -> Result<Mask<T>> {
    let header = format!("P5\n{} {}\n255\n", grid.nx(), grid.ny());
    if !bytes.starts_with(header.as_bytes()) {
        return Err(FbError::Format("PGM header does not match grid".into()));
    }
    let data = &bytes[header.len()..];
    if data.len() != grid.len() {
        return Err(FbError::Format("PGM payload size mismatch".into()));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut flags = vec![false; grid.len()];
    for (row, j) in (0..ny).rev().enumerate() {
        for i in 0..nx {
            flags[j * nx + i] = data[row * nx + i] > 127;
        }
    }
    Mask::new(grid.clone(), flags)
}
