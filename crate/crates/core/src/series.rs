//! Binary snapshot series.
//!
//! Layout, all little-endian: magic `KVNF`, version `u32`, cell count `u64`,
//! spatial dimension `u32`, snapshot count `u32`; then per snapshot a time
//! `f64` followed by the cell values as interleaved `(re, im)` `f64` pairs.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::operators::ComplexField;
use crate::propagators::Snapshot;

pub const MAGIC: [u8; 4] = *b"KVNF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot {index} has {got} values, header says {expected}")]
    LengthMismatch { index: usize, expected: usize, got: usize },
    #[error("too many snapshots for the header ({0})")]
    TooMany(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dim: u32,
    pub frames: Vec<(f64, ComplexField)>,
}

impl Series {
    pub fn cells(&self) -> usize {
        self.frames.first().map_or(0, |(_, f)| f.len())
    }
}

/// Writes `snapshots` for a grid with `cells` cells in dimension `dim`.
pub fn write_series<W: Write>(
    mut out: W,
    cells: usize,
    dim: u32,
    snapshots: &[Snapshot],
) -> Result<(), SeriesError> {
    let count = u32::try_from(snapshots.len()).map_err(|_| SeriesError::TooMany(snapshots.len()))?;
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(cells as u64).to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    for (index, s) in snapshots.iter().enumerate() {
        if s.field.len() != cells {
            return Err(SeriesError::LengthMismatch {
                index,
                expected: cells,
                got: s.field.len(),
            });
        }
        out.write_all(&s.time.to_le_bytes())?;
        for z in &s.field.values {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> io::Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    read_array::<8, _>(r).map(f64::from_le_bytes)
}

pub fn read_series<R: Read>(mut r: R) -> Result<Series, SeriesError> {
    let magic = read_array::<4, _>(&mut r)?;
    if magic != MAGIC {
        return Err(SeriesError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(SeriesError::UnsupportedVersion(version));
    }
    let cells = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let dim = u32::from_le_bytes(read_array(&mut r)?);
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let t = read_f64(&mut r)?;
        let mut values = Vec::with_capacity(cells.min(1 << 24));
        for _ in 0..cells {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            values.push(Complex64::new(re, im));
        }
        frames.push((t, ComplexField::from_values(values)));
    }
    Ok(Series { dim, frames })
}
