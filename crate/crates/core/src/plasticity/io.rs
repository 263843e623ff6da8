//! Snapshot persistence.
//!
//! Binary layout: four little-endian u64 (rows, cols, components, chunk width)
//! followed by the columns in chunks of `chunk width`, each chunk written row by
//! row as little-endian f64. CSV layout is long form:
//! `time_index,point,component,value`.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::history::HistorySnapshot;
use crate::error::{Error, Result};
use crate::fem::COMPONENTS;

pub const DEFAULT_CHUNK_WIDTH: usize = 256;

pub fn write_snapshot_binary<W: Write>(snapshot: &HistorySnapshot, chunk_width: usize, w: W) -> Result<()> {
    write_matrix_binary(snapshot.matrix(), COMPONENTS, chunk_width, w)
}

pub fn read_snapshot_binary<R: Read>(r: R) -> Result<HistorySnapshot> {
    let (m, comps) = read_matrix_binary(r)?;
    if comps != COMPONENTS {
        return Err(Error::Parse(format!("snapshot has {comps} components, expected {COMPONENTS}")));
    }
    HistorySnapshot::new(m)
}

/// Writes any matrix in the chunked snapshot layout; `components` is stored
/// in the header and must divide the row count.
pub fn write_matrix_binary<W: Write>(m: &DMatrix<f64>, components: usize, chunk_width: usize, mut w: W) -> Result<()> {
    if components == 0 || m.nrows() % components != 0 {
        return Err(Error::Argument(format!(
            "{} rows are not a multiple of {components} components",
            m.nrows()
        )));
    }
    let chunk = chunk_width.max(1);
    for v in [m.nrows(), m.ncols(), components, chunk] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut start = 0;
    while start < m.ncols() {
        let width = chunk.min(m.ncols() - start);
        for r in 0..m.nrows() {
            for c in start..start + width {
                w.write_all(&m[(r, c)].to_le_bytes())?;
            }
        }
        start += width;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_binary`], returning it with its
/// component count.
pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<(DMatrix<f64>, usize)> {
    let mut header = [0u64; 4];
    let mut buf = [0u8; 8];
    for h in header.iter_mut() {
        r.read_exact(&mut buf).map_err(|e| Error::Parse(format!("snapshot header: {e}")))?;
        *h = u64::from_le_bytes(buf);
    }
    let [rows, cols, comps, chunk] = header.map(|v| v as usize);
    if chunk == 0 || comps == 0 || rows % comps != 0 {
        return Err(Error::Parse(format!("inconsistent snapshot header {header:?}")));
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut start = 0;
    while start < cols {
        let width = chunk.min(cols - start);
        for row in 0..rows {
            for c in start..start + width {
                r.read_exact(&mut buf).map_err(|e| Error::Parse(format!("snapshot body truncated: {e}")))?;
                m[(row, c)] = f64::from_le_bytes(buf);
            }
        }
        start += width;
    }
    Ok((m, comps))
}

pub fn write_snapshot_csv<W: Write>(snapshot: &HistorySnapshot, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_index", "point", "component", "value"])?;
    let m = snapshot.matrix();
    for j in 0..m.ncols() {
        for p in 0..snapshot.points() {
            for c in 0..COMPONENTS {
                out.serialize((j, p, c, m[(3 * p + c, j)]))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot_csv<R: Read>(r: R) -> Result<HistorySnapshot> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut entries = Vec::new();
    let (mut np, mut nt) = (0, 0);
    for rec in rdr.deserialize() {
        let (j, p, c, v): (usize, usize, usize, f64) = rec?;
        if c >= COMPONENTS {
            return Err(Error::Parse(format!("component index {c} out of range")));
        }
        np = np.max(p + 1);
        nt = nt.max(j + 1);
        entries.push((3 * p + c, j, v));
    }
    let mut m = DMatrix::zeros(COMPONENTS * np, nt);
    for (r, c, v) in entries {
        m[(r, c)] = v;
    }
    HistorySnapshot::new(m)
}
