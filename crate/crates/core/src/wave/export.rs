use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DnTrace, Wavefield};
use crate::error::{Error, Result};

/// Header line of a binary field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    /// `[time samples, space samples]`.
    pub dims: [usize; 2],
    /// `[dt, dx]`.
    pub spacing: [f64; 2],
    pub medium_hash: String,
    pub layout: String,
}

impl DumpHeader {
    pub fn for_field(field: &Wavefield) -> Self {
        let (r, c) = field.values.dim();
        Self {
            dims: [r, c],
            spacing: [field.grid.dt, field.grid.dx],
            medium_hash: field.medium_hash.clone(),
            layout: "f64-le-row-major".into(),
        }
    }
}

fn rfc4180<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

/// Writes `t,x,p` rows in time-major order.
pub fn write_field_csv<W: Write>(out: W, field: &Wavefield) -> Result<()> {
    let mut w = rfc4180(out);
    w.write_record(["t", "x", "p"])?;
    for ((n, i), v) in field.values.indexed_iter() {
        w.write_record([
            field.grid.t(n).to_string(),
            field.grid.x(i).to_string(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,boundary_index,value` rows, one per time sample and boundary node.
pub fn write_dn_csv<W: Write>(out: W, trace: &DnTrace) -> Result<()> {
    let mut w = rfc4180(out);
    w.write_record(["t", "boundary_index", "value"])?;
    for (t, side, v) in trace.rows() {
        w.write_record([t.to_string(), side.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON header line followed by the samples as little-endian `f64`.
pub fn write_dump<W: Write>(mut out: W, field: &Wavefield) -> Result<()> {
    let header = DumpHeader::for_field(field);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in field.values.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump<R: BufRead>(mut input: R) -> Result<(DumpHeader, Array2<f64>)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())?;
    let [r, c] = header.dims;
    let mut bytes = vec![0u8; r * c * 8];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let values = Array2::from_shape_vec((r, c), data).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((header, values))
}
