//! Little-endian, length-prefixed binary encoding of collaboration messages.
//!
//! ```text
//! u32 record_len                       bytes that follow
//! u32 sender_id | f64 timestamp | u32 roi_count
//! roi_count × (u32 id | f64 x, y, length, width, cos, sin | f64 confidence)
//! n × (u32 h | u32 w | D × f32)        nonzero cells, row-major
//! ```

use super::{BevGrid, CollabMessage, GridSpec, Roi, RoiSet};
use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use std::io::{Read, Write};

const HEADER: usize = 4 + 8 + 4;
const ROI_RECORD: usize = 4 + 7 * 8;

pub fn encode_message(msg: &CollabMessage) -> Vec<u8> {
    let spec = msg.sparse_grid.spec;
    let cells = msg.sparse_grid.nonzero_cells();
    let body = HEADER + msg.roi_set.rois.len() * ROI_RECORD + cells.len() * (8 + 4 * spec.d);
    let mut out = Vec::with_capacity(4 + body);
    out.extend_from_slice(&(body as u32).to_le_bytes());
    out.extend_from_slice(&msg.sender_id.to_le_bytes());
    out.extend_from_slice(&msg.timestamp.to_le_bytes());
    out.extend_from_slice(&(msg.roi_set.rois.len() as u32).to_le_bytes());
    for r in &msg.roi_set.rois {
        let b = &r.bbox;
        out.extend_from_slice(&r.id.to_le_bytes());
        let (c, s) = heading_pair(b.heading);
        for v in [b.x, b.y, b.length, b.width, c, s, b.confidence] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (h, w) in cells {
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&(w as u32).to_le_bytes());
        for v in msg.sparse_grid.cell(h, w) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn next_toward(v: f64, steps: i64) -> f64 {
    if v == 0.0 || steps == 0 {
        return v;
    }
    f64::from_bits((v.to_bits() as i64 + steps * v.signum() as i64) as u64)
}

/// `(cos, sin)` of `heading`, nudged by at most two ulps each so that
/// `atan2(sin, cos)` gives `heading` back exactly.
pub(crate) fn heading_pair(heading: f64) -> (f64, f64) {
    let (s, c) = heading.sin_cos();
    for dc in [0, 1, -1, 2, -2] {
        for ds in [0, 1, -1, 2, -2] {
            let (cc, ss) = (next_toward(c, dc), next_toward(s, ds));
            if ss.atan2(cc) == heading {
                return (cc, ss);
            }
        }
    }
    (c, s)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self.buf.get(self.pos..end).ok_or_else(|| Error::Format("truncated message".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("slice length"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

/// Decodes one record from the front of `bytes`; returns it and the number
/// of bytes consumed.
pub fn decode_message(bytes: &[u8], spec: &GridSpec) -> Result<(CollabMessage, usize)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let body = cur.u32()? as usize;
    let end = 4 + body;
    if bytes.len() < end {
        return Err(Error::Format(format!("record needs {end} bytes, have {}", bytes.len())));
    }
    let mut cur = Cursor { buf: &bytes[..end], pos: 4 };
    let sender_id = cur.u32()?;
    let timestamp = cur.f64()?;
    let roi_count = cur.u32()? as usize;
    let mut rois = Vec::with_capacity(roi_count);
    for _ in 0..roi_count {
        let id = cur.u32()?;
        let mut v = [0.0; 7];
        for x in &mut v {
            *x = cur.f64()?;
        }
        rois.push(Roi {
            id,
            bbox: OrientedBox {
                confidence: v[6],
                x: v[0],
                y: v[1],
                length: v[2],
                width: v[3],
                heading: v[5].atan2(v[4]),
            },
        });
    }
    let cell_bytes = 8 + 4 * spec.d;
    let rest = end - cur.pos;
    if !rest.is_multiple_of(cell_bytes) {
        return Err(Error::Format(format!(
            "cell section of {rest} bytes is not a multiple of {cell_bytes} (D = {})",
            spec.d
        )));
    }
    let mut grid = BevGrid::zeros(*spec);
    for _ in 0..rest / cell_bytes {
        let h = cur.u32()? as usize;
        let w = cur.u32()? as usize;
        if h >= spec.h || w >= spec.w {
            return Err(Error::Format(format!("cell ({h}, {w}) outside the grid")));
        }
        for c in grid.cell_mut(h, w) {
            *c = cur.f32()?;
        }
    }
    let msg = CollabMessage { sender_id, timestamp, roi_set: RoiSet { timestamp, rois }, sparse_grid: grid };
    Ok((msg, end))
}

pub fn write_message_log<W: Write>(mut out: W, msgs: &[CollabMessage]) -> Result<()> {
    for m in msgs {
        out.write_all(&encode_message(m))?;
    }
    Ok(())
}

pub fn read_message_log<R: Read>(mut input: R, spec: &GridSpec) -> Result<Vec<CollabMessage>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let (m, used) = decode_message(&bytes[pos..], spec)?;
        out.push(m);
        pos += used;
    }
    Ok(out)
}
