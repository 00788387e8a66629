//! Field snapshots: CSV with a one-line header, or raw little-endian binary.
//!
//! CSV layout:
//! ```text
//! geometry,resolution,time
//! annulus:1:2,16x48,0.25
//! <n1 comma-separated values>     # one line per axis-0 index, n0 lines
//! ```
//! Floats are written in shortest round-trip form, so reading a CSV
//! snapshot back is bit-exact.
//!
//! Binary layout (32-byte header, then `n0 * n1` f64 values):
//! ```text
//! 0..4   magic  b"CKSF"
//! 4      version (1)
//! 5      geometry code: 0 interval, 1 rectangle, 2 annulus
//! 6..8   reserved, zero
//! 8..12  n0  u32
//! 12..16 n1  u32
//! 16..24 time f64
//! 24..28 first geometry dimension  f32 (length, lx, r0)
//! 28..32 second geometry dimension f32 (0, ly, r1)
//! ```

use std::io::{BufRead, Read, Write};

use super::{Geometry, Grid, Resolution, ScalarField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CKSF";
const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub geometry: Geometry,
    pub resolution: Resolution,
    pub time: f64,
    pub field: ScalarField,
}

fn parse_geometry(s: &str) -> Result<Geometry> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<f64> {
        parts
            .get(i)
            .ok_or_else(|| Error::Format(format!("geometry '{s}' is missing a dimension")))?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("geometry '{s}': {e}")))
    };
    match parts[0] {
        "interval" => Ok(Geometry::Interval { length: num(1)? }),
        "rectangle" => Ok(Geometry::Rectangle { lx: num(1)?, ly: num(2)? }),
        "annulus" => Ok(Geometry::Annulus { r0: num(1)?, r1: num(2)? }),
        other => Err(Error::Format(format!("unknown geometry '{other}'"))),
    }
}

fn parse_resolution(s: &str) -> Result<Resolution> {
    let bad = |e: std::num::ParseIntError| Error::Format(format!("resolution '{s}': {e}"));
    match s.split_once('x') {
        Some((a, b)) => Ok(Resolution::plane(a.parse().map_err(bad)?, b.parse().map_err(bad)?)),
        None => Ok(Resolution::line(s.parse().map_err(bad)?)),
    }
}

pub fn write_snapshot_csv<W: Write>(mut w: W, grid: &Grid, time: f64, field: &ScalarField) -> Result<()> {
    grid.check_field(field)?;
    writeln!(w, "geometry,resolution,time")?;
    writeln!(w, "{},{},{}", grid.geometry(), grid.resolution(), time)?;
    let (n0, n1) = grid.shape();
    let v = field.values();
    let mut line = String::new();
    for i in 0..n0 {
        line.clear();
        for j in 0..n1 {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", v[grid.idx(i, j)]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_snapshot_csv<R: BufRead>(r: R) -> Result<Snapshot> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing {what}")))?
            .map_err(Error::from)
    };
    let header = next("header")?;
    if header.trim() != "geometry,resolution,time" {
        return Err(Error::Format(format!("unexpected header '{header}'")));
    }
    let meta = next("metadata line")?;
    let cols: Vec<&str> = meta.trim().split(',').collect();
    if cols.len() != 3 {
        return Err(Error::Format(format!("metadata line '{meta}' needs 3 columns")));
    }
    let geometry = parse_geometry(cols[0])?;
    let resolution = parse_resolution(cols[1])?;
    let time: f64 = cols[2].parse().map_err(|e| Error::Format(format!("time '{}': {e}", cols[2])))?;
    let mut values = Vec::with_capacity(resolution.n0 * resolution.n1);
    for i in 0..resolution.n0 {
        let row = next(&format!("row {i}"))?;
        let before = values.len();
        for tok in row.trim().split(',') {
            values.push(tok.parse::<f64>().map_err(|e| Error::Format(format!("row {i}: '{tok}': {e}")))?);
        }
        if values.len() - before != resolution.n1 {
            return Err(Error::Format(format!("row {i} has {} values, expected {}", values.len() - before, resolution.n1)));
        }
    }
    Ok(Snapshot { geometry, resolution, time, field: ScalarField::new(values) })
}

pub fn write_snapshot_binary<W: Write>(mut w: W, grid: &Grid, time: f64, field: &ScalarField) -> Result<()> {
    grid.check_field(field)?;
    let (n0, n1) = grid.shape();
    let (d0, d1) = grid.geometry().dims();
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4] = VERSION;
    header[5] = grid.geometry().code();
    header[8..12].copy_from_slice(&(n0 as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(n1 as u32).to_le_bytes());
    header[16..24].copy_from_slice(&time.to_le_bytes());
    header[24..28].copy_from_slice(&(d0 as f32).to_le_bytes());
    header[28..32].copy_from_slice(&(d1 as f32).to_le_bytes());
    w.write_all(&header)?;
    for x in field.values() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Geometry dimensions are stored as f32; they are widened back to f64 here.
pub fn read_snapshot_binary<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as f64;
    let (n0, n1) = (u32_at(8), u32_at(12));
    let time = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let (d0, d1) = (f32_at(24), f32_at(28));
    let geometry = match header[5] {
        0 => Geometry::Interval { length: d0 },
        1 => Geometry::Rectangle { lx: d0, ly: d1 },
        2 => Geometry::Annulus { r0: d0, r1: d1 },
        c => return Err(Error::Format(format!("unknown geometry code {c}"))),
    };
    let mut buf = vec![0u8; n0 * n1 * 8];
    r.read_exact(&mut buf)?;
    let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Snapshot { geometry, resolution: Resolution::plane(n0, n1), time, field: ScalarField::new(values) })
}

#[cfg(test)]
mod tests {
    use super::super::make_grid;
    use super::*;

    #[test]
    fn csv_layout_and_exact_readback() {
        let g = make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(4, 6)).unwrap();
        let f = g.field_from_fn(|p| (p.x * 1.7).exp() / 3.0);
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &g, 0.1 + 0.2, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("geometry,resolution,time"));
        assert_eq!(lines.next(), Some("annulus:1:2,4x6,0.30000000000000004"));
        assert_eq!(text.lines().count(), 2 + 4);
        let snap = read_snapshot_csv(buf.as_slice()).unwrap();
        assert_eq!(snap.geometry, g.geometry());
        assert_eq!(snap.resolution, g.resolution());
        assert_eq!(snap.time, 0.1 + 0.2);
        assert_eq!(snap.field, f);
    }

    #[test]
    fn binary_header_is_32_bytes_and_exact() {
        let g = make_grid(Geometry::Rectangle { lx: 2.0, ly: 3.0 }, Resolution::plane(5, 7)).unwrap();
        let f = g.field_from_fn(|p| p.x.sin() * p.y + 1e-300);
        let mut buf = Vec::new();
        write_snapshot_binary(&mut buf, &g, 2.5, &f).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 35 * 8);
        assert_eq!(&buf[0..4], b"CKSF");
        let snap = read_snapshot_binary(buf.as_slice()).unwrap();
        assert_eq!(snap.geometry, g.geometry());
        assert_eq!(snap.time, 2.5);
        assert_eq!(snap.field, f);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_snapshot_binary(&b"NOPE0000000000000000000000000000"[..]).is_err());
        assert!(read_snapshot_csv(&b"x,y,z\n"[..]).is_err());
        assert!(read_snapshot_csv(&b"geometry,resolution,time\ninterval:1,4,0\n1,2\n"[..]).is_err());
    }
}
