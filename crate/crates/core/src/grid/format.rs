//! `.sstgrid` reader and writer.
//!
//! Little-endian layout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `SSTG` |
//! | 4     | u32 version (1) |
//! | 12    | u32 T, u32 H, u32 W |
//! | 48    | f64 lat0, lon0, dlat, dlon, t0 (epoch days), dt_days |
//! | 4·T·H·W | f32 values in (t, row, col) order, NaN for land |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GridMeta, GridSeries};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSTG";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 48;

pub fn save_grid_series(series: &GridSeries, path: impl AsRef<Path>) -> Result<()> {
    series.validate()?;
    let (t, h, w) = series.dims();
    let dims: Vec<u32> = [t, h, w]
        .iter()
        .map(|&d| {
            u32::try_from(d).map_err(|_| Error::Invariant(format!("dimension {d} exceeds u32")))
        })
        .collect::<Result<_>>()?;

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for d in dims {
        out.write_all(&d.to_le_bytes())?;
    }
    let m = series.meta();
    for v in [m.lat0, m.lon0, m.dlat, m.dlon, m.t0, m.dt_days] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in series.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_grid_series(path: impl AsRef<Path>) -> Result<GridSeries> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<GridSeries> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, header alone needs {}",
            bytes.len(),
            HEADER_LEN
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected SSTG".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (t, h, w) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let header: Vec<f64> = (0..6).map(|i| f64_at(20 + 8 * i)).collect();
    if header.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite header value".into()));
    }
    let count = t
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload is {} bytes, header declares {}x{}x{} = {} bytes",
            payload.len(),
            t,
            h,
            w,
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let meta = GridMeta {
        lat0: header[0],
        lon0: header[1],
        dlat: header[2],
        dlon: header[3],
        t0: header[4],
        dt_days: header[5],
    };
    GridSeries::new(t, h, w, meta, data).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridSeries {
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        GridSeries::new(2, 2, 2, GridMeta::default(), data).unwrap()
    }

    #[test]
    fn documented_layout_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sstgrid");
        save_grid_series(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 4);
        assert_eq!(&bytes[..4], b"SSTG");
        let s = load_grid_series(&path).unwrap();
        assert_eq!(s.get(1, 1, 1), 8.0);
        assert_eq!(s, sample());
    }

    #[test]
    fn nan_is_preserved_bitwise() {
        let nan = f32::from_bits(0x7fc0_1234);
        let s = GridSeries::new(1, 1, 3, GridMeta::default(), vec![1.0, nan, f32::NAN]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.sstgrid");
        save_grid_series(&s, &path).unwrap();
        let back = load_grid_series(&path).unwrap();
        assert_eq!(back.data()[1].to_bits(), 0x7fc0_1234);
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sstgrid");
        save_grid_series(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        assert!(matches!(load_grid_series(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SSTX");
        bytes.resize(HEADER_LEN, 0);
        assert!(matches!(parse(&bytes), Err(Error::Format(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sstgrid");
        save_grid_series(&sample(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 2;
        assert!(matches!(parse(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.sstgrid");
        save_grid_series(&sample(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20..28].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(parse(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("x.sstgrid");
        assert!(matches!(
            save_grid_series(&sample(), &path),
            Err(Error::Io(_))
        ));
    }
}
