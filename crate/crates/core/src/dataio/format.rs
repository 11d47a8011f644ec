//! CRNS dataset files.
//!
//! ```text
//! magic        4 bytes  "CRNS" (43 52 4E 53)
//! version      u16      1
//! num_items    u32
//! window       u32      frames per item
//! m, n         u32, u32 modality widths
//! has_labels   u8       0 or 1
//! per item:
//!   label      i32      -1 when absent
//!   x          window*m f32, row-major
//!   y          window*n f32, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::binio::{to_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{SequencePair, WindowedDataset};

pub const CRNS_MAGIC: [u8; 4] = *b"CRNS";
pub const CRNS_VERSION: u16 = 1;

pub fn encode_dataset(ds: &WindowedDataset) -> Result<Vec<u8>> {
    let (m, n) = ds.dims();
    let window = ds.items.first().map_or(ds.window, |i| i.len());
    let has_labels = ds.items.iter().any(|i| i.label.is_some());
    let mut w = Writer::default();
    w.bytes(&CRNS_MAGIC);
    w.u16(CRNS_VERSION);
    w.u32(to_u32(ds.len(), "item count")?);
    w.u32(to_u32(window, "window")?);
    w.u32(to_u32(m, "m")?);
    w.u32(to_u32(n, "n")?);
    w.u8(has_labels as u8);
    for (k, item) in ds.items.iter().enumerate() {
        if item.x.shape() != (window, m) || item.y.shape() != (window, n) {
            return Err(Error::Shape(format!(
                "item {k} does not match dataset dims"
            )));
        }
        let label = match item.label {
            Some(l) => i32::try_from(l).map_err(|_| Error::Argument(format!("label {l}")))?,
            None => -1,
        };
        w.i32(label);
        for v in item.x.as_slice().iter().chain(item.y.as_slice()) {
            w.f32(*v as f32);
        }
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<WindowedDataset> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CRNS_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02X?}, expected CRNS"),
        ));
    }
    let version = r.u16("version")?;
    if version != CRNS_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u32("item count")? as usize;
    let window = r.u32("window")? as usize;
    let m = r.u32("m")? as usize;
    let n = r.u32("n")? as usize;
    let flag_at = r.offset();
    let has_labels = match r.u8("label flag")? {
        0 => false,
        1 => true,
        other => return Err(Error::format(flag_at, format!("label flag {other}"))),
    };
    let item_bytes = m
        .checked_add(n)
        .and_then(|w| w.checked_mul(window))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(4))
        .ok_or_else(|| Error::format(6, "dimensions overflow"))?;
    let expected = item_bytes
        .checked_mul(count)
        .ok_or_else(|| Error::format(6, "dimensions overflow"))?;
    if r.remaining() != expected {
        let msg = format!(
            "{count} items of {window}x({m}+{n}) need {expected} payload bytes, found {}",
            r.remaining()
        );
        return Err(Error::format(
            r.offset() + expected.min(r.remaining()) as u64,
            msg,
        ));
    }
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let label_at = r.offset();
        let raw = r.i32("label")?;
        let label = match (has_labels, raw) {
            (_, -1) => None,
            (true, l) if l >= 0 => Some(l as usize),
            (false, l) => {
                return Err(Error::format(
                    label_at,
                    format!("label {l} in unlabelled file"),
                ))
            }
            (true, l) => return Err(Error::format(label_at, format!("negative label {l}"))),
        };
        let mut read = |rows, cols, what: &str| -> Result<Matrix> {
            let at = r.offset();
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f32(what)? as f64);
            }
            Matrix::from_vec(rows, cols, data)
                .map_err(|_| Error::format(at, format!("non-finite value in {what}")))
        };
        let x = read(window, m, "x frames")?;
        let y = read(window, n, "y frames")?;
        items.push(SequencePair { x, y, label });
    }
    let provenance = (0..count).collect();
    Ok(WindowedDataset {
        items,
        window,
        stride: window.max(1),
        provenance,
    })
}

pub fn write_dataset(ds: &WindowedDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<WindowedDataset> {
    decode_dataset(&std::fs::read(path)?)
}
