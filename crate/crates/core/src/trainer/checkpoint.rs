//! CRNM checkpoint files.
//!
//! ```text
//! magic      4 bytes "CRNM" (43 52 4E 4D)
//! version    u16     1
//! precision  u16     32 or 64
//! blocks until end of file:
//!   name_len u16, name (UTF-8), rows u32, cols u32,
//!   rows*cols floats of the given precision, row-major
//! ```
//!
//! Block `meta` (1 × 11) holds `m, n, d, use_self, use_cross, use_corr,
//! use_dw, beta, lambda, recurrence, decode_order`; `opt.step` (1 × 1) holds
//! the optimizer step; every parameter block is stored under its own name and
//! its accumulator under `acc.<name>`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::binio::{to_u32, Reader, Writer};
use crate::decoder::DecodeOrder;
use crate::encoder::Recurrence;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objective::{Model, ModelConfig};
use crate::params::{Dims, ModelParams};

use super::OptimizerState;

pub const CRNM_MAGIC: [u8; 4] = *b"CRNM";
pub const CRNM_VERSION: u16 = 1;
const META_LEN: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    fn flag(self) -> u16 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn meta_row(model: &Model) -> Vec<f64> {
    let Dims { m, n, d } = model.params.dims;
    let c = &model.config;
    vec![
        m as f64,
        n as f64,
        d as f64,
        flag(c.use_self),
        flag(c.use_cross),
        flag(c.use_corr),
        flag(c.use_dw),
        c.beta,
        c.lambda,
        flag(c.recurrence == Recurrence::PerModality),
        flag(c.decode_order == DecodeOrder::Forward),
    ]
}

pub fn encode_checkpoint(
    model: &Model,
    opt: &OptimizerState,
    precision: Precision,
) -> Result<Vec<u8>> {
    if opt.acc.dims != model.params.dims {
        return Err(Error::Shape(
            "optimizer state does not match the model".into(),
        ));
    }
    let mut w = Writer::default();
    w.bytes(&CRNM_MAGIC);
    w.u16(CRNM_VERSION);
    w.u16(precision.flag());
    let mut block = |name: &str, rows: usize, cols: usize, data: &[f64]| -> Result<()> {
        w.u16(
            u16::try_from(name.len()).map_err(|_| Error::Argument(format!("block name {name}")))?,
        );
        w.bytes(name.as_bytes());
        w.u32(to_u32(rows, "rows")?);
        w.u32(to_u32(cols, "cols")?);
        for &v in data {
            match precision {
                Precision::F32 => w.f32(v as f32),
                Precision::F64 => w.f64(v),
            }
        }
        Ok(())
    };
    block("meta", 1, META_LEN, &meta_row(model))?;
    block("opt.step", 1, 1, &[opt.step as f64])?;
    for (name, m) in model.params.blocks() {
        block(&name, m.rows(), m.cols(), m.as_slice())?;
    }
    for (name, m) in opt.acc.blocks() {
        block(&format!("acc.{name}"), m.rows(), m.cols(), m.as_slice())?;
    }
    Ok(w.buf)
}

fn as_flag(v: f64, what: &str) -> Result<bool> {
    match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(Error::format(0, format!("meta field {what} = {v}"))),
    }
}

fn as_count(v: f64, min: f64, what: &str) -> Result<usize> {
    if v >= min && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::format(0, format!("meta field {what} = {v}")))
    }
}

/// Parses a checkpoint. Nothing is returned unless every block is present,
/// correctly shaped and finite.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, OptimizerState)> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CRNM_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02X?}, expected CRNM"),
        ));
    }
    let version = r.u16("version")?;
    if version != CRNM_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let precision = match r.u16("precision")? {
        32 => Precision::F32,
        64 => Precision::F64,
        other => return Err(Error::format(6, format!("precision flag {other}"))),
    };
    let mut blocks: BTreeMap<String, (u64, Matrix)> = BTreeMap::new();
    while r.remaining() > 0 {
        let at = r.offset();
        let len = r.u16("block name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "block name")?)
            .map_err(|_| Error::format(at + 2, "block name is not UTF-8"))?
            .to_string();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(at, format!("block {name} too large")))?;
        let width = if precision == Precision::F32 { 4 } else { 8 };
        if count.saturating_mul(width) > r.remaining() {
            return Err(Error::format(
                r.offset(),
                format!(
                    "truncated block {name}: {count} values, {} bytes left",
                    r.remaining()
                ),
            ));
        }
        let data_at = r.offset();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(match precision {
                Precision::F32 => r.f32(&name)? as f64,
                Precision::F64 => r.f64(&name)?,
            });
        }
        let m = Matrix::from_vec(rows, cols, data)
            .map_err(|_| Error::format(data_at, format!("non-finite value in block {name}")))?;
        if blocks.insert(name.clone(), (at, m)).is_some() {
            return Err(Error::format(at, format!("duplicate block {name}")));
        }
    }

    let mut take = |name: &str| {
        blocks
            .remove(name)
            .ok_or_else(|| Error::format(bytes.len() as u64, format!("missing block {name}")))
    };
    let (meta_at, meta) = take("meta")?;
    if meta.shape() != (1, META_LEN) {
        return Err(Error::format(
            meta_at,
            format!("meta block has shape {:?}", meta.shape()),
        ));
    }
    let mv = meta.as_slice();
    // One modality may be absent (single-modality baseline models).
    let dims = Dims::new(
        as_count(mv[0], 0.0, "m")?,
        as_count(mv[1], 0.0, "n")?,
        as_count(mv[2], 1.0, "d")?,
    );
    if dims.m + dims.n == 0 {
        return Err(Error::format(0, "meta fields m and n are both 0"));
    }
    let config = ModelConfig {
        use_self: as_flag(mv[3], "use_self")?,
        use_cross: as_flag(mv[4], "use_cross")?,
        use_corr: as_flag(mv[5], "use_corr")?,
        use_dw: as_flag(mv[6], "use_dw")?,
        beta: mv[7],
        lambda: mv[8],
        recurrence: if as_flag(mv[9], "recurrence")? {
            Recurrence::PerModality
        } else {
            Recurrence::Fused
        },
        decode_order: if as_flag(mv[10], "decode_order")? {
            DecodeOrder::Forward
        } else {
            DecodeOrder::Reverse
        },
    };
    config
        .validate()
        .map_err(|e| Error::format(meta_at, format!("meta block: {e}")))?;
    let (step_at, step) = take("opt.step")?;
    let s = step.as_slice();
    if s.len() != 1 || s[0] < 0.0 || s[0].fract() != 0.0 {
        return Err(Error::format(step_at, "bad opt.step block"));
    }

    let mut params = ModelParams::zeros(dims);
    let mut acc = ModelParams::zeros(dims);
    for (prefix, target) in [("", &mut params), ("acc.", &mut acc)] {
        for (name, slot) in target.blocks_mut() {
            let full = format!("{prefix}{name}");
            let (at, m) = take(&full)?;
            if m.shape() != slot.shape() {
                return Err(Error::format(
                    at,
                    format!(
                        "block {full} has shape {:?}, expected {:?}",
                        m.shape(),
                        slot.shape()
                    ),
                ));
            }
            *slot = m;
        }
    }
    if let Some((name, (at, _))) = blocks.into_iter().next() {
        return Err(Error::format(at, format!("unknown block {name}")));
    }
    if acc
        .blocks()
        .iter()
        .any(|(_, m)| m.as_slice().iter().any(|&v| v < 0.0))
    {
        return Err(Error::format(0, "negative optimizer accumulator"));
    }
    Ok((
        Model { params, config },
        OptimizerState {
            acc,
            step: s[0] as u64,
        },
    ))
}

pub fn save_checkpoint(
    model: &Model,
    opt: &OptimizerState,
    path: impl AsRef<Path>,
    precision: Precision,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, opt, precision)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, OptimizerState)> {
    decode_checkpoint(&std::fs::read(path)?)
}
