//! Parameter containers shared by the encoder, decoder, optimizer and
//! checkpoint code. Every container exposes its matrices as a flat, ordered
//! list of named blocks; gradients and optimizer accumulators reuse the same
//! types, so they are shape-isomorphic by construction.

use crate::decoder::{DecoderCell, DecoderParams};
use crate::encoder::{EncoderParams, ModalityWeights};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Input widths `m`, `n` and hidden width `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, d: usize) -> Self {
        Dims { m, n, d }
    }

    pub fn input_width(&self, modality: usize) -> usize {
        if modality == 0 {
            self.m
        } else {
            self.n
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

pub const ENCODER_INPUT_BLOCKS: [&str; 6] = ["wr", "wz", "wh", "br", "bz", "bh"];
pub const DECODER_BLOCKS: [&str; 8] = ["ur", "uz", "uh", "br", "bz", "bh", "v", "c"];
const MODALITY_TAG: [&str; 2] = ["x", "y"];

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { m, n, d } = dims;
        let input = |w: usize| ModalityWeights {
            wr: Matrix::zeros(w, d),
            wz: Matrix::zeros(w, d),
            wh: Matrix::zeros(w, d),
            br: Matrix::zeros(1, d),
            bz: Matrix::zeros(1, d),
            bh: Matrix::zeros(1, d),
        };
        let cell = |w: usize| DecoderCell {
            ur: Matrix::zeros(d, d),
            uz: Matrix::zeros(d, d),
            uh: Matrix::zeros(d, d),
            br: Matrix::zeros(1, d),
            bz: Matrix::zeros(1, d),
            bh: Matrix::zeros(1, d),
            v: Matrix::zeros(d, w),
            c: Matrix::zeros(1, w),
        };
        ModelParams {
            dims,
            encoder: EncoderParams {
                inputs: [input(m), input(n)],
                ur: Matrix::zeros(d, d),
                uz: Matrix::zeros(d, d),
                uh: Matrix::zeros(d, d),
                a: [Matrix::zeros(m, d), Matrix::zeros(n, d)],
            },
            decoder: DecoderParams {
                cells: [cell(m), cell(n)],
            },
        }
    }

    /// Glorot-uniform weights, zero biases, zero bilinear weighting matrices.
    pub fn init(dims: Dims, rng: &mut Rng) -> Self {
        let mut p = ModelParams::zeros(dims);
        for (name, block) in p.blocks_mut() {
            let is_bias = name.ends_with(".br")
                || name.ends_with(".bz")
                || name.ends_with(".bh")
                || name.ends_with(".c");
            if is_bias || name.starts_with("enc.a_") {
                continue;
            }
            let s = (6.0 / (block.rows() + block.cols()) as f64).sqrt();
            for v in block.as_mut_slice() {
                *v = rng.uniform(-s, s);
            }
        }
        p
    }

    /// Every entry drawn from `uniform(-scale, scale)`, biases and bilinear
    /// matrices included. Used by gradient checks.
    pub fn random(dims: Dims, scale: f64, rng: &mut Rng) -> Self {
        let mut p = ModelParams::zeros(dims);
        for (_, block) in p.blocks_mut() {
            for v in block.as_mut_slice() {
                *v = rng.uniform(-scale, scale);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.dims)
    }

    pub fn blocks(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(34);
        for (i, w) in self.encoder.inputs.iter().enumerate() {
            let tag = MODALITY_TAG[i];
            for (name, m) in ENCODER_INPUT_BLOCKS.iter().zip(w.as_array()) {
                out.push((format!("enc.{name}_{tag}"), m));
            }
        }
        out.push(("enc.ur".into(), &self.encoder.ur));
        out.push(("enc.uz".into(), &self.encoder.uz));
        out.push(("enc.uh".into(), &self.encoder.uh));
        out.push(("enc.a_x".into(), &self.encoder.a[0]));
        out.push(("enc.a_y".into(), &self.encoder.a[1]));
        for (i, cell) in self.decoder.cells.iter().enumerate() {
            let tag = MODALITY_TAG[i];
            for (name, m) in DECODER_BLOCKS.iter().zip(cell.as_array()) {
                out.push((format!("dec_{tag}.{name}"), m));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::with_capacity(34);
        for (i, w) in self.encoder.inputs.iter_mut().enumerate() {
            let tag = MODALITY_TAG[i];
            for (name, m) in ENCODER_INPUT_BLOCKS.iter().zip(w.as_array_mut()) {
                out.push((format!("enc.{name}_{tag}"), m));
            }
        }
        out.push(("enc.ur".into(), &mut self.encoder.ur));
        out.push(("enc.uz".into(), &mut self.encoder.uz));
        out.push(("enc.uh".into(), &mut self.encoder.uh));
        let [ax, ay] = &mut self.encoder.a;
        out.push(("enc.a_x".into(), ax));
        out.push(("enc.a_y".into(), ay));
        for (i, cell) in self.decoder.cells.iter_mut().enumerate() {
            let tag = MODALITY_TAG[i];
            for (name, m) in DECODER_BLOCKS.iter().zip(cell.as_array_mut()) {
                out.push((format!("dec_{tag}.{name}"), m));
            }
        }
        out
    }

    pub fn block_names(&self) -> Vec<String> {
        self.blocks().into_iter().map(|(n, _)| n).collect()
    }

    pub fn num_values(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    /// Fixed-order sum of squares over every block.
    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter())
            .fold(0.0, |s, v| s + v * v)
    }

    pub fn scale(&mut self, s: f64) {
        for (_, b) in self.blocks_mut() {
            b.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += other`, block by block.
    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "adding parameter sets with dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, b) in self.blocks() {
            b.check_finite(&name)?;
        }
        Ok(())
    }

    /// Order-dependent digest of every value. Cheap consistency stamp for
    /// traces; not a cryptographic hash.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, b) in self.blocks() {
            for v in b.as_slice() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn tag(modality: usize) -> &'static str {
        MODALITY_TAG[modality]
    }
}
