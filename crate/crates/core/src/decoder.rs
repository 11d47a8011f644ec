//! Multimodal decoder. Each modality has its own GRU whose initial hidden
//! state is the representation to decode; it runs on zero inputs and every
//! hidden state is projected linearly to one output frame.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, vec_mat_acc, Matrix};
use crate::params::Dims;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCell {
    pub ur: Matrix,
    pub uz: Matrix,
    pub uh: Matrix,
    pub br: Matrix,
    pub bz: Matrix,
    pub bh: Matrix,
    /// Output projection (d × width) and bias (1 × width).
    pub v: Matrix,
    pub c: Matrix,
}

impl DecoderCell {
    pub(crate) fn as_array(&self) -> [&Matrix; 8] {
        [
            &self.ur, &self.uz, &self.uh, &self.br, &self.bz, &self.bh, &self.v, &self.c,
        ]
    }

    pub(crate) fn as_array_mut(&mut self) -> [&mut Matrix; 8] {
        [
            &mut self.ur,
            &mut self.uz,
            &mut self.uh,
            &mut self.br,
            &mut self.bz,
            &mut self.bh,
            &mut self.v,
            &mut self.c,
        ]
    }

    pub fn output_width(&self) -> usize {
        self.v.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub cells: [DecoderCell; 2],
}

/// Order in which frames are emitted by the unrolled decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeOrder {
    /// First emitted frame reconstructs the last input frame.
    #[default]
    Reverse,
    Forward,
}

impl DecodeOrder {
    /// Frame index reconstructed by emission step `k` of `t_len`.
    pub fn frame(self, k: usize, t_len: usize) -> usize {
        match self {
            DecodeOrder::Reverse => t_len - 1 - k,
            DecodeOrder::Forward => k,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecoderStep {
    pub s_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub hc: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub order: DecodeOrder,
    pub steps: Vec<DecoderStep>,
    /// Reconstruction in input time order (T × width).
    pub output: Matrix,
}

pub(crate) fn decode_unchecked(
    h: &[f64],
    t_len: usize,
    cell: &DecoderCell,
    order: DecodeOrder,
) -> DecoderTrace {
    let d = h.len();
    let w = cell.output_width();
    let mut s = h.to_vec();
    let mut steps = Vec::with_capacity(t_len);
    let mut output = Matrix::zeros(t_len, w);
    for k in 0..t_len {
        let mut r = cell.br.as_slice().to_vec();
        vec_mat_acc(&s, &cell.ur, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = cell.bz.as_slice().to_vec();
        vec_mat_acc(&s, &cell.uz, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rs: Vec<f64> = r.iter().zip(&s).map(|(a, b)| a * b).collect();
        let mut hc = cell.bh.as_slice().to_vec();
        vec_mat_acc(&rs, &cell.uh, &mut hc);
        hc.iter_mut().for_each(|v| *v = v.tanh());
        let next: Vec<f64> = (0..d).map(|j| (1.0 - z[j]) * s[j] + z[j] * hc[j]).collect();

        let row = output.row_mut(order.frame(k, t_len));
        row.copy_from_slice(cell.c.as_slice());
        vec_mat_acc(&next, &cell.v, row);

        steps.push(DecoderStep {
            s_prev: std::mem::replace(&mut s, next.clone()),
            r,
            z,
            hc,
            s: next,
        });
    }
    DecoderTrace {
        order,
        steps,
        output,
    }
}

/// Decodes one modality from representation `h`.
pub fn decode_modality(
    h: &[f64],
    t_len: usize,
    cell: &DecoderCell,
    order: DecodeOrder,
) -> Result<DecoderTrace> {
    if t_len == 0 {
        return Err(Error::Argument("decode length must be at least 1".into()));
    }
    if h.len() != cell.ur.rows() {
        return Err(Error::Shape(format!(
            "representation width {} for decoder width {}",
            h.len(),
            cell.ur.rows()
        )));
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("decoder input representation".into()));
    }
    let trace = decode_unchecked(h, t_len, cell, order);
    trace.output.check_finite("decoder output")?;
    Ok(trace)
}

/// Reconstructs both modalities (`T × m`, `T × n`) from `h`.
pub fn decode_sequence(
    h: &[f64],
    t_len: usize,
    params: &DecoderParams,
    order: DecodeOrder,
) -> Result<(Matrix, Matrix)> {
    let x = decode_modality(h, t_len, &params.cells[0], order)?;
    let y = decode_modality(h, t_len, &params.cells[1], order)?;
    Ok((x.output, y.output))
}

pub(crate) fn check_params(p: &DecoderParams, dims: Dims) -> Result<()> {
    let d = dims.d;
    for (i, cell) in p.cells.iter().enumerate() {
        let w = dims.input_width(i);
        let ok = cell.ur.shape() == (d, d)
            && cell.uz.shape() == (d, d)
            && cell.uh.shape() == (d, d)
            && cell.br.shape() == (1, d)
            && cell.bz.shape() == (1, d)
            && cell.bh.shape() == (1, d)
            && cell.v.shape() == (d, w)
            && cell.c.shape() == (1, w);
        if !ok {
            return Err(Error::Shape(format!(
                "decoder cell {i} inconsistent with {dims:?}"
            )));
        }
    }
    Ok(())
}
