//! Multimodal encoder: per-step dynamic modality weighting, the multimodal
//! GRU that tracks a fused state plus one projection per modality, and the
//! mini-batch correlation between those projections.

mod correlation;

pub(crate) use correlation::correlation_with_grad;
pub use correlation::{batch_correlation, normalized_correlation, unit_correlation_mean, EPS_CORR};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, vec_mat_acc, Matrix};
use crate::params::{Dims, ModelParams};

/// Input-side parameters of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityWeights {
    pub wr: Matrix,
    pub wz: Matrix,
    pub wh: Matrix,
    pub br: Matrix,
    pub bz: Matrix,
    pub bh: Matrix,
}

impl ModalityWeights {
    pub(crate) fn as_array(&self) -> [&Matrix; 6] {
        [&self.wr, &self.wz, &self.wh, &self.br, &self.bz, &self.bh]
    }

    pub(crate) fn as_array_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.wr,
            &mut self.wz,
            &mut self.wh,
            &mut self.br,
            &mut self.bz,
            &mut self.bh,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Per-modality input weights, `[x, y]`.
    pub inputs: [ModalityWeights; 2],
    /// Recurrent matrices shared by the fused and modality paths.
    pub ur: Matrix,
    pub uz: Matrix,
    pub uh: Matrix,
    /// Bilinear coherence matrices `A_x` (m×d) and `A_y` (n×d).
    pub a: [Matrix; 2],
}

impl EncoderParams {
    pub fn hidden(&self) -> usize {
        self.ur.rows()
    }

    pub fn input_width(&self, modality: usize) -> usize {
        self.inputs[modality].wr.rows()
    }
}

/// What the modality paths interpolate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recurrence {
    /// Modality gates, candidates and interpolation use the fused `h_{t-1}`.
    #[default]
    Fused,
    /// Each modality path carries its own previous state `h^i_{t-1}`.
    PerModality,
}

/// How modality inputs are weighted inside the fused gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Dynamic,
    Fixed([f64; 2]),
}

pub const UNWEIGHTED: [f64; 2] = [1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub t: usize,
}

impl EncoderState {
    pub fn zeros(d: usize) -> Self {
        EncoderState {
            h: vec![0.0; d],
            h1: vec![0.0; d],
            h2: vec![0.0; d],
            t: 0,
        }
    }

    pub fn modality(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.h1
        } else {
            &self.h2
        }
    }
}

/// Laplace-smoothed modality weights and the raw bilinear scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicWeights {
    pub w: [f64; 2],
    pub alpha: [f64; 2],
    /// `exp(alpha_i) / (2 + sum_k exp(alpha_k))`, kept for differentiation.
    pub(crate) sens: [f64; 2],
}

/// Scores `alpha_i = x_i · A_i · h_prevᵀ` and weights
/// `w_i = (1 + e^{alpha_i}) / (2 + Σ_k e^{alpha_k})`.
pub fn dynamic_weights(
    x: &[f64],
    y: &[f64],
    h_prev: &[f64],
    a1: &Matrix,
    a2: &Matrix,
) -> Result<DynamicWeights> {
    if a1.shape() != (x.len(), h_prev.len()) || a2.shape() != (y.len(), h_prev.len()) {
        return Err(Error::Shape(format!(
            "dynamic weights: x {}, y {}, h {}, A1 {:?}, A2 {:?}",
            x.len(),
            y.len(),
            h_prev.len(),
            a1.shape(),
            a2.shape()
        )));
    }
    let mut xa = vec![0.0; h_prev.len()];
    let mut ya = vec![0.0; h_prev.len()];
    vec_mat_acc(x, a1, &mut xa);
    vec_mat_acc(y, a2, &mut ya);
    let alpha = [
        crate::numerics::dot(&xa, h_prev),
        crate::numerics::dot(&ya, h_prev),
    ];
    let dw = weights_from_scores(alpha);
    if !dw.w.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("dynamic weights".into()));
    }
    Ok(dw)
}

/// Stabilised evaluation: numerator and denominator are both scaled by
/// `e^{-M}` with `M = max(alpha_1, alpha_2, 0)`, so no exponent is positive.
pub fn weights_from_scores(alpha: [f64; 2]) -> DynamicWeights {
    let m = alpha[0].max(alpha[1]).max(0.0);
    let base = (-m).exp();
    let e = [(alpha[0] - m).exp(), (alpha[1] - m).exp()];
    let num = [base + e[0], base + e[1]];
    let denom = num[0] + num[1];
    DynamicWeights {
        w: [num[0] / denom, num[1] / denom],
        alpha,
        sens: [e[0] / denom, e[1] / denom],
    }
}

/// Everything one encoder step computed.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub weights: [f64; 2],
    pub dynamic: Option<DynamicWeights>,
    /// Affine input terms `W_*^i X^i + b_*^i` for gates r, z and candidate.
    pub a_r: [Vec<f64>; 2],
    pub a_z: [Vec<f64>; 2],
    pub a_h: [Vec<f64>; 2],
    pub r_mod: [Vec<f64>; 2],
    pub z_mod: [Vec<f64>; 2],
    pub hc_mod: [Vec<f64>; 2],
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub hc: Vec<f64>,
    pub h_prev: Vec<f64>,
    /// State each modality path interpolated against.
    pub mod_prev: [Vec<f64>; 2],
    pub state: EncoderState,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub weighting: Weighting,
    pub recurrence: Recurrence,
    pub steps: Vec<StepRecord>,
}

impl EncoderTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &EncoderState {
        &self.steps.last().expect("non-empty trace").state
    }

    /// Fused state after each step, in time order.
    pub fn fused_states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.state.h.as_slice())
    }
}

fn check_state(state: &EncoderState, d: usize) -> Result<()> {
    if state.h.len() != d || state.h1.len() != d || state.h2.len() != d {
        return Err(Error::Shape(format!("encoder state width, expected {d}")));
    }
    if !state
        .h
        .iter()
        .chain(&state.h1)
        .chain(&state.h2)
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("encoder state".into()));
    }
    Ok(())
}

/// One multimodal GRU step with the given modality weights.
pub fn gru_step(
    x: &[f64],
    y: &[f64],
    prev: &EncoderState,
    params: &EncoderParams,
    weights: [f64; 2],
    recurrence: Recurrence,
) -> Result<(EncoderState, StepRecord)> {
    let d = params.hidden();
    if x.len() != params.input_width(0) || y.len() != params.input_width(1) {
        return Err(Error::Shape(format!(
            "step inputs {}+{} for widths {}+{}",
            x.len(),
            y.len(),
            params.input_width(0),
            params.input_width(1)
        )));
    }
    check_state(prev, d)?;
    let rec = step_unchecked([x, y], prev, params, weights, recurrence);
    check_state(&rec.state, d)?;
    Ok((rec.state.clone(), rec))
}

pub(crate) fn step_unchecked(
    inputs: [&[f64]; 2],
    prev: &EncoderState,
    p: &EncoderParams,
    weights: [f64; 2],
    recurrence: Recurrence,
) -> StepRecord {
    let d = p.hidden();
    let h_prev = &prev.h;
    let affine = |i: usize, w: &Matrix, b: &Matrix| {
        let mut out = b.as_slice().to_vec();
        vec_mat_acc(inputs[i], w, &mut out);
        out
    };
    let a_r = [0, 1].map(|i| affine(i, &p.inputs[i].wr, &p.inputs[i].br));
    let a_z = [0, 1].map(|i| affine(i, &p.inputs[i].wz, &p.inputs[i].bz));
    let a_h = [0, 1].map(|i| affine(i, &p.inputs[i].wh, &p.inputs[i].bh));

    let mod_prev = match recurrence {
        Recurrence::Fused => [h_prev.clone(), h_prev.clone()],
        Recurrence::PerModality => [prev.h1.clone(), prev.h2.clone()],
    };

    let mut r_mod: [Vec<f64>; 2] = Default::default();
    let mut z_mod: [Vec<f64>; 2] = Default::default();
    let mut hc_mod: [Vec<f64>; 2] = Default::default();
    let mut h_mod: [Vec<f64>; 2] = Default::default();
    for i in 0..2 {
        let hp = &mod_prev[i];
        let mut r = a_r[i].clone();
        vec_mat_acc(hp, &p.ur, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = a_z[i].clone();
        vec_mat_acc(hp, &p.uz, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(hp).map(|(a, b)| a * b).collect();
        let mut hc = a_h[i].clone();
        vec_mat_acc(&rh, &p.uh, &mut hc);
        hc.iter_mut().for_each(|v| *v = v.tanh());
        h_mod[i] = (0..d)
            .map(|k| (1.0 - z[k]) * hp[k] + z[k] * hc[k])
            .collect();
        r_mod[i] = r;
        z_mod[i] = z;
        hc_mod[i] = hc;
    }

    let mix = |a: &[Vec<f64>; 2]| -> Vec<f64> {
        (0..d)
            .map(|k| weights[0] * a[0][k] + weights[1] * a[1][k])
            .collect()
    };
    let mut r = mix(&a_r);
    vec_mat_acc(h_prev, &p.ur, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    let mut z = mix(&a_z);
    vec_mat_acc(h_prev, &p.uz, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut hc = mix(&a_h);
    vec_mat_acc(&rh, &p.uh, &mut hc);
    hc.iter_mut().for_each(|v| *v = v.tanh());
    let h: Vec<f64> = (0..d)
        .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * hc[k])
        .collect();

    let [h1, h2] = h_mod;
    StepRecord {
        weights,
        dynamic: None,
        a_r,
        a_z,
        a_h,
        r_mod,
        z_mod,
        hc_mod,
        r,
        z,
        hc,
        h_prev: h_prev.clone(),
        mod_prev,
        state: EncoderState {
            h,
            h1,
            h2,
            t: prev.t + 1,
        },
    }
}

fn check_sequences(xs: &Matrix, ys: &Matrix, p: &EncoderParams) -> Result<()> {
    if xs.rows() != ys.rows() {
        return Err(Error::Shape(format!(
            "modality lengths differ: {} vs {}",
            xs.rows(),
            ys.rows()
        )));
    }
    if xs.rows() == 0 {
        return Err(Error::Argument("empty sequence".into()));
    }
    if xs.cols() != p.input_width(0) || ys.cols() != p.input_width(1) {
        return Err(Error::Shape(format!(
            "sequence widths {}/{} for encoder widths {}/{}",
            xs.cols(),
            ys.cols(),
            p.input_width(0),
            p.input_width(1)
        )));
    }
    Ok(())
}

pub(crate) fn run_unchecked(
    xs: &Matrix,
    ys: &Matrix,
    p: &EncoderParams,
    weighting: Weighting,
    recurrence: Recurrence,
) -> EncoderTrace {
    let mut state = EncoderState::zeros(p.hidden());
    let mut steps = Vec::with_capacity(xs.rows());
    for t in 0..xs.rows() {
        let (x, y) = (xs.row(t), ys.row(t));
        let (weights, dynamic) = match weighting {
            Weighting::Fixed(w) => (w, None),
            Weighting::Dynamic => {
                let mut xa = vec![0.0; p.hidden()];
                let mut ya = vec![0.0; p.hidden()];
                vec_mat_acc(x, &p.a[0], &mut xa);
                vec_mat_acc(y, &p.a[1], &mut ya);
                let dw = weights_from_scores([
                    crate::numerics::dot(&xa, &state.h),
                    crate::numerics::dot(&ya, &state.h),
                ]);
                (dw.w, Some(dw))
            }
        };
        let mut rec = step_unchecked([x, y], &state, p, weights, recurrence);
        rec.dynamic = dynamic;
        state = rec.state.clone();
        steps.push(rec);
    }
    EncoderTrace {
        weighting,
        recurrence,
        steps,
    }
}

fn finish(trace: EncoderTrace) -> Result<(EncoderState, EncoderTrace)> {
    let last = trace.final_state().clone();
    check_state(&last, last.h.len())?;
    Ok((last, trace))
}

/// Encodes both modalities from the zero state.
pub fn encode_sequence(
    xs: &Matrix,
    ys: &Matrix,
    params: &EncoderParams,
    use_dw: bool,
    recurrence: Recurrence,
) -> Result<(EncoderState, EncoderTrace)> {
    check_sequences(xs, ys, params)?;
    let weighting = if use_dw {
        Weighting::Dynamic
    } else {
        Weighting::Fixed(UNWEIGHTED)
    };
    finish(run_unchecked(xs, ys, params, weighting, recurrence))
}

/// Encodes one modality alone: the absent input is the zero sequence and
/// the modality weights are pinned to 1 (present) and 0 (absent).
pub fn encode_single_modality(
    input: &Matrix,
    which: usize,
    params: &EncoderParams,
    recurrence: Recurrence,
) -> Result<(EncoderState, EncoderTrace)> {
    if which > 1 {
        return Err(Error::Argument(format!(
            "modality index {which}, expected 0 (x) or 1 (y)"
        )));
    }
    let other = Matrix::zeros(input.rows(), params.input_width(1 - which));
    let (xs, ys) = if which == 0 {
        (input, &other)
    } else {
        (&other, input)
    };
    check_sequences(xs, ys, params)?;
    let mut w = [0.0; 2];
    w[which] = 1.0;
    finish(run_unchecked(
        xs,
        ys,
        params,
        Weighting::Fixed(w),
        recurrence,
    ))
}

/// Check that parameter shapes match `dims`.
pub(crate) fn check_params(params: &ModelParams) -> Result<()> {
    let Dims { m, n, d } = params.dims;
    let e = &params.encoder;
    let ok = e.ur.shape() == (d, d)
        && e.uz.shape() == (d, d)
        && e.uh.shape() == (d, d)
        && e.a[0].shape() == (m, d)
        && e.a[1].shape() == (n, d)
        && [m, n].iter().zip(&e.inputs).all(|(&w, mw)| {
            mw.wr.shape() == (w, d)
                && mw.wz.shape() == (w, d)
                && mw.wh.shape() == (w, d)
                && mw.br.shape() == (1, d)
                && mw.bz.shape() == (1, d)
                && mw.bh.shape() == (1, d)
        });
    if !ok {
        return Err(Error::Shape(format!(
            "encoder parameters inconsistent with {:?}",
            params.dims
        )));
    }
    crate::decoder::check_params(&params.decoder, params.dims)
}
