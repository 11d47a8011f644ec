//! Analytic gradients of the composite objective by replaying the recorded
//! encoder and decoder traces backwards through time.

mod gradcheck;

pub use gradcheck::{
    grad_check, grad_check_with, random_instance, relative_error, BlockReport, GradCheckReport,
};

use rayon::prelude::*;

use crate::dataio::SequencePair;
use crate::decoder::{DecoderCell, DecoderTrace};
use crate::encoder::{correlation_with_grad, EncoderParams, EncoderTrace, Recurrence};
use crate::error::{Error, Result};
use crate::numerics::{dot, outer_acc, vec_mat_acc, vec_mat_t_acc, Matrix};
use crate::objective::{check_batch, ExampleTrace, ForwardPass, ModelConfig, Source};
use crate::params::ModelParams;

/// Gradient of the objective, shaped exactly like the parameters.
pub type GradientSet = ModelParams;

/// Per-step gradient injected into the modality projections `h^1_t`, `h^2_t`.
type Injection = [Vec<Vec<f64>>; 2];

/// Backpropagates `fwd.breakdown.total` to every parameter.
pub fn backward(
    batch: &[SequencePair],
    params: &ModelParams,
    config: &ModelConfig,
    fwd: &ForwardPass,
) -> Result<GradientSet> {
    if fwd.fingerprint != params.fingerprint() {
        return Err(Error::Consistency(
            "parameters changed since the forward pass".into(),
        ));
    }
    if fwd.config != *config {
        return Err(Error::Consistency(
            "configuration differs from the forward pass".into(),
        ));
    }
    if fwd.examples.len() != batch.len() {
        return Err(Error::Consistency(format!(
            "{} traces for a batch of {}",
            fwd.examples.len(),
            batch.len()
        )));
    }
    let t_len = check_batch(batch, params)?;
    if fwd.examples.iter().any(|e| e.fused.len() != t_len) {
        return Err(Error::Consistency(
            "trace length differs from sequence length".into(),
        ));
    }

    let injections = correlation_injections(fwd, config, t_len);

    let per_example: Vec<GradientSet> = batch
        .par_iter()
        .zip(&fwd.examples)
        .enumerate()
        .map(|(i, (item, ex))| {
            example_backward(item, ex, params, injections.as_ref().map(|inj| &inj[i]))
        })
        .collect();

    // Fixed-order reduction keeps the result independent of thread count.
    let mut grads = params.zeros_like();
    for g in &per_example {
        grads.add_assign(g)?;
    }
    Ok(grads)
}

fn correlation_injections(
    fwd: &ForwardPass,
    config: &ModelConfig,
    t_len: usize,
) -> Option<Vec<Injection>> {
    if !config.use_corr || config.lambda == 0.0 {
        return None;
    }
    let n = fwd.examples.len();
    let d = fwd.examples[0].fused.steps[0].state.h.len();
    let mut inj: Vec<Injection> = (0..n)
        .map(|_| [vec![vec![0.0; d]; t_len], vec![vec![0.0; d]; t_len]])
        .collect();
    let scale = -config.lambda / t_len as f64;
    for t in 0..t_len {
        let h1: Vec<&[f64]> = fwd
            .examples
            .iter()
            .map(|e| e.fused.steps[t].state.h1.as_slice())
            .collect();
        let h2: Vec<&[f64]> = fwd
            .examples
            .iter()
            .map(|e| e.fused.steps[t].state.h2.as_slice())
            .collect();
        let (_, g1, g2) = correlation_with_grad(&h1, &h2);
        for i in 0..n {
            for (dst, src) in inj[i][0][t].iter_mut().zip(&g1[i]) {
                *dst = scale * src;
            }
            for (dst, src) in inj[i][1][t].iter_mut().zip(&g2[i]) {
                *dst = scale * src;
            }
        }
    }
    Some(inj)
}

fn example_backward(
    item: &SequencePair,
    ex: &ExampleTrace,
    params: &ModelParams,
    injection: Option<&Injection>,
) -> GradientSet {
    let d = params.dims.d;
    let mut grads = params.zeros_like();
    let targets = [&item.x, &item.y];
    let mut g_fused = vec![0.0; d];
    let mut g_single = [vec![0.0; d], vec![0.0; d]];
    for rec in &ex.decodes {
        let g = decoder_backward(
            &rec.trace,
            targets[rec.target],
            rec.weight,
            &params.decoder.cells[rec.target],
            &mut grads.decoder.cells[rec.target],
        );
        let dst = match rec.source {
            Source::Fused => &mut g_fused,
            Source::Single(i) => &mut g_single[i],
        };
        dst.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }

    encoder_backward(
        &ex.fused,
        [Some(&item.x), Some(&item.y)],
        &params.encoder,
        &g_fused,
        injection,
        &mut grads,
    );
    for (i, single) in ex.single.iter().enumerate() {
        if let Some(trace) = single {
            let inputs = if i == 0 {
                [Some(&item.x), None]
            } else {
                [None, Some(&item.y)]
            };
            encoder_backward(
                trace,
                inputs,
                &params.encoder,
                &g_single[i],
                None,
                &mut grads,
            );
        }
    }
    grads
}

/// Backward through one decoder unroll whose output enters the loss as
/// `weight · MSE(output, target)`. Returns the gradient with respect to the
/// initial hidden state.
pub(crate) fn decoder_backward(
    trace: &DecoderTrace,
    target: &Matrix,
    weight: f64,
    cell: &DecoderCell,
    g: &mut DecoderCell,
) -> Vec<f64> {
    let d = cell.ur.rows();
    let t_len = trace.steps.len();
    let width = cell.output_width();
    let mut g_s = vec![0.0; d];
    if width == 0 {
        return g_s;
    }
    let coef = weight * 2.0 / (t_len * width) as f64;
    let mut g_out = vec![0.0; width];
    for k in (0..t_len).rev() {
        let st = &trace.steps[k];
        let frame = trace.order.frame(k, t_len);
        for ((go, o), t) in g_out
            .iter_mut()
            .zip(trace.output.row(frame))
            .zip(target.row(frame))
        {
            *go = coef * (o - t);
        }
        g.c.as_mut_slice()
            .iter_mut()
            .zip(&g_out)
            .for_each(|(a, b)| *a += b);
        outer_acc(&st.s, &g_out, &mut g.v);
        vec_mat_t_acc(&g_out, &cell.v, &mut g_s);

        let mut g_prev: Vec<f64> = (0..d).map(|j| g_s[j] * (1.0 - st.z[j])).collect();
        let g_ahc: Vec<f64> = (0..d)
            .map(|j| g_s[j] * st.z[j] * (1.0 - st.hc[j] * st.hc[j]))
            .collect();
        let g_az: Vec<f64> = (0..d)
            .map(|j| g_s[j] * (st.hc[j] - st.s_prev[j]) * st.z[j] * (1.0 - st.z[j]))
            .collect();
        let rs: Vec<f64> = st.r.iter().zip(&st.s_prev).map(|(a, b)| a * b).collect();
        outer_acc(&rs, &g_ahc, &mut g.uh);
        add_into(g.bh.as_mut_slice(), &g_ahc);
        let mut g_rs = vec![0.0; d];
        vec_mat_t_acc(&g_ahc, &cell.uh, &mut g_rs);
        let g_ar: Vec<f64> = (0..d)
            .map(|j| g_rs[j] * st.s_prev[j] * st.r[j] * (1.0 - st.r[j]))
            .collect();
        for j in 0..d {
            g_prev[j] += g_rs[j] * st.r[j];
        }
        outer_acc(&st.s_prev, &g_az, &mut g.uz);
        add_into(g.bz.as_mut_slice(), &g_az);
        vec_mat_t_acc(&g_az, &cell.uz, &mut g_prev);
        outer_acc(&st.s_prev, &g_ar, &mut g.ur);
        add_into(g.br.as_mut_slice(), &g_ar);
        vec_mat_t_acc(&g_ar, &cell.ur, &mut g_prev);
        g_s = g_prev;
    }
    g_s
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Gradients of one modality-style gate block: given `g_pre` for the
/// pre-activation `a + h·U`, accumulates `U` and propagates to `h`.
fn recurrent_backward(g_pre: &[f64], h: &[f64], u: &Matrix, g_u: &mut Matrix, g_h: &mut [f64]) {
    outer_acc(h, g_pre, g_u);
    vec_mat_t_acc(g_pre, u, g_h);
}

/// Backward through one encoder pass.
///
/// `inputs` holds the two modality sequences (`None` for an all-zero
/// input), `g_final` the gradient on the final fused state, and `injection`
/// optional per-step gradients on the modality projections.
pub(crate) fn encoder_backward(
    trace: &EncoderTrace,
    inputs: [Option<&Matrix>; 2],
    p: &EncoderParams,
    g_final: &[f64],
    injection: Option<&Injection>,
    grads: &mut GradientSet,
) {
    let d = p.hidden();
    let t_len = trace.steps.len();
    let mut g_h = g_final.to_vec();
    let mut g_hm = [vec![0.0; d], vec![0.0; d]];

    for t in (0..t_len).rev() {
        let st = &trace.steps[t];
        let mut g_m = g_hm.clone();
        if let Some(inj) = injection {
            for i in 0..2 {
                add_into(&mut g_m[i], &inj[i][t]);
            }
        }
        let w = st.weights;
        let hp = &st.h_prev;
        let mut g_hprev: Vec<f64> = (0..d).map(|k| g_h[k] * (1.0 - st.z[k])).collect();
        let mut g_ar = [vec![0.0; d], vec![0.0; d]];
        let mut g_az = [vec![0.0; d], vec![0.0; d]];
        let mut g_ah = [vec![0.0; d], vec![0.0; d]];
        let mut g_w = [0.0; 2];

        // Fused path.
        let g_ahc: Vec<f64> = (0..d)
            .map(|k| g_h[k] * st.z[k] * (1.0 - st.hc[k] * st.hc[k]))
            .collect();
        let g_azf: Vec<f64> = (0..d)
            .map(|k| g_h[k] * (st.hc[k] - hp[k]) * st.z[k] * (1.0 - st.z[k]))
            .collect();
        let rh: Vec<f64> = st.r.iter().zip(hp).map(|(a, b)| a * b).collect();
        let mut g_rh = vec![0.0; d];
        recurrent_backward(&g_ahc, &rh, &p.uh, &mut grads.encoder.uh, &mut g_rh);
        let g_arf: Vec<f64> = (0..d)
            .map(|k| g_rh[k] * hp[k] * st.r[k] * (1.0 - st.r[k]))
            .collect();
        for k in 0..d {
            g_hprev[k] += g_rh[k] * st.r[k];
        }
        recurrent_backward(&g_azf, hp, &p.uz, &mut grads.encoder.uz, &mut g_hprev);
        recurrent_backward(&g_arf, hp, &p.ur, &mut grads.encoder.ur, &mut g_hprev);
        for i in 0..2 {
            for k in 0..d {
                g_ah[i][k] += w[i] * g_ahc[k];
                g_az[i][k] += w[i] * g_azf[k];
                g_ar[i][k] += w[i] * g_arf[k];
            }
            g_w[i] = dot(&g_ahc, &st.a_h[i]) + dot(&g_azf, &st.a_z[i]) + dot(&g_arf, &st.a_r[i]);
        }

        // Modality paths.
        let mut g_modprev = [vec![0.0; d], vec![0.0; d]];
        for i in 0..2 {
            let gm = &g_m[i];
            if gm.iter().all(|&v| v == 0.0) {
                continue;
            }
            let pv = &st.mod_prev[i];
            let (r, z, hc) = (&st.r_mod[i], &st.z_mod[i], &st.hc_mod[i]);
            let mut g_p: Vec<f64> = (0..d).map(|k| gm[k] * (1.0 - z[k])).collect();
            let g_ahc: Vec<f64> = (0..d)
                .map(|k| gm[k] * z[k] * (1.0 - hc[k] * hc[k]))
                .collect();
            let g_azm: Vec<f64> = (0..d)
                .map(|k| gm[k] * (hc[k] - pv[k]) * z[k] * (1.0 - z[k]))
                .collect();
            let rp: Vec<f64> = r.iter().zip(pv).map(|(a, b)| a * b).collect();
            let mut g_rp = vec![0.0; d];
            recurrent_backward(&g_ahc, &rp, &p.uh, &mut grads.encoder.uh, &mut g_rp);
            let g_arm: Vec<f64> = (0..d)
                .map(|k| g_rp[k] * pv[k] * r[k] * (1.0 - r[k]))
                .collect();
            for k in 0..d {
                g_p[k] += g_rp[k] * r[k];
            }
            recurrent_backward(&g_azm, pv, &p.uz, &mut grads.encoder.uz, &mut g_p);
            recurrent_backward(&g_arm, pv, &p.ur, &mut grads.encoder.ur, &mut g_p);
            add_into(&mut g_ah[i], &g_ahc);
            add_into(&mut g_az[i], &g_azm);
            add_into(&mut g_ar[i], &g_arm);
            match trace.recurrence {
                Recurrence::Fused => add_into(&mut g_hprev, &g_p),
                Recurrence::PerModality => g_modprev[i] = g_p,
            }
        }

        // Input projections and biases.
        for i in 0..2 {
            let gi = &mut grads.encoder.inputs[i];
            if let Some(xs) = inputs[i] {
                let x = xs.row(t);
                outer_acc(x, &g_ar[i], &mut gi.wr);
                outer_acc(x, &g_az[i], &mut gi.wz);
                outer_acc(x, &g_ah[i], &mut gi.wh);
            }
            add_into(gi.br.as_mut_slice(), &g_ar[i]);
            add_into(gi.bz.as_mut_slice(), &g_az[i]);
            add_into(gi.bh.as_mut_slice(), &g_ah[i]);
        }

        // Dynamic weighting.
        if let Some(dw) = &st.dynamic {
            let mean = g_w[0] * dw.w[0] + g_w[1] * dw.w[1];
            for i in 0..2 {
                let g_alpha = dw.sens[i] * (g_w[i] - mean);
                let Some(xs) = inputs[i] else { continue };
                if g_alpha == 0.0 {
                    continue;
                }
                let x = xs.row(t);
                let xh: Vec<f64> = hp.iter().map(|v| g_alpha * v).collect();
                outer_acc(x, &xh, &mut grads.encoder.a[i]);
                let mut xa = vec![0.0; d];
                vec_mat_acc(x, &p.a[i], &mut xa);
                for k in 0..d {
                    g_hprev[k] += g_alpha * xa[k];
                }
            }
        }

        g_h = g_hprev;
        g_hm = g_modprev;
    }
}

#[cfg(test)]
mod tests;
