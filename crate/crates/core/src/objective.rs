//! Composite training objective: fused, self and cross reconstruction plus
//! the mini-batch correlation of the fused pass's modality projections.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataio::SequencePair;
use crate::decoder::{decode_unchecked, DecodeOrder, DecoderTrace};
use crate::encoder::{
    check_params, correlation_with_grad, encode_sequence, encode_single_modality, run_unchecked,
    EncoderState, EncoderTrace, Recurrence, Weighting, UNWEIGHTED,
};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::params::ModelParams;

/// Which loss terms are active, their scales, and architecture switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub use_self: bool,
    pub use_cross: bool,
    pub use_corr: bool,
    pub use_dw: bool,
    /// Weight of the modality-2 reconstruction error.
    pub beta: f64,
    /// Weight of the correlation term.
    pub lambda: f64,
    pub recurrence: Recurrence,
    pub decode_order: DecodeOrder,
}

/// Named model configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fused,
    SelfRecon,
    Cross,
    All,
    Corr,
    CorrDw,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fused,
        Preset::SelfRecon,
        Preset::Cross,
        Preset::All,
        Preset::Corr,
        Preset::CorrDw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fused => "fused",
            Preset::SelfRecon => "self",
            Preset::Cross => "cross",
            Preset::All => "all",
            Preset::Corr => "corr",
            Preset::CorrDw => "corr-dw",
        }
    }

    pub fn config(self) -> ModelConfig {
        let (s, c, r, w) = match self {
            Preset::Fused => (false, false, false, false),
            Preset::SelfRecon => (true, false, false, false),
            Preset::Cross => (false, true, false, false),
            Preset::All => (true, true, false, false),
            Preset::Corr => (true, true, true, false),
            Preset::CorrDw => (true, true, true, true),
        };
        ModelConfig {
            use_self: s,
            use_cross: c,
            use_corr: r,
            use_dw: w,
            ..ModelConfig::default()
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown configuration {s:?}")))
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_self: false,
            use_cross: false,
            use_corr: false,
            use_dw: false,
            beta: 1.0,
            lambda: 0.1,
            recurrence: Recurrence::Fused,
            decode_order: DecodeOrder::Reverse,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn needs_single_passes(&self) -> bool {
        self.use_self || self.use_cross
    }
}

/// A parameter set together with the configuration it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub config: ModelConfig,
}

impl Model {
    pub fn encode(&self, item: &SequencePair) -> Result<(EncoderState, EncoderTrace)> {
        encode_sequence(
            &item.x,
            &item.y,
            &self.params.encoder,
            self.config.use_dw,
            self.config.recurrence,
        )
    }

    pub fn encode_single(
        &self,
        input: &Matrix,
        which: usize,
    ) -> Result<(EncoderState, EncoderTrace)> {
        encode_single_modality(input, which, &self.params.encoder, self.config.recurrence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_fused: f64,
    pub l_self: f64,
    pub l_cross: f64,
    /// Correlation averaged over timesteps; zero when disabled.
    pub l_corr: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn assemble(l_fused: f64, l_self: f64, l_cross: f64, l_corr: f64, lambda: f64) -> Self {
        LossBreakdown {
            l_fused,
            l_self,
            l_cross,
            l_corr,
            total: l_fused + l_self + l_cross - lambda * l_corr,
        }
    }
}

/// Mean squared error over all entries; zero for empty matrices.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .fold(0.0, |s, (a, b)| s + (a - b) * (a - b));
    Ok(s / pred.len() as f64)
}

/// `MSE(x̂, x) + beta · MSE(ŷ, y)`.
pub fn reconstruction_loss(
    x_hat: &Matrix,
    x: &Matrix,
    y_hat: &Matrix,
    y: &Matrix,
    beta: f64,
) -> Result<f64> {
    Ok(mse(x_hat, x)? + beta * mse(y_hat, y)?)
}

/// Which encoding a decode started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Fused,
    Single(usize),
}

#[derive(Debug, Clone)]
pub struct DecodeRecord {
    pub source: Source,
    /// Reconstructed modality (0 = x, 1 = y).
    pub target: usize,
    /// Factor on this reconstruction's MSE inside `total`.
    pub weight: f64,
    pub trace: DecoderTrace,
}

#[derive(Debug, Clone)]
pub struct ExampleTrace {
    pub fused: EncoderTrace,
    pub single: [Option<EncoderTrace>; 2],
    pub decodes: Vec<DecodeRecord>,
}

/// Output of [`composite_loss`]: the loss and every intermediate needed to
/// differentiate it.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub breakdown: LossBreakdown,
    pub examples: Vec<ExampleTrace>,
    /// Batch correlation at each timestep (empty when disabled).
    pub corr_per_step: Vec<f64>,
    pub(crate) fingerprint: u64,
    pub(crate) config: ModelConfig,
}

struct ExampleOut {
    trace: ExampleTrace,
    fused: f64,
    self_: f64,
    cross: f64,
}

fn run_example(
    item: &SequencePair,
    params: &ModelParams,
    config: &ModelConfig,
    n: f64,
) -> Result<ExampleOut> {
    let enc = &params.encoder;
    let t_len = item.x.rows();
    let weighting = if config.use_dw {
        Weighting::Dynamic
    } else {
        Weighting::Fixed(UNWEIGHTED)
    };
    let fused = run_unchecked(&item.x, &item.y, enc, weighting, config.recurrence);
    let single = if config.needs_single_passes() {
        let zx = Matrix::zeros(t_len, item.y.cols());
        let zy = Matrix::zeros(t_len, item.x.cols());
        [
            Some(run_unchecked(
                &item.x,
                &zx,
                enc,
                Weighting::Fixed([1.0, 0.0]),
                config.recurrence,
            )),
            Some(run_unchecked(
                &zy,
                &item.y,
                enc,
                Weighting::Fixed([0.0, 1.0]),
                config.recurrence,
            )),
        ]
    } else {
        [None, None]
    };

    let targets = [&item.x, &item.y];
    let scale = [1.0, config.beta];
    let mut decodes = Vec::with_capacity(6);
    let mut decode = |source: Source, target: usize| -> Result<f64> {
        let h = match source {
            Source::Fused => &fused.final_state().h,
            Source::Single(i) => &single[i].as_ref().expect("single pass").final_state().h,
        };
        let trace = decode_unchecked(h, t_len, &params.decoder.cells[target], config.decode_order);
        let loss = mse(&trace.output, targets[target])?;
        decodes.push(DecodeRecord {
            source,
            target,
            weight: scale[target] / n,
            trace,
        });
        Ok(scale[target] * loss)
    };

    let l_fused = decode(Source::Fused, 0)? + decode(Source::Fused, 1)?;
    let l_self = if config.use_self {
        decode(Source::Single(0), 0)? + decode(Source::Single(1), 1)?
    } else {
        0.0
    };
    let l_cross = if config.use_cross {
        decode(Source::Single(1), 0)? + decode(Source::Single(0), 1)?
    } else {
        0.0
    };
    Ok(ExampleOut {
        trace: ExampleTrace {
            fused,
            single,
            decodes,
        },
        fused: l_fused,
        self_: l_self,
        cross: l_cross,
    })
}

pub(crate) fn check_batch(batch: &[SequencePair], params: &ModelParams) -> Result<usize> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Argument("empty batch".into()))?;
    let t_len = first.x.rows();
    if t_len == 0 {
        return Err(Error::Argument("zero-length sequences".into()));
    }
    let dims = params.dims;
    for (i, item) in batch.iter().enumerate() {
        if item.x.shape() != (t_len, dims.m) || item.y.shape() != (t_len, dims.n) {
            return Err(Error::Shape(format!(
                "batch item {i}: x {:?}, y {:?}, expected ({t_len}, {}) and ({t_len}, {})",
                item.x.shape(),
                item.y.shape(),
                dims.m,
                dims.n
            )));
        }
    }
    Ok(t_len)
}

/// Evaluates the composite objective on a batch. Reconstruction terms are
/// averaged over the batch; the correlation term is computed across it at
/// every timestep and averaged over time.
pub fn composite_loss(
    batch: &[SequencePair],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardPass> {
    config.validate()?;
    check_params(params)?;
    let t_len = check_batch(batch, params)?;
    if config.use_corr && batch.len() < 2 {
        return Err(Error::Config(format!(
            "correlation needs a batch of at least 2, got {}",
            batch.len()
        )));
    }
    let n = batch.len() as f64;
    let outs: Vec<ExampleOut> = batch
        .par_iter()
        .map(|item| run_example(item, params, config, n))
        .collect::<Result<_>>()?;

    let mut l_fused = 0.0;
    let mut l_self = 0.0;
    let mut l_cross = 0.0;
    for o in &outs {
        l_fused += o.fused;
        l_self += o.self_;
        l_cross += o.cross;
    }
    let examples: Vec<ExampleTrace> = outs.into_iter().map(|o| o.trace).collect();

    let mut corr_per_step = Vec::new();
    if config.use_corr {
        for t in 0..t_len {
            let h1: Vec<&[f64]> = examples
                .iter()
                .map(|e| e.fused.steps[t].state.h1.as_slice())
                .collect();
            let h2: Vec<&[f64]> = examples
                .iter()
                .map(|e| e.fused.steps[t].state.h2.as_slice())
                .collect();
            corr_per_step.push(correlation_with_grad(&h1, &h2).0);
        }
    }
    let l_corr = if corr_per_step.is_empty() {
        0.0
    } else {
        corr_per_step.iter().sum::<f64>() / t_len as f64
    };
    let breakdown =
        LossBreakdown::assemble(l_fused / n, l_self / n, l_cross / n, l_corr, config.lambda);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("composite loss".into()));
    }
    Ok(ForwardPass {
        breakdown,
        examples,
        corr_per_step,
        fingerprint: params.fingerprint(),
        config: *config,
    })
}
