//! Mini-batch training with per-coordinate adaptive step sizes.

mod checkpoint;

use std::ops::ControlFlow;

use crate::autograd::{backward, GradientSet};
use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::objective::{composite_loss, LossBreakdown, Model, ModelConfig};
use crate::params::{Dims, ModelParams};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Precision, CRNM_MAGIC,
    CRNM_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub eps_adapt: f64,
    /// Rescale the gradient when its global norm exceeds this value.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Width of the fusion layer.
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            base_lr: 0.05,
            eps_adapt: 1e-8,
            grad_clip: None,
            seed: 1,
            hidden: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config(format!(
                "base_lr {} must be positive",
                self.base_lr
            )));
        }
        if !(self.eps_adapt > 0.0) {
            return Err(Error::Config(format!(
                "eps_adapt {} must be positive",
                self.eps_adapt
            )));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Accumulated squared gradients, shape-isomorphic to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub acc: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(dims: Dims) -> Self {
        OptimizerState {
            acc: ModelParams::zeros(dims),
            step: 0,
        }
    }
}

/// `acc += g²; θ −= base_lr · g / (√acc + eps_adapt)`, entrywise.
///
/// Every gradient block is checked before anything is modified, so a
/// non-finite gradient leaves both parameters and state untouched.
pub fn sgd_adaptive_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
    base_lr: f64,
    eps_adapt: f64,
) -> Result<()> {
    if params.dims != grads.dims || params.dims != state.acc.dims {
        return Err(Error::Shape(format!(
            "optimizer step with dims {:?}, gradients {:?}, state {:?}",
            params.dims, grads.dims, state.acc.dims
        )));
    }
    for (name, g) in grads.blocks() {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient block {name}")));
        }
    }
    let gb = grads.blocks();
    for (((_, p), (_, acc)), (_, g)) in params
        .blocks_mut()
        .into_iter()
        .zip(state.acc.blocks_mut())
        .zip(gb)
    {
        let iter = p
            .as_mut_slice()
            .iter_mut()
            .zip(acc.as_mut_slice())
            .zip(g.as_slice());
        for ((theta, a), &gv) in iter {
            *a += gv * gv;
            if gv != 0.0 {
                *theta -= base_lr * gv / (a.sqrt() + eps_adapt);
            }
        }
    }
    state.step += 1;
    Ok(())
}

/// Progress report handed to the observer after every batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchReport {
    pub epoch: usize,
    pub batch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: OptimizerState,
    /// Mean loss per completed epoch.
    pub log: Vec<LossBreakdown>,
    pub aborted: bool,
}

pub fn train(
    dataset: &WindowedDataset,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(dataset, config, train_cfg, |_| ControlFlow::Continue(()))
}

/// Like [`train`], calling `observer` after each batch. Returning
/// `ControlFlow::Break` stops training; the log then covers only the epochs
/// that finished.
pub fn train_with<F>(
    dataset: &WindowedDataset,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&BatchReport) -> ControlFlow<()>,
{
    config.validate()?;
    train_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    if config.use_corr && train_cfg.batch_size < 2 {
        return Err(Error::Config(
            "correlation needs a batch size of at least 2".into(),
        ));
    }
    if config.use_corr && dataset.len() < train_cfg.batch_size {
        return Err(Error::Config(format!(
            "{} items cannot fill one batch of {}",
            dataset.len(),
            train_cfg.batch_size
        )));
    }
    let (m, n) = dataset.dims();
    let dims = Dims::new(m, n, train_cfg.hidden);
    let mut params = ModelParams::init(dims, &mut Rng::derive(train_cfg.seed, 0));
    let mut optimizer = OptimizerState::new(dims);
    let mut order_rng = Rng::derive(train_cfg.seed, 1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(train_cfg.epochs);
    let mut aborted = false;

    'epochs: for epoch in 0..train_cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut sum = [0.0; 4];
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            if config.use_corr && chunk.len() < train_cfg.batch_size {
                continue;
            }
            let batch: Vec<_> = chunk.iter().map(|&i| dataset.items[i].clone()).collect();
            let fwd = composite_loss(&batch, &params, config)?;
            let mut grads = backward(&batch, &params, config, &fwd)?;
            if let Some(clip) = train_cfg.grad_clip {
                let norm = grads.squared_norm().sqrt();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            sgd_adaptive_step(
                &mut params,
                &grads,
                &mut optimizer,
                train_cfg.base_lr,
                train_cfg.eps_adapt,
            )?;
            let l = fwd.breakdown;
            for (s, v) in sum
                .iter_mut()
                .zip([l.l_fused, l.l_self, l.l_cross, l.l_corr])
            {
                *s += v;
            }
            batches += 1;
            let report = BatchReport {
                epoch,
                batch: b,
                loss: l,
            };
            if observer(&report).is_break() {
                aborted = true;
                break 'epochs;
            }
        }
        let k = batches.max(1) as f64;
        log.push(LossBreakdown::assemble(
            sum[0] / k,
            sum[1] / k,
            sum[2] / k,
            sum[3] / k,
            config.lambda,
        ));
    }

    Ok(TrainOutcome {
        model: Model {
            params,
            config: *config,
        },
        optimizer,
        log,
        aborted,
    })
}
