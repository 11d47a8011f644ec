use std::fmt;

use crate::dataio::SequencePair;
use crate::error::Result;
use crate::numerics::{finite_diff_gradient, Matrix, Rng};
use crate::objective::{composite_loss, ModelConfig};
use crate::params::{Dims, ModelParams};

use super::{backward, GradientSet};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn failing(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| !b.pass)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<12} max_rel_err={:.3e} {}",
                b.name,
                b.max_rel_err,
                if b.pass { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "overall max_rel_err={:.3e} tol={:.1e} {}",
            self.max_rel_err,
            self.tol,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random instance used by the gradient checks.
pub fn random_instance(
    dims: Dims,
    t_len: usize,
    batch: usize,
    seed: u64,
) -> (ModelParams, Vec<SequencePair>) {
    let mut rng = Rng::new(seed);
    let params = ModelParams::random(dims, 1.0, &mut rng);
    let mut frames = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix::from_vec(rows, cols, data).expect("finite normals")
    };
    let items = (0..batch)
        .map(|_| SequencePair {
            x: frames(t_len, dims.m),
            y: frames(t_len, dims.n),
            label: None,
        })
        .collect();
    (params, items)
}

/// Compares `analytic` against central differences of the composite loss,
/// block by block.
pub fn grad_check_with(
    params: &ModelParams,
    batch: &[SequencePair],
    config: &ModelConfig,
    analytic: &GradientSet,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut blocks = Vec::new();
    let names = params.block_names();
    for (idx, name) in names.iter().enumerate() {
        let base = params.blocks()[idx].1.clone();
        let numeric = finite_diff_gradient(
            |m: &Matrix| {
                let mut probe = params.clone();
                *probe.blocks_mut()[idx].1 = m.clone();
                Ok(composite_loss(batch, &probe, config)?.breakdown.total)
            },
            &base,
            eps,
        )?;
        let got = analytic.blocks()[idx].1;
        let max_rel_err = got
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(&a, &b)| relative_error(a, b))
            .fold(0.0, f64::max);
        blocks.push(BlockReport {
            name: name.clone(),
            max_rel_err,
            pass: max_rel_err <= tol,
        });
    }
    let max_rel_err = blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        pass: blocks.iter().all(|b| b.pass),
        blocks,
        max_rel_err,
        tol,
    })
}

/// Builds a random instance and checks `backward` against central
/// differences. Failures are reported, not returned as errors.
pub fn grad_check(
    dims: Dims,
    t_len: usize,
    batch: usize,
    config: &ModelConfig,
    seed: u64,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (params, items) = random_instance(dims, t_len, batch, seed);
    let fwd = composite_loss(&items, &params, config)?;
    let analytic = backward(&items, &params, config, &fwd)?;
    grad_check_with(&params, &items, config, &analytic, eps, tol)
}
