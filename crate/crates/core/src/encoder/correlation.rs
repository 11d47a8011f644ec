use crate::dataio::SequencePair;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objective::Model;

/// Added to the correlation denominator.
pub const EPS_CORR: f64 = 1e-8;

fn centered(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    rows.iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect()
}

/// Correlation of two batches with per-row gradients.
///
/// Rows are centred by the batch mean; the numerator sums inner products of
/// the centred rows and the denominator is
/// `sqrt(Σ‖c1‖² · Σ‖c2‖²) + EPS_CORR`.
pub(crate) fn correlation_with_grad(
    h1: &[&[f64]],
    h2: &[&[f64]],
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let c1 = centered(h1);
    let c2 = centered(h2);
    let mut num = 0.0;
    let mut s11 = 0.0;
    let mut s22 = 0.0;
    for (a, b) in c1.iter().zip(&c2) {
        for (x, y) in a.iter().zip(b) {
            num += x * y;
            s11 += x * x;
            s22 += y * y;
        }
    }
    let s = (s11 * s22).sqrt();
    let denom = s + EPS_CORR;
    let rho = num / denom;

    let grad = |own: &[Vec<f64>], other: &[Vec<f64>], s_other: f64| -> Vec<Vec<f64>> {
        let k = if s > 0.0 {
            num / (denom * denom) * s_other / s
        } else {
            0.0
        };
        let raw: Vec<Vec<f64>> = own
            .iter()
            .zip(other)
            .map(|(o, p)| o.iter().zip(p).map(|(x, y)| y / denom - k * x).collect())
            .collect();
        // Back through the centring.
        let rows: Vec<&[f64]> = raw.iter().map(|r| r.as_slice()).collect();
        centered(&rows)
    };
    let g1 = grad(&c1, &c2, s22);
    let g2 = grad(&c2, &c1, s11);
    (rho, g1, g2)
}

type Rows<'a> = Vec<&'a [f64]>;

fn batch_rows<'a>(h1: &'a Matrix, h2: &'a Matrix) -> Result<(Rows<'a>, Rows<'a>)> {
    if h1.shape() != h2.shape() {
        return Err(Error::Shape(format!(
            "correlation batches {:?} and {:?}",
            h1.shape(),
            h2.shape()
        )));
    }
    if h1.rows() < 2 {
        return Err(Error::Argument(format!(
            "correlation needs at least 2 rows, got {}",
            h1.rows()
        )));
    }
    Ok((
        (0..h1.rows()).map(|i| h1.row(i)).collect(),
        (0..h2.rows()).map(|i| h2.row(i)).collect(),
    ))
}

/// Mini-batch correlation between two `N × d` batches of projections.
pub fn batch_correlation(h1: &Matrix, h2: &Matrix) -> Result<f64> {
    let (a, b) = batch_rows(h1, h2)?;
    Ok(correlation_with_grad(&a, &b).0)
}

/// Mean over hidden units of the per-unit correlation (each unit's column
/// treated as its own pair of batches).
pub fn unit_correlation_mean(h1: &Matrix, h2: &Matrix) -> Result<f64> {
    batch_rows(h1, h2)?;
    let d = h1.cols();
    if d == 0 {
        return Err(Error::Argument("zero-width projections".into()));
    }
    let mut total = 0.0;
    for j in 0..d {
        let c1: Vec<f64> = (0..h1.rows()).map(|i| h1.get(i, j)).collect();
        let c2: Vec<f64> = (0..h2.rows()).map(|i| h2.get(i, j)).collect();
        let r1: Vec<&[f64]> = c1.iter().map(std::slice::from_ref).collect();
        let r2: Vec<&[f64]> = c2.iter().map(std::slice::from_ref).collect();
        total += correlation_with_grad(&r1, &r2).0;
    }
    Ok(total / d as f64)
}

/// Correlation diagnostic of a trained model: modality projections at the
/// final step are collected per consecutive mini-batch of `batch_size`
/// items, the per-unit correlations are summed and divided by the number of
/// fusion units, and the result is averaged over mini-batches. A trailing
/// batch with fewer than two items is skipped.
pub fn normalized_correlation(
    model: &Model,
    items: &[SequencePair],
    batch_size: usize,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    if batch_size < 2 {
        return Err(Error::Argument("batch size must be at least 2".into()));
    }
    let d = model.params.dims.d;
    let mut sum = 0.0;
    let mut batches = 0usize;
    for chunk in items.chunks(batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let mut h1 = Matrix::zeros(chunk.len(), d);
        let mut h2 = Matrix::zeros(chunk.len(), d);
        for (i, item) in chunk.iter().enumerate() {
            let (state, _) = model.encode(item)?;
            h1.row_mut(i).copy_from_slice(&state.h1);
            h2.row_mut(i).copy_from_slice(&state.h2);
        }
        sum += unit_correlation_mean(&h1, &h2)?;
        batches += 1;
    }
    if batches == 0 {
        return Err(Error::Argument(
            "dataset too small for a two-item batch".into(),
        ));
    }
    Ok(sum / batches as f64)
}
