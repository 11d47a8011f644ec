use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_diff_gradient<F>(mut f: F, x: &Matrix, eps: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let up = f(&probe)?;
        probe.as_mut_slice()[i] = orig - eps;
        let down = f(&probe)?;
        probe.as_mut_slice()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at perturbation of entry {i}"
            )));
        }
        grad.as_mut_slice()[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}
