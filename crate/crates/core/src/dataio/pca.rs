use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const WHITEN_EPS: f64 = 1e-8;

/// Centring, projection onto leading principal axes, and per-axis scaling
/// by `1 / sqrt(eigenvalue + 1e-8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Input width × output width, columns are unit eigenvectors.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl PcaTransform {
    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn apply(&self, frames: &Matrix) -> Result<Matrix> {
        if frames.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on width {}, applied to width {}",
                self.mean.len(),
                frames.cols()
            )));
        }
        let p = self.output_dim();
        let mut out = Matrix::zeros(frames.rows(), p);
        let scales: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|l| 1.0 / (l + WHITEN_EPS).sqrt())
            .collect();
        for r in 0..frames.rows() {
            let centred: Vec<f64> = frames
                .row(r)
                .iter()
                .zip(&self.mean)
                .map(|(v, m)| v - m)
                .collect();
            let row = out.row_mut(r);
            for (j, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for (i, c) in centred.iter().enumerate() {
                    s += c * self.components.get(i, j);
                }
                *o = s * scales[j];
            }
        }
        Ok(out)
    }
}

/// Fits a whitening PCA to `frames` (`N × k`, sample covariance with
/// `N - 1`) and returns the projected frames with the reusable transform.
pub fn pca_whiten(frames: &Matrix, target_dim: usize) -> Result<(Matrix, PcaTransform)> {
    let (n, k) = frames.shape();
    if target_dim == 0 || target_dim > k {
        return Err(Error::Argument(format!(
            "target dimension {target_dim} for {k}-wide data"
        )));
    }
    if n <= target_dim {
        return Err(Error::Argument(format!(
            "need more than {target_dim} samples, got {n}"
        )));
    }
    let mut mean = vec![0.0; k];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(frames.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for r in 0..n {
        let c: Vec<f64> = frames
            .row(r)
            .iter()
            .zip(&mean)
            .map(|(v, m)| v - m)
            .collect();
        for i in 0..k {
            for j in i..k {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > 1e-10 * top.max(f64::MIN_POSITIVE))
        .count();
    if rank < target_dim {
        return Err(Error::Argument(format!(
            "data has rank {rank}, cannot whiten to {target_dim} dimensions"
        )));
    }
    let mut components = Matrix::zeros(k, target_dim);
    let mut eigenvalues = Vec::with_capacity(target_dim);
    for (j, &src) in order.iter().take(target_dim).enumerate() {
        let col = eig.eigenvectors.column(src);
        // Sign convention: largest-magnitude entry positive.
        let pivot = (0..k).fold(0, |best, i| {
            if col[i].abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            components.set(i, j, sign * col[i]);
        }
        eigenvalues.push(eig.eigenvalues[src]);
    }
    let transform = PcaTransform {
        mean,
        components,
        eigenvalues,
    };
    let projected = transform.apply(frames)?;
    Ok((projected, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn covariance(m: &Matrix) -> Vec<Vec<f64>> {
        let (n, k) = m.shape();
        let mean: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64)
            .collect();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        (0..n)
                            .map(|i| (m.get(i, a) - mean[a]) * (m.get(i, b) - mean[b]))
                            .sum::<f64>()
                            / (n - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }

    fn correlated(n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let a = rng.normal();
            let b = rng.normal();
            data.push(2.0 * a + 1.0);
            data.push(1.5 * a + 0.5 * b - 3.0);
        }
        Matrix::from_vec(n, 2, data).unwrap()
    }

    #[test]
    fn full_rank_output_is_white() {
        let mut rng = Rng::new(1);
        let k = 5;
        let n = 400;
        let mix: Vec<f64> = (0..k * k).map(|_| rng.normal()).collect();
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n {
            let z: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
            for i in 0..k {
                data.push((0..k).map(|j| mix[i * k + j] * z[j]).sum());
            }
        }
        let frames = Matrix::from_vec(n, k, data).unwrap();
        let (out, _) = pca_whiten(&frames, k).unwrap();
        let c = covariance(&out);
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c[i][j] - want).abs() < 1e-6, "cov[{i}][{j}] = {}", c[i][j]);
            }
        }
    }

    #[test]
    fn decorrelates_and_generalises() {
        let (out, t) = pca_whiten(&correlated(10_000, 3), 2).unwrap();
        assert!(covariance(&out)[0][1].abs() < 0.05);
        let held_out = t.apply(&correlated(10_000, 4)).unwrap();
        let c = covariance(&held_out);
        assert!(c[0][1].abs() < 0.1);
        assert!((c[0][0] - 1.0).abs() < 0.1 && (c[1][1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn already_white_stays_white() {
        let mut rng = Rng::new(8);
        let n = 20_000;
        let data = (0..n * 3).map(|_| rng.normal()).collect();
        let (out, _) = pca_whiten(&Matrix::from_vec(n, 3, data).unwrap(), 3).unwrap();
        let c = covariance(&out);
        for i in 0..3 {
            assert!((c[i][i] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut rng = Rng::new(2);
        let data: Vec<f64> = (0..50)
            .flat_map(|_| {
                let a = rng.normal();
                [a, 2.0 * a, -a]
            })
            .collect();
        let frames = Matrix::from_vec(50, 3, data).unwrap();
        let err = pca_whiten(&frames, 2).unwrap_err();
        assert!(err.to_string().contains("rank 1"), "{err}");
        assert!(pca_whiten(&frames, 1).is_ok());
        assert!(pca_whiten(&Matrix::zeros(2, 3), 2).is_err());
    }
}
