//! Multinomial logistic regression on standardized features.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const GRAD_TOL: f64 = 1e-5;
pub const MAX_ITERS: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub num_classes: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `(p + 1) × K`; the last row is the bias.
    weights: Matrix,
    pub iterations: usize,
    /// Penalized training loss at the returned weights.
    pub loss: f64,
    pub grad_norm: f64,
}

struct Problem<'a> {
    z: &'a Matrix,
    labels: &'a [usize],
    k: usize,
    l2: f64,
}

impl Problem<'_> {
    /// Mean cross-entropy plus `l2/2 · ‖W‖²` (bias excluded), and gradient.
    fn eval(&self, w: &Matrix, want_grad: bool) -> (f64, Matrix) {
        let (n, p) = (self.z.rows(), self.z.cols());
        let k = self.k;
        let mut grad = Matrix::zeros(p + 1, k);
        let mut loss = 0.0;
        let mut logits = vec![0.0; k];
        for i in 0..n {
            let row = self.z.row(i);
            logits.copy_from_slice(w.row(p));
            for (j, &v) in row.iter().enumerate() {
                for (l, &wv) in logits.iter_mut().zip(w.row(j)) {
                    *l += v * wv;
                }
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            let lse = mx + sum.ln();
            loss += lse - logits[self.labels[i]];
            if want_grad {
                for c in 0..k {
                    let mut g = (logits[c] - lse).exp();
                    if c == self.labels[i] {
                        g -= 1.0;
                    }
                    g /= n as f64;
                    for (j, &v) in row.iter().enumerate() {
                        grad.as_mut_slice()[j * k + c] += g * v;
                    }
                    grad.as_mut_slice()[p * k + c] += g;
                }
            }
        }
        loss /= n as f64;
        let wk = &w.as_slice()[..p * k];
        loss += 0.5 * self.l2 * wk.iter().map(|v| v * v).sum::<f64>();
        if want_grad {
            for (g, v) in grad.as_mut_slice()[..p * k].iter_mut().zip(wk) {
                *g += self.l2 * v;
            }
        }
        (loss, grad)
    }

    /// Upper estimate of the gradient's Lipschitz constant.
    fn lipschitz(&self) -> f64 {
        let (n, p) = (self.z.rows(), self.z.cols());
        // Power iteration on [Z 1]ᵀ[Z 1] / n.
        let mut v = vec![1.0 / ((p + 1) as f64).sqrt(); p + 1];
        let mut lam = 0.0;
        for _ in 0..100 {
            let mut u = vec![0.0; p + 1];
            for i in 0..n {
                let row = self.z.row(i);
                let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[p];
                for (uj, &a) in u.iter_mut().zip(row) {
                    *uj += s * a;
                }
                u[p] += s;
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lam = norm / n as f64;
            v = u.into_iter().map(|x| x / norm).collect();
        }
        0.5 * lam * 1.1 + self.l2
    }
}

fn norm(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Fits by accelerated full-batch gradient descent (momentum restarted
/// whenever the loss goes up) until the gradient norm drops below
/// [`GRAD_TOL`] or [`MAX_ITERS`] is reached. `seed` only sets the starting
/// point; the penalized objective is strictly convex for `l2 > 0`.
pub fn train_classifier(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    l2: f64,
    seed: u64,
) -> Result<Classifier> {
    let (n, p) = features.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} feature rows for {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Argument(format!(
            "label {bad} for {num_classes} classes"
        )));
    }
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&b| b).count() < 2 {
        return Err(Error::Argument(
            "classifier needs at least two classes present".into(),
        ));
    }
    if !(l2 >= 0.0) {
        return Err(Error::Argument(format!("l2 {l2}")));
    }
    features.check_finite("classifier features")?;

    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(i)) {
            *m += v / n as f64;
        }
    }
    for i in 0..n {
        for ((s, v), m) in scale.iter_mut().zip(features.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    scale
        .iter_mut()
        .for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });
    let z = standardize(features, &mean, &scale);

    let prob = Problem {
        z: &z,
        labels,
        k: num_classes,
        l2,
    };
    let step = 1.0 / prob.lipschitz();
    let mut rng = Rng::new(seed);
    let init = (0..(p + 1) * num_classes)
        .map(|_| 0.01 * rng.normal())
        .collect();
    let mut w = Matrix::from_vec(p + 1, num_classes, init)?;
    let mut prev = w.clone();
    let mut t = 1.0f64;
    let (mut loss, mut grad) = prob.eval(&w, true);
    let mut iterations = 0;
    while iterations < MAX_ITERS && norm(&grad) >= GRAD_TOL {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let mut yv = w.clone();
        for ((y, a), b) in yv
            .as_mut_slice()
            .iter_mut()
            .zip(w.as_slice())
            .zip(prev.as_slice())
        {
            *y = a + beta * (a - b);
        }
        let (_, gy) = prob.eval(&yv, true);
        let mut next = yv;
        for (x, g) in next.as_mut_slice().iter_mut().zip(gy.as_slice()) {
            *x -= step * g;
        }
        let (next_loss, next_grad) = prob.eval(&next, true);
        iterations += 1;
        if next_loss > loss {
            // Restart from a plain gradient step at w.
            let mut plain = w.clone();
            for (x, g) in plain.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *x -= step * g;
            }
            let (pl, pg) = prob.eval(&plain, true);
            prev = w;
            w = plain;
            loss = pl;
            grad = pg;
            t = 1.0;
            continue;
        }
        prev = std::mem::replace(&mut w, next);
        loss = next_loss;
        grad = next_grad;
        t = t_next;
    }
    Ok(Classifier {
        num_classes,
        mean,
        scale,
        weights: w,
        iterations,
        loss,
        grad_norm: norm(&grad),
    })
}

fn standardize(features: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let mut z = features.clone();
    for i in 0..z.rows() {
        for ((v, m), s) in z.row_mut(i).iter_mut().zip(mean).zip(scale) {
            *v = (*v - m) / s;
        }
    }
    z
}

impl Classifier {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        let p = self.input_dim();
        if features.cols() != p {
            return Err(Error::Shape(format!(
                "classifier expects {p} features, got {}",
                features.cols()
            )));
        }
        let z = standardize(features, &self.mean, &self.scale);
        let k = self.num_classes;
        Ok((0..z.rows())
            .map(|i| {
                let mut logits = self.weights.row(p).to_vec();
                for (j, &v) in z.row(i).iter().enumerate() {
                    for (l, &wv) in logits.iter_mut().zip(self.weights.row(j)) {
                        *l += v * wv;
                    }
                }
                (0..k).fold(0, |best, c| if logits[c] > logits[best] { c } else { best })
            })
            .collect())
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(features)?;
        accuracy(&pred, labels)
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}
