use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix. Vectors are stored as `1 × n` matrices.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Entrywise operations accepted by [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Scale(f64),
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Matrix { rows, cols, data };
        m.check_finite("Matrix::from_vec")?;
        Ok(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// A `1 × n` row vector.
    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Matrix::from_vec(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// Standard product; the inner index is summed left to right.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out.check_finite("matmul")?;
    Ok(out)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Applies `op` entrywise. Unary ops ignore `b`; binary ops require it with
/// a matching shape.
pub fn elementwise(op: Elementwise, a: &Matrix, b: Option<&Matrix>) -> Result<Matrix> {
    let binary = |f: fn(f64, f64) -> f64| -> Result<Matrix> {
        let b = b.ok_or_else(|| Error::Argument(format!("{op:?} needs two operands")))?;
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "{op:?} on {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        Ok(Matrix {
            rows: a.rows,
            cols: a.cols,
            data,
        })
    };
    let unary = |f: &dyn Fn(f64) -> f64| Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().map(|&x| f(x)).collect(),
    };
    let out = match op {
        Elementwise::Add => binary(|x, y| x + y)?,
        Elementwise::Sub => binary(|x, y| x - y)?,
        Elementwise::Mul => binary(|x, y| x * y)?,
        Elementwise::Sigmoid => unary(&sigmoid),
        Elementwise::Tanh => unary(&f64::tanh),
        Elementwise::Scale(s) => unary(&|x| x * s),
    };
    out.check_finite(&format!("{op:?}"))?;
    Ok(out)
}

// Unchecked slice kernels for the recurrent hot path. Summation order is
// fixed (ascending inner index) so results are bit-reproducible.

/// `out += x · W` for a row vector `x` (len = W.rows).
pub(crate) fn vec_mat_acc(x: &[f64], w: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(out.len(), w.cols);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let wrow = w.row(k);
        for (o, &wkj) in out.iter_mut().zip(wrow) {
            *o += xk * wkj;
        }
    }
}

/// `out += g · Wᵀ` for a row vector `g` (len = W.cols).
pub(crate) fn vec_mat_t_acc(g: &[f64], w: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(g.len(), w.cols);
    debug_assert_eq!(out.len(), w.rows);
    for (k, o) in out.iter_mut().enumerate() {
        *o += dot(w.row(k), g);
    }
}

/// `acc += uᵀ · v` (outer product, `acc` is len(u) × len(v)).
pub(crate) fn outer_acc(u: &[f64], v: &[f64], acc: &mut Matrix) {
    debug_assert_eq!(acc.rows, u.len());
    debug_assert_eq!(acc.cols, v.len());
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        for (a, &vj) in acc.row_mut(i).iter_mut().zip(v) {
            *a += ui * vj;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (x, y)| s + x * y)
}
