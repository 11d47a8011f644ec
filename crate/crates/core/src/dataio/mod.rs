//! Sequence containers, windowing and preprocessing, the synthetic
//! two-modality benchmark, noise injection, and the CRNS dataset format.

mod format;
mod noise;
mod pca;
mod synth;

pub use format::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, CRNS_MAGIC, CRNS_VERSION,
};
pub use noise::inject_noise;
pub use pca::{pca_whiten, PcaTransform};
pub use synth::{synth_generate, SynthSpec};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Two time-aligned modalities (`T × m` and `T × n`) with an optional class.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub x: Matrix,
    pub y: Matrix,
    pub label: Option<usize>,
}

impl SequencePair {
    pub fn new(x: Matrix, y: Matrix, label: Option<usize>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!(
                "modalities have {} and {} frames",
                x.rows(),
                y.rows()
            )));
        }
        Ok(SequencePair { x, y, label })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn modality(&self, i: usize) -> &Matrix {
        if i == 0 {
            &self.x
        } else {
            &self.y
        }
    }

    pub fn modality_mut(&mut self, i: usize) -> &mut Matrix {
        if i == 0 {
            &mut self.x
        } else {
            &mut self.y
        }
    }
}

/// Fixed-length windows, each remembering the source sequence it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub items: Vec<SequencePair>,
    pub window: usize,
    pub stride: usize,
    pub provenance: Vec<usize>,
}

impl WindowedDataset {
    /// Wraps items that must all share `(window, m, n)`.
    pub fn from_items(items: Vec<SequencePair>, stride: usize) -> Result<Self> {
        let window = items.first().map_or(0, |i| i.len());
        if let Some(first) = items.first() {
            let (m, n) = (first.x.cols(), first.y.cols());
            for (k, it) in items.iter().enumerate() {
                if it.len() != window || it.x.cols() != m || it.y.cols() != n {
                    return Err(Error::Shape(format!(
                        "item {k} is {}x{}/{}x{}, expected {window}x{m}/{window}x{n}",
                        it.x.rows(),
                        it.x.cols(),
                        it.y.rows(),
                        it.y.cols()
                    )));
                }
            }
        }
        let provenance = (0..items.len()).collect();
        Ok(WindowedDataset {
            items,
            window,
            stride,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.items
            .first()
            .map_or((0, 0), |i| (i.x.cols(), i.y.cols()))
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.items
            .iter()
            .filter_map(|i| i.label)
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Per class, the first `train_per_class` items (in dataset order) go
    /// to the first split and the rest to the second. Unlabelled items are
    /// placed in the second split.
    pub fn split_per_class(&self, train_per_class: usize) -> (WindowedDataset, WindowedDataset) {
        let mut seen = vec![0usize; self.num_classes()];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let (mut pa, mut pb) = (Vec::new(), Vec::new());
        for (item, &prov) in self.items.iter().zip(&self.provenance) {
            let to_train = match item.label {
                Some(l) => {
                    seen[l] += 1;
                    seen[l] <= train_per_class
                }
                None => false,
            };
            if to_train {
                a.push(item.clone());
                pa.push(prov);
            } else {
                b.push(item.clone());
                pb.push(prov);
            }
        }
        let mk = |items, provenance| WindowedDataset {
            items,
            window: self.window,
            stride: self.stride,
            provenance,
        };
        (mk(a, pa), mk(b, pb))
    }
}

/// Cuts windows of `len` frames starting at `0, stride, 2·stride, …` while
/// they fit. Sequences shorter than `len` yield no windows.
pub fn window(seq: &SequencePair, len: usize, stride: usize) -> Result<Vec<SequencePair>> {
    if len == 0 || stride == 0 {
        return Err(Error::Argument(format!(
            "window length {len} and stride {stride} must be positive"
        )));
    }
    if seq.len() < len {
        return Ok(Vec::new());
    }
    let slice = |m: &Matrix, start: usize| {
        let data = m.as_slice()[start * m.cols()..(start + len) * m.cols()].to_vec();
        Matrix::from_vec(len, m.cols(), data)
    };
    (0..=seq.len() - len)
        .step_by(stride)
        .map(|s| {
            Ok(SequencePair {
                x: slice(&seq.x, s)?,
                y: slice(&seq.y, s)?,
                label: seq.label,
            })
        })
        .collect()
}

/// Windows every sequence and records which source each window came from.
pub fn window_all(seqs: &[SequencePair], len: usize, stride: usize) -> Result<WindowedDataset> {
    let mut items = Vec::new();
    let mut provenance = Vec::new();
    for (k, s) in seqs.iter().enumerate() {
        for w in window(s, len, stride)? {
            items.push(w);
            provenance.push(k);
        }
    }
    Ok(WindowedDataset {
        items,
        window: len,
        stride,
        provenance,
    })
}

/// Moving average over frames `[t - w/2, t + (w-1)/2]`, truncated at the
/// sequence edges.
pub fn smooth(frames: &Matrix, width: usize) -> Result<Matrix> {
    if width == 0 {
        return Err(Error::Argument("smoothing width must be at least 1".into()));
    }
    let t_len = frames.rows();
    let mut out = Matrix::zeros(t_len, frames.cols());
    for t in 0..t_len {
        let lo = t.saturating_sub(width / 2);
        let hi = (t + (width - 1) / 2).min(t_len.saturating_sub(1));
        let count = (hi - lo + 1) as f64;
        let row = out.row_mut(t);
        for s in lo..=hi {
            for (o, v) in row.iter_mut().zip(frames.row(s)) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|v| *v /= count);
    }
    Ok(out)
}

/// Concatenates every `k` consecutive frames into one; trailing frames that
/// do not fill a group are dropped.
pub fn stack_frames(frames: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::Argument("stack size must be at least 1".into()));
    }
    let groups = frames.rows() / k;
    let data = frames.as_slice()[..groups * k * frames.cols()].to_vec();
    Matrix::from_vec(groups, k * frames.cols(), data)
}

/// Rounds every value to the nearest `f32`, the storage precision of CRNS.
pub fn quantize_f32(m: &mut Matrix) {
    m.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = *v as f32 as f64);
}
