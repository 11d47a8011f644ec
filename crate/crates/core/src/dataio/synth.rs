//! Seeded two-modality benchmark.
//!
//! Each class owns a set of latent oscillators `z_t ∈ R^4` (class-specific
//! frequencies and phases; every item starts at a random time offset and
//! amplitude). Both modalities observe the latent through fixed linear maps
//! `P` and `Q`, where `Q` reuses the first rows of `P` so the shared
//! features are positively correlated. On top of that each modality carries
//! a static class offset that encodes only one bit of the label:
//! modality x encodes `label % 2`, modality y encodes `(label / 2) % 2`.
//! A single modality therefore reveals the class only through its
//! (nonlinear) oscillation frequency, while the two offsets together
//! identify it linearly.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

use super::{quantize_f32, window, SequencePair, WindowedDataset};

const LATENT: usize = 4;
const OFFSET_SCALE: f64 = 0.7;
const SHARED_WEIGHT: f64 = 0.8;
const PRIVATE_WEIGHT: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub frames: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            per_class: 75,
            frames: 8,
            dim_x: 20,
            dim_y: 12,
            noise: 0.5,
            seed: 1,
        }
    }
}

struct World {
    p: Matrix,
    q: Matrix,
    freq: Vec<[f64; LATENT]>,
    phase: Vec<[f64; LATENT]>,
    offset_x: Vec<f64>,
    offset_y: Vec<f64>,
}

impl World {
    fn new(spec: &SynthSpec) -> World {
        let mut rng = Rng::derive(spec.seed, 0);
        let norm = 1.0 / (LATENT as f64).sqrt();
        let gaussian = |rows: usize, cols: usize, s: f64, rng: &mut Rng| {
            let data = (0..rows * cols).map(|_| s * rng.normal()).collect();
            Matrix::from_vec(rows, cols, data).expect("finite")
        };
        let p = gaussian(spec.dim_x, LATENT, norm, &mut rng);
        let private = gaussian(spec.dim_y, LATENT, norm, &mut rng);
        let mut q = Matrix::zeros(spec.dim_y, LATENT);
        for i in 0..spec.dim_y {
            for j in 0..LATENT {
                let shared = if i < spec.dim_x { p.get(i, j) } else { 0.0 };
                q.set(
                    i,
                    j,
                    SHARED_WEIGHT * shared + PRIVATE_WEIGHT * private.get(i, j),
                );
            }
        }
        let k = spec.classes;
        let mut freq = Vec::with_capacity(k);
        let mut phase = Vec::with_capacity(k);
        for c in 0..k {
            let base = 0.4 + 1.2 * c as f64 / (k - 1) as f64;
            let mut f = [0.0; LATENT];
            let mut ph = [0.0; LATENT];
            for j in 0..LATENT {
                f[j] = base * (1.0 + 0.15 * j as f64) * rng.uniform(0.95, 1.05);
                ph[j] = rng.uniform(0.0, std::f64::consts::TAU);
            }
            freq.push(f);
            phase.push(ph);
        }
        let offset_x = (0..spec.dim_x)
            .map(|_| OFFSET_SCALE * rng.normal())
            .collect();
        let offset_y = (0..spec.dim_y)
            .map(|_| OFFSET_SCALE * rng.normal())
            .collect();
        World {
            p,
            q,
            freq,
            phase,
            offset_x,
            offset_y,
        }
    }
}

/// Generates `classes × per_class` labelled windows of `frames` frames.
/// Items cycle through the classes (`label = index % classes`).
pub fn synth_generate(spec: &SynthSpec) -> Result<WindowedDataset> {
    if spec.classes < 2 {
        return Err(Error::Argument("need at least 2 classes".into()));
    }
    if spec.dim_x < 2 || spec.dim_y < 2 || spec.frames < 2 {
        return Err(Error::Argument(
            "dimensions and frames must be at least 2".into(),
        ));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::Argument(format!("noise sigma {}", spec.noise)));
    }
    let world = World::new(spec);
    let t_len = spec.frames;
    let total = spec.classes * spec.per_class;
    let mut items = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    for idx in 0..total {
        let label = idx % spec.classes;
        let mut rng = Rng::derive(spec.seed, 1 + idx as u64);
        let start = rng.uniform(0.0, 100.0);
        let amp = rng.uniform(0.8, 1.2);
        let sx = if label.is_multiple_of(2) { -1.0 } else { 1.0 };
        let sy = if (label / 2).is_multiple_of(2) {
            -1.0
        } else {
            1.0
        };
        let mut x = Matrix::zeros(t_len, spec.dim_x);
        let mut y = Matrix::zeros(t_len, spec.dim_y);
        for t in 0..t_len {
            let time = start + t as f64;
            let z: Vec<f64> = (0..LATENT)
                .map(|j| amp * (world.freq[label][j] * time + world.phase[label][j]).sin())
                .collect();
            for (i, v) in x.row_mut(t).iter_mut().enumerate() {
                let shared: f64 = (0..LATENT).map(|j| world.p.get(i, j) * z[j]).sum();
                *v = shared + sx * world.offset_x[i] + spec.noise * rng.normal();
            }
            for (i, v) in y.row_mut(t).iter_mut().enumerate() {
                let shared: f64 = (0..LATENT).map(|j| world.q.get(i, j) * z[j]).sum();
                *v = shared + sy * world.offset_y[i] + spec.noise * rng.normal();
            }
        }
        quantize_f32(&mut x);
        quantize_f32(&mut y);
        let source = SequencePair::new(x, y, Some(label))?;
        for w in window(&source, t_len, 2)? {
            items.push(w);
            provenance.push(idx);
        }
    }
    Ok(WindowedDataset {
        items,
        window: t_len,
        stride: 2,
        provenance,
    })
}
