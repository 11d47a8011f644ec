use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::{quantize_f32, WindowedDataset};

/// Adds white Gaussian noise to one modality of every item. For each item
/// the drawn noise is rescaled so that its power is exactly
/// `P_signal / 10^(snr_db / 10)`, with power the mean square over all
/// frames and features of that item's modality. `snr_db = +∞` is a no-op.
pub fn inject_noise(
    dataset: &WindowedDataset,
    modality: usize,
    snr_db: f64,
    seed: u64,
) -> Result<WindowedDataset> {
    if modality > 1 {
        return Err(Error::Argument(format!("modality index {modality}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(dataset.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Argument(format!("SNR {snr_db} dB")));
    }
    let mut out = dataset.clone();
    for (k, item) in out.items.iter_mut().enumerate() {
        let frames = item.modality_mut(modality);
        if frames.is_empty() {
            continue;
        }
        let count = frames.len() as f64;
        let p_signal = frames.as_slice().iter().map(|v| v * v).sum::<f64>() / count;
        if !(p_signal > 0.0) {
            return Err(Error::Argument(format!(
                "item {k} has zero signal power in modality {modality}"
            )));
        }
        let mut rng = Rng::derive(seed, k as u64);
        let noise: Vec<f64> = (0..frames.len()).map(|_| rng.normal()).collect();
        let p_drawn = noise.iter().map(|v| v * v).sum::<f64>() / count;
        let target = p_signal / 10f64.powf(snr_db / 10.0);
        let scale = (target / p_drawn).sqrt();
        for (v, e) in frames.as_mut_slice().iter_mut().zip(&noise) {
            *v += scale * e;
        }
        quantize_f32(frames);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SequencePair;
    use crate::numerics::Matrix;

    fn dataset(t_len: usize, n: usize) -> WindowedDataset {
        let mut rng = Rng::new(5);
        let mut mk = |c| {
            let data = (0..t_len * c)
                .map(|_| (rng.normal() as f32) as f64)
                .collect();
            Matrix::from_vec(t_len, c, data).unwrap()
        };
        let x = mk(4);
        let y = mk(n);
        WindowedDataset::from_items(vec![SequencePair::new(x, y, Some(0)).unwrap()], 1).unwrap()
    }

    fn noise_power(a: &WindowedDataset, b: &WindowedDataset, modality: usize) -> f64 {
        let (p, q) = (a.items[0].modality(modality), b.items[0].modality(modality));
        p.as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            / p.len() as f64
    }

    #[test]
    fn infinite_snr_is_identity() {
        let d = dataset(10, 3);
        assert_eq!(inject_noise(&d, 1, f64::INFINITY, 1).unwrap(), d);
    }

    #[test]
    fn zero_db_matches_signal_power() {
        let d = dataset(1000, 12);
        let noisy = inject_noise(&d, 1, 0.0, 3).unwrap();
        let y = &d.items[0].y;
        let p_signal = y.as_slice().iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let p_noise = noise_power(&d, &noisy, 1);
        assert!(
            (p_noise / p_signal - 1.0).abs() < 0.01,
            "{p_noise} vs {p_signal}"
        );
        assert_eq!(noisy.items[0].x, d.items[0].x);
    }

    #[test]
    fn seeds_change_noise_not_power() {
        let d = dataset(1000, 12);
        let a = inject_noise(&d, 1, 0.0, 1).unwrap();
        let b = inject_noise(&d, 1, 0.0, 2).unwrap();
        assert_ne!(a, b);
        let (pa, pb) = (noise_power(&d, &a, 1), noise_power(&d, &b, 1));
        assert!((pa / pb - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_power_rejected() {
        let item = SequencePair::new(Matrix::zeros(4, 2), Matrix::zeros(4, 2), None).unwrap();
        let d = WindowedDataset::from_items(vec![item], 1).unwrap();
        assert!(inject_noise(&d, 0, 0.0, 1).is_err());
    }
}
