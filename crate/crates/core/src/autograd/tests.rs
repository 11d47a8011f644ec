use super::*;
use crate::encoder::Recurrence;
use crate::numerics::finite_diff_gradient;
use crate::objective::{composite_loss, Preset};
use crate::params::Dims;

const TOY: Dims = Dims { m: 3, n: 2, d: 4 };

fn check(config: &ModelConfig, seed: u64) -> GradCheckReport {
    grad_check(TOY, 3, 3, config, seed, 1e-5, 1e-4).unwrap()
}

#[test]
fn every_preset_matches_finite_differences() {
    for preset in Preset::ALL {
        for seed in [1, 2, 3] {
            let report = check(&preset.config(), seed);
            assert!(report.pass, "{preset} seed {seed}\n{report}");
        }
    }
}

#[test]
fn architecture_variants_match_finite_differences() {
    let mut config = Preset::CorrDw.config();
    config.recurrence = Recurrence::PerModality;
    assert!(check(&config, 4).pass);
    config.decode_order = crate::decoder::DecodeOrder::Forward;
    config.beta = 0.3;
    config.lambda = 0.7;
    let report = check(&config, 5);
    assert!(report.pass, "{report}");
}

#[test]
fn two_unit_toy_model() {
    let dims = Dims::new(2, 2, 2);
    let report = grad_check(dims, 2, 2, &Preset::CorrDw.config(), 7, 1e-5, 1e-4).unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn corrupted_block_is_reported() {
    let config = Preset::CorrDw.config();
    let (params, items) = random_instance(TOY, 3, 3, 7);
    let fwd = composite_loss(&items, &params, &config).unwrap();
    let mut grads = backward(&items, &params, &config, &fwd).unwrap();
    grads
        .encoder
        .uz
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = -*v);
    let report = grad_check_with(&params, &items, &config, &grads, 1e-5, 1e-4).unwrap();
    assert!(!report.pass);
    let failing: Vec<_> = report.failing().map(|b| b.name.as_str()).collect();
    assert_eq!(failing, vec!["enc.uz"]);
}

#[test]
fn correlation_gradient_matches_finite_differences() {
    let mut rng = crate::numerics::Rng::new(3);
    let mut h1 = Matrix::zeros(5, 3);
    let mut h2 = Matrix::zeros(5, 3);
    for v in h1.as_mut_slice().iter_mut().chain(h2.as_mut_slice()) {
        *v = rng.normal();
    }
    let rows = |m: &Matrix| (0..m.rows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
    let corr = |a: &Matrix, b: &Matrix| {
        let (ra, rb) = (rows(a), rows(b));
        let ra: Vec<&[f64]> = ra.iter().map(|r| r.as_slice()).collect();
        let rb: Vec<&[f64]> = rb.iter().map(|r| r.as_slice()).collect();
        correlation_with_grad(&ra, &rb)
    };
    let (_, g1, g2) = corr(&h1, &h2);
    let n1 = finite_diff_gradient(|m| Ok(corr(m, &h2).0), &h1, 1e-5).unwrap();
    let n2 = finite_diff_gradient(|m| Ok(corr(&h1, m).0), &h2, 1e-5).unwrap();
    for i in 0..5 {
        for j in 0..3 {
            assert!((g1[i][j] - n1.get(i, j)).abs() < 1e-6);
            assert!((g2[i][j] - n2.get(i, j)).abs() < 1e-6);
        }
    }
    // A batch-constant shift of H1 has zero directional derivative.
    for j in 0..3 {
        let s: f64 = (0..5).map(|i| g1[i][j]).sum();
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn zero_gradient_at_perfect_reconstruction() {
    let dims = Dims::new(2, 3, 3);
    let params = ModelParams::zeros(dims);
    let items: Vec<_> = (0..2)
        .map(|_| SequencePair {
            x: Matrix::zeros(4, 2),
            y: Matrix::zeros(4, 3),
            label: None,
        })
        .collect();
    let mut config = Preset::All.config();
    config.lambda = 0.0;
    let fwd = composite_loss(&items, &params, &config).unwrap();
    assert_eq!(fwd.breakdown.total, 0.0);
    let g = backward(&items, &params, &config, &fwd).unwrap();
    assert_eq!(g.squared_norm(), 0.0);
}

#[test]
fn stale_traces_are_rejected() {
    let config = Preset::Corr.config();
    let (mut params, items) = random_instance(TOY, 3, 3, 1);
    let fwd = composite_loss(&items, &params, &config).unwrap();
    assert!(matches!(
        backward(&items[..2], &params, &config, &fwd),
        Err(Error::Consistency(_))
    ));
    assert!(matches!(
        backward(&items, &params, &Preset::Fused.config(), &fwd),
        Err(Error::Consistency(_))
    ));
    params.encoder.ur.as_mut_slice()[0] += 0.1;
    assert!(matches!(
        backward(&items, &params, &config, &fwd),
        Err(Error::Consistency(_))
    ));
}

#[test]
fn backward_is_deterministic() {
    let config = Preset::CorrDw.config();
    let (params, items) = random_instance(Dims::new(5, 4, 6), 5, 8, 9);
    let fwd = composite_loss(&items, &params, &config).unwrap();
    let a = backward(&items, &params, &config, &fwd).unwrap();
    let b = backward(&items, &params, &config, &fwd).unwrap();
    assert_eq!(a, b);
}
