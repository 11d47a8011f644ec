//! One test per acceptance criterion. Each prints a PASS/FAIL line straight
//! to stdout (bypassing the test harness capture) and then asserts.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use corrnn_core::autograd::grad_check;
use corrnn_core::dataio::{
    decode_dataset, encode_dataset, inject_noise, synth_generate, SynthSpec, WindowedDataset,
};
use corrnn_core::encoder::{
    batch_correlation, dynamic_weights, encode_single_modality, gru_step, normalized_correlation,
    weights_from_scores, EncoderParams, EncoderState, Recurrence, EPS_CORR, UNWEIGHTED,
};
use corrnn_core::evalkit::{
    baseline_concat, raw_modality_accuracy, run_setting, ClassifierConfig, SettingSpec,
};
use corrnn_core::numerics::{Matrix, Rng};
use corrnn_core::objective::{Model, Preset};
use corrnn_core::params::{Dims, ModelParams};
use corrnn_core::trainer::{decode_checkpoint, encode_checkpoint, train, Precision, TrainConfig};

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {criterion}: {verdict} ({detail})");
    let _ = out.flush();
}

fn check(criterion: &str, pass: bool, detail: String) {
    report(criterion, pass, &detail);
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn median(mut v: Vec<i64>) -> i64 {
    v.sort_unstable();
    v[v.len() / 2]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn criterion_01_gradient_exactness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for preset in Preset::ALL {
        for seed in [1, 2, 3] {
            let r =
                grad_check(Dims::new(3, 2, 4), 3, 3, &preset.config(), seed, 1e-5, 1e-4).unwrap();
            worst = worst.max(r.max_rel_err);
            if !r.pass {
                failures.push(format!("{preset}/seed {seed}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    check(
        "1 gradient exactness",
        pass,
        format!(
            "max rel err {worst:.2e}, failing {failures:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Scores from random vectors and matrices with |alpha| < 15.
fn weight_draws() -> Vec<[f64; 2]> {
    let mut rng = Rng::new(2024);
    let unit = |rng: &mut Rng, len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
    };
    (0..100_000)
        .map(|_| {
            let x = unit(&mut rng, 3);
            let y = unit(&mut rng, 2);
            let h = unit(&mut rng, 4);
            let a1 = Matrix::from_vec(3, 4, unit(&mut rng, 12)).unwrap();
            let a2 = Matrix::from_vec(2, 4, unit(&mut rng, 8)).unwrap();
            dynamic_weights(&x, &y, &h, &a1, &a2).unwrap().alpha
        })
        .collect()
}

#[test]
fn criterion_02_weighting_algebra() {
    let draws = weight_draws();
    let mut worst_sum = 0.0f64;
    let mut outside = 0usize;
    for alpha in &draws {
        let w = weights_from_scores(*alpha).w;
        worst_sum = worst_sum.max((w[0] + w[1] - 1.0).abs());
        if !w.iter().all(|&v| v > 0.0 && v < 1.0) {
            outside += 1;
        }
    }
    let pass = worst_sum <= f64::EPSILON && outside == 0;
    check(
        "2 weighting algebra (sum and range)",
        pass,
        format!(
            "{} draws, max |w1+w2-1| = {worst_sum:.1e}, {outside} outside (0,1)",
            draws.len()
        ),
    );
}

#[test]
fn criterion_02_weighting_shift_invariance() {
    let draws = weight_draws();
    let mut rng = Rng::new(77);
    let mut worst = 0.0f64;
    for alpha in &draws {
        let c = rng.uniform(-15.0, 15.0);
        let w = weights_from_scores(*alpha).w;
        let shifted = weights_from_scores([alpha[0] + c, alpha[1] + c]).w;
        worst = worst.max(max_abs_diff(&w, &shifted));
    }
    check(
        "2 weighting algebra (common shift)",
        worst <= 1e-12,
        format!("max |w(alpha+c) - w(alpha)| = {worst:.3e}"),
    );
}

fn corr_oracle(a: &Matrix, b: &Matrix) -> f64 {
    let (n, d) = a.shape();
    let flat_centred = |m: &Matrix| -> Vec<f64> {
        let means: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64)
            .collect();
        (0..n)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) - means[j])
            .collect()
    };
    let (u, v) = (flat_centred(a), flat_centred(b));
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
    dot(&u, &v) / ((dot(&u, &u) * dot(&v, &v)).sqrt() + EPS_CORR)
}

#[test]
fn criterion_03_correlation_bounds_and_oracle() {
    let mut rng = Rng::new(3);
    let (mut out_of_bounds, mut worst_oracle, mut worst_unit) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = 2 + rng.below(15);
        let d = 1 + rng.below(8);
        let scale = rng.uniform(-3.0, 3.0).exp();
        let a = random_matrix(n, d, scale, &mut rng);
        let mut b = random_matrix(n, d, scale, &mut rng);
        // Mix in a shared component so strong correlations occur too.
        let mix = rng.uniform(-1.0, 1.0);
        for (bv, av) in b.as_mut_slice().iter_mut().zip(a.as_slice()) {
            *bv = mix * av + (1.0 - mix.abs()) * *bv;
        }
        let rho = batch_correlation(&a, &b).unwrap();
        if !(-1.0001..=1.0001).contains(&rho) {
            out_of_bounds += 1;
        }
        worst_oracle = worst_oracle.max((rho - corr_oracle(&a, &b)).abs());

        // Identical and negated batches at unit scale (the centred energy
        // must dominate the stabilising constant).
        let n = 4 + rng.below(13);
        let d = 2 + rng.below(7);
        let h = random_matrix(n, d, 1.0, &mut rng);
        let neg = Matrix::from_vec(n, d, h.as_slice().iter().map(|v| -v).collect()).unwrap();
        worst_unit = worst_unit
            .max((batch_correlation(&h, &h).unwrap() - 1.0).abs())
            .max((batch_correlation(&h, &neg).unwrap() + 1.0).abs());
    }
    let pass = out_of_bounds == 0 && worst_oracle <= 1e-12 && worst_unit <= 1e-6;
    check(
        "3 correlation bounds and oracle",
        pass,
        format!("{out_of_bounds} out of bounds, oracle gap {worst_oracle:.1e}, |rho -+ 1| {worst_unit:.1e}"),
    );
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar-loop multimodal step: modality gates and candidates against the
/// fused previous state, fused gates on weighted input sums.
fn oracle_step(x: &[f64], y: &[f64], hp: &[f64], p: &EncoderParams, w: [f64; 2]) -> [Vec<f64>; 3] {
    let d = hp.len();
    let inputs = [x, y];
    let affine = |i: usize, wm: &Matrix, b: &Matrix, k: usize| -> f64 {
        b.get(0, k)
            + (0..inputs[i].len())
                .map(|j| inputs[i][j] * wm.get(j, k))
                .sum::<f64>()
    };
    let recur =
        |u: &Matrix, v: &[f64], k: usize| -> f64 { (0..d).map(|j| v[j] * u.get(j, k)).sum() };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..2 {
        let mw = &p.inputs[i];
        let mut h = vec![0.0; d];
        for k in 0..d {
            let z = sig(affine(i, &mw.wz, &mw.bz, k) + recur(&p.uz, hp, k));
            let rh: Vec<f64> = (0..d)
                .map(|j| sig(affine(i, &mw.wr, &mw.br, j) + recur(&p.ur, hp, j)) * hp[j])
                .collect();
            let cand = (affine(i, &mw.wh, &mw.bh, k) + recur(&p.uh, &rh, k)).tanh();
            h[k] = (1.0 - z) * hp[k] + z * cand;
        }
        out.push(h);
    }
    let weighted = |g: usize, k: usize| -> f64 {
        (0..2)
            .map(|i| {
                let mw = &p.inputs[i];
                let (wm, b) = [(&mw.wr, &mw.br), (&mw.wz, &mw.bz), (&mw.wh, &mw.bh)][g];
                w[i] * affine(i, wm, b, k)
            })
            .sum()
    };
    let mut h = vec![0.0; d];
    for k in 0..d {
        let z = sig(weighted(1, k) + recur(&p.uz, hp, k));
        let rh: Vec<f64> = (0..d)
            .map(|j| sig(weighted(0, j) + recur(&p.ur, hp, j)) * hp[j])
            .collect();
        let cand = (weighted(2, k) + recur(&p.uh, &rh, k)).tanh();
        h[k] = (1.0 - z) * hp[k] + z * cand;
    }
    let h2 = out.pop().unwrap();
    let h1 = out.pop().unwrap();
    [h, h1, h2]
}

/// Textbook single-input GRU over a whole sequence.
fn unimodal_gru(xs: &Matrix, p: &EncoderParams, which: usize) -> Vec<f64> {
    let d = p.hidden();
    let mw = &p.inputs[which];
    let mut h = vec![0.0; d];
    for t in 0..xs.rows() {
        let x = xs.row(t);
        let lin = |wm: &Matrix, b: &Matrix, u: &Matrix, hv: &[f64], k: usize| -> f64 {
            b.get(0, k)
                + (0..x.len()).map(|j| x[j] * wm.get(j, k)).sum::<f64>()
                + (0..d).map(|j| hv[j] * u.get(j, k)).sum::<f64>()
        };
        let r: Vec<f64> = (0..d)
            .map(|k| sig(lin(&mw.wr, &mw.br, &p.ur, &h, k)))
            .collect();
        let z: Vec<f64> = (0..d)
            .map(|k| sig(lin(&mw.wz, &mw.bz, &p.uz, &h, k)))
            .collect();
        let rh: Vec<f64> = (0..d).map(|k| r[k] * h[k]).collect();
        let cand: Vec<f64> = (0..d)
            .map(|k| lin(&mw.wh, &mw.bh, &p.uh, &rh, k).tanh())
            .collect();
        h = (0..d)
            .map(|k| (1.0 - z[k]) * h[k] + z[k] * cand[k])
            .collect();
    }
    h
}

#[test]
fn criterion_04_gru_oracle_equivalence() {
    let mut rng = Rng::new(4);
    let (mut worst_step, mut worst_uni) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let dims = Dims::new(1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(6));
        let params = ModelParams::random(dims, 1.0, &mut rng).encoder;
        let vec = |rng: &mut Rng, len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
        };
        let x = vec(&mut rng, dims.m);
        let y = vec(&mut rng, dims.n);
        let prev = EncoderState {
            h: vec(&mut rng, dims.d),
            h1: vec(&mut rng, dims.d),
            h2: vec(&mut rng, dims.d),
            t: 0,
        };
        let w = if k % 2 == 0 {
            dynamic_weights(&x, &y, &prev.h, &params.a[0], &params.a[1])
                .unwrap()
                .w
        } else {
            UNWEIGHTED
        };
        let (state, _) = gru_step(&x, &y, &prev, &params, w, Recurrence::Fused).unwrap();
        let [h, h1, h2] = oracle_step(&x, &y, &prev.h, &params, w);
        worst_step = worst_step
            .max(max_abs_diff(&state.h, &h))
            .max(max_abs_diff(&state.h1, &h1))
            .max(max_abs_diff(&state.h2, &h2));

        let which = k % 2;
        let t_len = 1 + rng.below(6);
        let xs = random_matrix(t_len, dims.input_width(which), 1.0, &mut rng);
        let (single, _) = encode_single_modality(&xs, which, &params, Recurrence::Fused).unwrap();
        worst_uni = worst_uni.max(max_abs_diff(&single.h, &unimodal_gru(&xs, &params, which)));
    }
    let pass = worst_step <= 1e-12 && worst_uni <= 1e-12;
    check(
        "4 GRU oracle equivalence",
        pass,
        format!("step gap {worst_step:.1e}, single-modality gap {worst_uni:.1e}"),
    );
}

const BENCH_PRESETS: [Preset; 4] = [Preset::Fused, Preset::All, Preset::Corr, Preset::CorrDw];
const HIDDEN: usize = 32;
const BATCH: usize = 20;
const NOISE_SEED: u64 = 99;

struct PresetRun {
    normalized_correlation: f64,
    /// Correct test predictions, out of `test_len`.
    fusion: i64,
    cross_x: i64,
    noisy_fusion: i64,
    first_loss: f64,
    last_loss: f64,
}

struct SeedRun {
    seed: u64,
    test_len: usize,
    presets: BTreeMap<&'static str, PresetRun>,
    raw: [i64; 2],
    baseline: i64,
}

struct Bench {
    runs: Vec<SeedRun>,
    elapsed: Duration,
}

fn correct(accuracy: f64, n: usize) -> i64 {
    (accuracy * n as f64).round() as i64
}

fn bench_seed(seed: u64) -> SeedRun {
    let ds = synth_generate(&SynthSpec {
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    let (tr, te): (WindowedDataset, WindowedDataset) = ds.split_per_class(50);
    assert_eq!((tr.len(), te.len()), (200, 100));
    let noisy = inject_noise(&te, 1, 0.0, NOISE_SEED).unwrap();
    let tc = TrainConfig {
        epochs: 30,
        batch_size: BATCH,
        hidden: HIDDEN,
        seed,
        ..TrainConfig::default()
    };
    let clf = ClassifierConfig::default();
    let n = te.len();
    let presets = BENCH_PRESETS
        .into_iter()
        .map(|p| {
            let out = train(&tr, &p.config(), &tc).unwrap();
            let m = &out.model;
            let run = PresetRun {
                normalized_correlation: normalized_correlation(m, &te.items, BATCH).unwrap(),
                fusion: correct(
                    run_setting(m, &tr, &te, SettingSpec::FUSION, 1, clf).unwrap(),
                    n,
                ),
                cross_x: correct(
                    run_setting(m, &tr, &te, SettingSpec::CROSS_X, 1, clf).unwrap(),
                    n,
                ),
                noisy_fusion: correct(
                    run_setting(m, &tr, &noisy, SettingSpec::FUSION, 1, clf).unwrap(),
                    n,
                ),
                first_loss: out.log[0].total,
                last_loss: out.log.last().unwrap().total,
            };
            (p.name(), run)
        })
        .collect();
    SeedRun {
        seed,
        test_len: n,
        presets,
        raw: [0, 1].map(|i| correct(raw_modality_accuracy(&tr, &te, i, clf).unwrap(), n)),
        baseline: correct(baseline_concat(&tr, &te, HIDDEN, &tc, clf).unwrap(), n),
    }
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let start = Instant::now();
        let runs = std::thread::scope(|s| {
            let handles: Vec<_> = [1, 2, 3]
                .map(|seed| s.spawn(move || bench_seed(seed)))
                .into();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        Bench {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_05_correlation_ablation() {
    let b = bench();
    let mut pass = b.elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for r in &b.runs {
        let corr = r.presets["corr"].normalized_correlation;
        let fused = r.presets["fused"].normalized_correlation;
        pass &= corr >= fused + 0.10;
        parts.push(format!("seed {}: {corr:.3} vs {fused:.3}", r.seed));
    }
    parts.push(format!("benchmark {:.1}s", b.elapsed.as_secs_f64()));
    check("5 correlation ablation", pass, parts.join(", "));
}

#[test]
fn criterion_06_fusion_benefit() {
    let b = bench();
    let test_len = b.runs[0].test_len as i64;
    // One percentage point of the test split, in items.
    let point = test_len / 100;
    let ours = median(b.runs.iter().map(|r| r.presets["corr-dw"].fusion).collect());
    let raw_x = median(b.runs.iter().map(|r| r.raw[0]).collect());
    let raw_y = median(b.runs.iter().map(|r| r.raw[1]).collect());
    let base = median(b.runs.iter().map(|r| r.baseline).collect());
    let pass = ours >= raw_x && ours >= raw_y && ours >= base - point;
    check(
        "6 fusion benefit",
        pass,
        format!("median correct of {test_len}: corr-dw {ours}, raw x {raw_x}, raw y {raw_y}, baseline {base}"),
    );
}

#[test]
fn criterion_07_cross_modality_benefit() {
    let b = bench();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &b.runs {
        let five_points = 5 * r.test_len as i64 / 100;
        let ours = r.presets["corr-dw"].cross_x;
        pass &= ours >= r.raw[0] + five_points;
        parts.push(format!("seed {}: {ours} vs raw {}", r.seed, r.raw[0]));
    }
    check(
        "7 cross-modality benefit",
        pass,
        format!("correct of {}: {}", b.runs[0].test_len, parts.join(", ")),
    );
}

#[test]
fn criterion_08_noise_robustness() {
    let b = bench();
    let drop = |name: &str| -> Vec<i64> {
        b.runs
            .iter()
            .map(|r| r.presets[name].fusion - r.presets[name].noisy_fusion)
            .collect()
    };
    let (ours, all) = (drop("corr-dw"), drop("all"));
    let pass = median(ours.clone()) <= median(all.clone());
    check(
        "8 noise robustness",
        pass,
        format!("items lost at 0 dB: corr-dw {ours:?} vs all {all:?}"),
    );
}

#[test]
fn criterion_09_training_sanity() {
    let b = bench();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &b.runs {
        let f = &r.presets["fused"];
        let ratio = f.last_loss / f.first_loss;
        pass &= ratio < 0.5;
        parts.push(format!(
            "seed {}: {:.3} -> {:.3} ({ratio:.2})",
            r.seed, f.first_loss, f.last_loss
        ));
    }
    check("9 training sanity", pass, parts.join(", "));
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

#[test]
fn criterion_10_determinism_and_formats() {
    let spec = SynthSpec {
        per_class: 12,
        ..SynthSpec::default()
    };
    let run = || {
        let ds = synth_generate(&spec).unwrap();
        let data = encode_dataset(&ds).unwrap();
        let (tr, te) = ds.split_per_class(8);
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&tr, &Preset::CorrDw.config(), &tc).unwrap();
        let ckpt = encode_checkpoint(&out.model, &out.optimizer, Precision::F64).unwrap();
        let clf = ClassifierConfig::default();
        let acc = run_setting(&out.model, &tr, &te, SettingSpec::FUSION, 3, clf).unwrap();
        let rho = normalized_correlation(&out.model, &te.items, 8).unwrap();
        (data, ckpt, acc.to_bits(), rho.to_bits(), out)
    };
    let (data_a, ckpt_a, acc_a, rho_a, out) = run();
    let (data_b, ckpt_b, acc_b, rho_b, _) = run();
    let reproducible = data_a == data_b && ckpt_a == ckpt_b && acc_a == acc_b && rho_a == rho_b;

    let ds = decode_dataset(&data_a).unwrap();
    let crns_round_trip =
        encode_dataset(&ds).unwrap() == data_a && ds.items == synth_generate(&spec).unwrap().items;
    let (model, opt): (Model, _) = decode_checkpoint(&ckpt_a).unwrap();
    let crnm_round_trip = model == out.model && opt == out.optimizer;
    let f32_bytes = encode_checkpoint(&out.model, &out.optimizer, Precision::F32).unwrap();
    let (m32, o32) = decode_checkpoint(&f32_bytes).unwrap();
    let crnm32_round_trip = encode_checkpoint(&m32, &o32, Precision::F32).unwrap() == f32_bytes;

    let golden_crns = fixture("tiny.crns");
    let golden = decode_dataset(&golden_crns)
        .map(|d| {
            d.items[0].x.as_slice() == [0.5, -1.25, 2.0, 0.0]
                && encode_dataset(&d).unwrap() == golden_crns
        })
        .unwrap_or(false);
    let golden = golden
        && [
            ("tiny64.crnm", Precision::F64),
            ("tiny32.crnm", Precision::F32),
        ]
        .into_iter()
        .all(|(name, p)| {
            let bytes = fixture(name);
            decode_checkpoint(&bytes).is_ok_and(|(m, o)| {
                o.step == 3
                    && m.params.encoder.ur.as_slice() == [12.0 * 0.125 - 2.0]
                    && encode_checkpoint(&m, &o, p).unwrap() == bytes
            })
        });

    let pass = reproducible && crns_round_trip && crnm_round_trip && crnm32_round_trip && golden;
    check(
        "10 determinism and formats",
        pass,
        format!(
            "rerun identical {reproducible}, CRNS round trip {crns_round_trip}, CRNM round trip \
             {crnm_round_trip}/{crnm32_round_trip}, golden fixtures {golden}"
        ),
    );
}
