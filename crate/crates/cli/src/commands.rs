use std::fmt::Write as _;

use corrnn_core::autograd::{backward, grad_check_with, random_instance};
use corrnn_core::dataio::{
    inject_noise, read_dataset, synth_generate, write_dataset, SynthSpec, WindowedDataset,
};
use corrnn_core::decoder::DecodeOrder;
use corrnn_core::encoder::{normalized_correlation, Recurrence};
use corrnn_core::evalkit::{
    baseline_accuracy, evaluate_setting, train_baseline, ClassifierConfig, SettingSpec, Summary,
};
use corrnn_core::objective::{composite_loss, LossBreakdown, Model, ModelConfig, Preset};
use corrnn_core::params::Dims;
use corrnn_core::trainer::{
    load_checkpoint, save_checkpoint, train as run_training, Precision, TrainConfig,
};

use crate::{
    manifest, ConfigName, EvalArgs, Failure, GradcheckArgs, ModalityArg, OrderArg, RecurrenceArg,
    SynthArgs, TrainArgs,
};

fn write_text(path: &str, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{path}: {e}")))
}

fn with_path(path: &str) -> impl Fn(corrnn_core::Error) -> Failure + '_ {
    move |e| match e {
        corrnn_core::Error::Io(io) => Failure::Io(format!("{path}: {io}")),
        corrnn_core::Error::Format { .. } => Failure::Io(format!("{path}: {e}")),
        other => Failure::from(other),
    }
}

fn load_data(path: &str) -> Result<WindowedDataset, Failure> {
    read_dataset(path).map_err(with_path(path))
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> Result<(), Failure> {
    let spec = SynthSpec {
        classes: a.classes,
        per_class: a.per_class,
        frames: a.frames,
        dim_x: a.dim_x,
        dim_y: a.dim_y,
        noise: a.noise,
        seed: a.seed,
    };
    let ds = synth_generate(&spec)?;
    write_dataset(&ds, &a.out)?;
    manifest::write("synth", argv, a.seed, vec![a.out.clone()])?;
    println!(
        "wrote {} windows ({} classes, T={}, m={}, n={}) to {}",
        ds.len(),
        a.classes,
        a.frames,
        a.dim_x,
        a.dim_y,
        a.out
    );
    Ok(())
}

fn model_config(a: &TrainArgs, preset: Preset) -> ModelConfig {
    ModelConfig {
        beta: a.beta,
        lambda: a.lambda,
        recurrence: match a.recurrence {
            RecurrenceArg::Fused => Recurrence::Fused,
            RecurrenceArg::PerModality => Recurrence::PerModality,
        },
        decode_order: match a.decode_order {
            OrderArg::Reverse => DecodeOrder::Reverse,
            OrderArg::Forward => DecodeOrder::Forward,
        },
        ..preset.config()
    }
}

fn preset_of(name: ConfigName) -> Option<Preset> {
    match name {
        ConfigName::Baseline => None,
        ConfigName::Fused => Some(Preset::Fused),
        ConfigName::SelfRecon => Some(Preset::SelfRecon),
        ConfigName::Cross => Some(Preset::Cross),
        ConfigName::All => Some(Preset::All),
        ConfigName::Corr => Some(Preset::Corr),
        ConfigName::CorrDw => Some(Preset::CorrDw),
    }
}

fn loss_table(log: &[LossBreakdown]) -> String {
    let mut s = String::from("epoch\tl_fused\tl_self\tl_cross\tl_corr\ttotal\n");
    for (e, l) in log.iter().enumerate() {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e + 1,
            l.l_fused,
            l.l_self,
            l.l_cross,
            l.l_corr,
            l.total
        );
    }
    s
}

fn baseline_paths(prefix: &str) -> [String; 2] {
    [format!("{prefix}.x.crnm"), format!("{prefix}.y.crnm")]
}

pub fn train(a: &TrainArgs, argv: &[String]) -> Result<(), Failure> {
    let mut data = load_data(&a.data)?;
    if let Some(k) = a.train_per_class {
        data = data.split_per_class(k).0;
    }
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        base_lr: a.lr,
        eps_adapt: a.eps_adapt,
        grad_clip: a.clip,
        seed: a.seed,
        hidden: a.hidden,
    };
    let precision = if a.precision == 32 {
        Precision::F32
    } else {
        Precision::F64
    };
    let mut outputs = Vec::new();
    match preset_of(a.config) {
        None => {
            let (models, logs) = train_baseline(&data, &tc)?;
            for ((path, model), log) in baseline_paths(&a.out).iter().zip(&models).zip(&logs) {
                let opt = corrnn_core::trainer::OptimizerState::new(model.params.dims);
                save_checkpoint(model, &opt, path, precision)?;
                let log_path = format!("{path}.loss.tsv");
                write_text(&log_path, &loss_table(log))?;
                if let (Some(first), Some(last)) = (log.first(), log.last()) {
                    println!(
                        "{path}: epoch 1 total {:.6}, epoch {} total {:.6}",
                        first.total,
                        log.len(),
                        last.total
                    );
                }
                outputs.push(path.clone());
                outputs.push(log_path);
            }
        }
        Some(preset) => {
            let config = model_config(a, preset);
            let out = run_training(&data, &config, &tc)?;
            for (e, l) in out.log.iter().enumerate() {
                println!(
                    "epoch {:>3}  fused {:.6}  self {:.6}  cross {:.6}  corr {:.6}  total {:.6}",
                    e + 1,
                    l.l_fused,
                    l.l_self,
                    l.l_cross,
                    l.l_corr,
                    l.total
                );
            }
            save_checkpoint(&out.model, &out.optimizer, &a.out, precision)?;
            let log_path = format!("{}.loss.tsv", a.out);
            write_text(&log_path, &loss_table(&out.log))?;
            outputs.push(a.out.clone());
            outputs.push(log_path);
        }
    }
    manifest::write("train", argv, a.seed, outputs)?;
    Ok(())
}

/// Name of the preset whose flags match `config`, if any.
fn config_name(config: &ModelConfig) -> &'static str {
    Preset::ALL
        .into_iter()
        .find(|p| {
            let c = p.config();
            (c.use_self, c.use_cross, c.use_corr, c.use_dw)
                == (
                    config.use_self,
                    config.use_cross,
                    config.use_corr,
                    config.use_dw,
                )
        })
        .map_or("custom", |p| p.name())
}

fn check_dims(path: &str, dims: Dims, data: (usize, usize)) -> Result<(), Failure> {
    if (dims.m, dims.n) != data {
        return Err(Failure::Io(format!(
            "{path}: checkpoint expects modality widths {}/{}, data has {}/{}",
            dims.m, dims.n, data.0, data.1
        )));
    }
    Ok(())
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> Result<(), Failure> {
    let data = load_data(&a.data)?;
    let (train_set, mut test_set) = data.split_per_class(a.train_per_class);
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Failure::Usage(format!(
            "--train-per-class {} leaves an empty split ({} train, {} test)",
            a.train_per_class,
            train_set.len(),
            test_set.len()
        )));
    }
    if let Some(snr) = a.noise_snr {
        let modality = if a.noise_modality == ModalityArg::X {
            0
        } else {
            1
        };
        test_set = inject_noise(&test_set, modality, snr, a.noise_seed)?;
    }
    let setting: SettingSpec = a.setting.parse()?;
    let clf = ClassifierConfig {
        l2: a.l2,
        seed: a.seed,
    };
    let (m, n) = data.dims();
    let mut summary = Summary::default();
    summary.push("setting", setting);
    if a.config == Some(ConfigName::Baseline) {
        if setting != SettingSpec::FUSION {
            return Err(Failure::Usage(
                "the baseline is only defined for the fusion setting".into(),
            ));
        }
        let paths = baseline_paths(&a.model);
        let mut models = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let (model, _) = load_checkpoint(path).map_err(with_path(path))?;
            let want = if i == 0 { (m, 0) } else { (0, n) };
            check_dims(path, model.params.dims, want)?;
            models.push(model);
        }
        let d_b = a.baseline_dim.unwrap_or(models[0].params.dims.d);
        let models: [Model; 2] = models.try_into().expect("two baseline models");
        let acc = baseline_accuracy(&models, &train_set, &test_set, d_b, clf)?;
        summary.push("config", "baseline");
        summary.push("seed", a.seed);
        summary.push("accuracy", acc);
        summary.push("normalized_correlation", "NA");
    } else {
        let (model, _) = load_checkpoint(&a.model).map_err(with_path(&a.model))?;
        check_dims(&a.model, model.params.dims, (m, n))?;
        let outcome = evaluate_setting(&model, &train_set, &test_set, setting, a.slices, clf)?;
        let corr = normalized_correlation(&model, &test_set.items, a.batch)?;
        summary.push("config", config_name(&model.config));
        summary.push("seed", a.seed);
        summary.push("accuracy", outcome.accuracy);
        summary.push("normalized_correlation", corr);
        print!("{}", outcome.confusion);
    }
    summary.push("slices", a.slices);
    summary.push(
        "noise_snr",
        a.noise_snr
            .map_or_else(|| "none".to_string(), |s| s.to_string()),
    );
    summary.push("train_items", train_set.len());
    summary.push("test_items", test_set.len());
    print!("{summary}");
    if let Some(out) = &a.out {
        write_text(out, &summary.to_string())?;
        manifest::write("eval", argv, a.seed, vec![out.clone()])?;
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let preset: Preset = a.config.parse()?;
    let config = preset.config();
    let (params, batch) = random_instance(Dims::new(3, 2, 4), 3, 3, a.seed);
    let fwd = composite_loss(&batch, &params, &config)?;
    let mut grads = backward(&batch, &params, &config, &fwd)?;
    if let Some(name) = &a.corrupt_block {
        let mut blocks = grads.blocks_mut();
        let (_, block) = blocks
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Failure::Usage(format!("no parameter block named {name}")))?;
        block.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    }
    let report = grad_check_with(&params, &batch, &config, &grads, a.eps, a.tol)?;
    println!(
        "gradcheck config={} seed={} eps={:e}",
        preset, a.seed, a.eps
    );
    println!("{report}");
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} block(s) exceed tolerance {:e}",
            report.failing().count(),
            a.tol
        )))
    }
}
