use std::path::Path;
use std::process::{Command, Output};

fn corrnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrnn"))
        .args(args)
        .output()
        .expect("spawn corrnn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn synth_small(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["synth", "--per-class", "20", "--out", &out];
    args.extend_from_slice(extra);
    let o = corrnn(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn train_small(data: &str, config: &str, out: &str) {
    let o = corrnn(&[
        "train", "--data", data, "--config", config, "--hidden", "8", "--epochs", "2", "--batch",
        "10", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.crns");
    let b = path(dir.path(), "b.crns");
    assert_eq!(code(&corrnn(&["synth", "--out", &a])), 0);
    assert_eq!(code(&corrnn(&["synth", "--out", &b])), 0);
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ba, bb);
    assert_eq!(&ba[..4], b"CRNS");
    assert_eq!(u32::from_le_bytes(ba[6..10].try_into().unwrap()), 300);
    assert!(Path::new(&format!("{a}.manifest.json")).exists());
    let c = path(dir.path(), "c.crns");
    assert_eq!(code(&corrnn(&["synth", "--seed", "2", "--out", &c])), 0);
    assert_ne!(std::fs::read(&c).unwrap(), ba);
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&corrnn(&["synth"])), 2);
    assert_eq!(code(&corrnn(&["frobnicate"])), 2);
    assert_eq!(
        code(&corrnn(&[
            "eval",
            "--model",
            "m",
            "--data",
            "d",
            "--setting",
            "bogus"
        ])),
        2
    );
    assert_eq!(
        code(&corrnn(&[
            "eval", "--model", "m", "--data", "d", "--slices", "2"
        ])),
        2
    );
    assert_eq!(code(&corrnn(&["gradcheck", "--corrupt-block", "nope"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x.crns");
    assert_eq!(
        code(&corrnn(&["synth", "--classes", "1", "--out", &out])),
        2
    );
    assert_eq!(code(&corrnn(&["--help"])), 0);
}

#[test]
fn missing_or_damaged_inputs_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    assert_eq!(
        code(&corrnn(&[
            "eval",
            "--model",
            "/nonexistent.crnm",
            "--data",
            &data,
            "--train-per-class",
            "12"
        ])),
        3
    );
    let junk = path(dir.path(), "junk.crns");
    std::fs::write(&junk, b"CRNX0000").unwrap();
    let o = corrnn(&[
        "train",
        "--data",
        &junk,
        "--config",
        "fused",
        "--out",
        &path(dir.path(), "m"),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn train_with_zero_epochs_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    let model = path(dir.path(), "m.crnm");
    let o = corrnn(&[
        "train", "--data", &data, "--config", "fused", "--hidden", "4", "--epochs", "0", "--out",
        &model,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&model).unwrap();
    assert_eq!(&bytes[..4], b"CRNM");
    let log = std::fs::read_to_string(format!("{model}.loss.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn train_then_eval_reports_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    let model = path(dir.path(), "m.crnm");
    train_small(&data, "corr-dw", &model);
    let log = std::fs::read_to_string(format!("{model}.loss.tsv")).unwrap();
    assert!(log.starts_with("epoch\tl_fused\tl_self\tl_cross\tl_corr\ttotal\n"));
    assert_eq!(log.lines().count(), 3);

    let summary = path(dir.path(), "s.txt");
    let o = corrnn(&[
        "eval",
        "--model",
        &model,
        "--data",
        &data,
        "--train-per-class",
        "12",
        "--setting",
        "cross-y",
        "--slices",
        "3",
        "--noise-snr",
        "5",
        "--out",
        &summary,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&summary).unwrap();
    assert_eq!(summary_value(&text, "setting"), "cross-y");
    assert_eq!(summary_value(&text, "config"), "corr-dw");
    assert_eq!(summary_value(&text, "train_items"), "48");
    assert_eq!(summary_value(&text, "test_items"), "32");
    let acc: f64 = summary_value(&text, "accuracy").parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let rho: f64 = summary_value(&text, "normalized_correlation")
        .parse()
        .unwrap();
    assert!(rho.abs() <= 1.0);
    assert_eq!(
        String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("class"))
            .count(),
        4
    );
}

#[test]
fn eval_rejects_mismatched_data_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    let other = synth_small(dir.path(), "o.crns", &["--dim-x", "6"]);
    let model = path(dir.path(), "m.crnm");
    train_small(&data, "fused", &model);
    let o = corrnn(&[
        "eval",
        "--model",
        &model,
        "--data",
        &other,
        "--train-per-class",
        "12",
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("modality widths"));
}

#[test]
fn baseline_trains_two_models_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    let prefix = path(dir.path(), "base");
    train_small(&data, "baseline", &prefix);
    assert!(Path::new(&format!("{prefix}.x.crnm")).exists());
    assert!(Path::new(&format!("{prefix}.y.crnm")).exists());
    let o = corrnn(&[
        "eval",
        "--config",
        "baseline",
        "--model",
        &prefix,
        "--data",
        &data,
        "--train-per-class",
        "12",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(summary_value(&text, "config"), "baseline");
    let o = corrnn(&[
        "eval",
        "--config",
        "baseline",
        "--model",
        &prefix,
        "--data",
        &data,
        "--setting",
        "cross-x",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let o = corrnn(&["gradcheck", "--config", "corr-dw", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let o = corrnn(&[
        "gradcheck",
        "--config",
        "corr-dw",
        "--seed",
        "7",
        "--corrupt-block",
        "enc.uz",
    ]);
    assert_eq!(code(&o), 1);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(
        out.lines()
            .any(|l| l.starts_with("enc.uz") && !l.ends_with("ok")),
        "{out}"
    );
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_small(dir.path(), "d.crns", &[]);
    let model = path(dir.path(), "m.crnm");
    train_small(&data, "corr", &model);
    let first = std::fs::read(&model).unwrap();
    std::fs::remove_file(&model).unwrap();
    let o = corrnn(&["replay", &format!("{model}.manifest.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&model).unwrap(), first);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{model}.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["format_versions"]["crnm"], 1);
    assert_eq!(
        code(&corrnn(&["replay", &path(dir.path(), "none.json")])),
        3
    );
}
