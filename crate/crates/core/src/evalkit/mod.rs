//! Feature extraction, the five evaluation settings, a linear classifier,
//! the unimodal-GRU baseline and plain-text metric reports.

mod classifier;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataio::{pca_whiten, SequencePair, WindowedDataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objective::{Model, Preset};
use crate::trainer::{train, TrainConfig};

pub use classifier::{accuracy, train_classifier, Classifier, GRAD_TOL, MAX_ITERS};

/// Which inputs the encoder sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalityMode {
    Both,
    XOnly,
    YOnly,
}

impl ModalityMode {
    pub fn name(self) -> &'static str {
        match self {
            ModalityMode::Both => "x+y",
            ModalityMode::XOnly => "x",
            ModalityMode::YOnly => "y",
        }
    }
}

/// Modalities used for feature learning, classifier training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SettingSpec {
    pub name: &'static str,
    pub feature_learning: ModalityMode,
    pub supervised: ModalityMode,
    pub testing: ModalityMode,
}

impl SettingSpec {
    const fn new(name: &'static str, supervised: ModalityMode, testing: ModalityMode) -> Self {
        SettingSpec {
            name,
            feature_learning: ModalityMode::Both,
            supervised,
            testing,
        }
    }

    pub const FUSION: SettingSpec =
        SettingSpec::new("fusion", ModalityMode::Both, ModalityMode::Both);
    pub const CROSS_X: SettingSpec =
        SettingSpec::new("cross-x", ModalityMode::XOnly, ModalityMode::XOnly);
    pub const CROSS_Y: SettingSpec =
        SettingSpec::new("cross-y", ModalityMode::YOnly, ModalityMode::YOnly);
    pub const SHARED_XY: SettingSpec =
        SettingSpec::new("shared-xy", ModalityMode::XOnly, ModalityMode::YOnly);
    pub const SHARED_YX: SettingSpec =
        SettingSpec::new("shared-yx", ModalityMode::YOnly, ModalityMode::XOnly);

    pub const ALL: [SettingSpec; 5] = [
        SettingSpec::FUSION,
        SettingSpec::CROSS_X,
        SettingSpec::CROSS_Y,
        SettingSpec::SHARED_XY,
        SettingSpec::SHARED_YX,
    ];
}

impl fmt::Display for SettingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl FromStr for SettingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SettingSpec::ALL
            .into_iter()
            .find(|spec| spec.name == s)
            .ok_or_else(|| Error::Argument(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Index of the item the features came from.
    pub source: usize,
}

/// Sizes of `parts` contiguous, nearly equal slices of `len` steps; the
/// first slices take the remainder (8 → 3, 3, 2).
pub fn slice_sizes(len: usize, parts: usize) -> Vec<usize> {
    let (base, rem) = (len / parts, len % parts);
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Fusion-layer features of one item. One slice returns the final state;
/// more slices mean-pool the per-step states of each slice and concatenate.
pub fn extract_features(
    model: &Model,
    item: &SequencePair,
    mode: ModalityMode,
    num_slices: usize,
    source: usize,
) -> Result<FeatureVector> {
    if num_slices == 0 || num_slices > item.len() {
        return Err(Error::Argument(format!(
            "{num_slices} slices for a window of {}",
            item.len()
        )));
    }
    let (state, trace) = match mode {
        ModalityMode::Both => model.encode(item)?,
        ModalityMode::XOnly => model.encode_single(&item.x, 0)?,
        ModalityMode::YOnly => model.encode_single(&item.y, 1)?,
    };
    if num_slices == 1 {
        return Ok(FeatureVector {
            values: state.h,
            source,
        });
    }
    let states: Vec<&[f64]> = trace.fused_states().collect();
    let d = state.h.len();
    let mut values = Vec::with_capacity(d * num_slices);
    let mut start = 0;
    for size in slice_sizes(states.len(), num_slices) {
        let mut mean = vec![0.0; d];
        for s in &states[start..start + size] {
            for (m, v) in mean.iter_mut().zip(s.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= size as f64);
        values.extend(mean);
        start += size;
    }
    Ok(FeatureVector { values, source })
}

/// Features of every item, one row each, in dataset order.
pub fn feature_matrix(
    model: &Model,
    items: &[SequencePair],
    mode: ModalityMode,
    num_slices: usize,
) -> Result<Matrix> {
    let rows: Vec<FeatureVector> = items
        .par_iter()
        .enumerate()
        .map(|(k, it)| extract_features(model, it, mode, num_slices, k))
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.values.as_slice()).collect();
    Matrix::from_rows(&refs)
}

pub fn labels_of(ds: &WindowedDataset) -> Result<Vec<usize>> {
    ds.labels()
        .ok_or_else(|| Error::Argument("evaluation needs a fully labelled dataset".into()))
}

fn class_count(train: &WindowedDataset, test: &WindowedDataset) -> usize {
    train.num_classes().max(test.num_classes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { l2: 1e-2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[truth][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape("prediction and label counts differ".into()));
        }
        let mut counts = vec![vec![0; num_classes]; num_classes];
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::Argument(format!(
                    "class index out of range ({p}, {t})"
                )));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.iter().flatten().sum();
        let hits: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>4}")).collect();
            writeln!(f, "class {t}: {}", cells.join(""))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingOutcome {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Trains the classifier on `train` features and scores `test` features
/// with the modalities named by `spec`.
pub fn evaluate_setting(
    model: &Model,
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    spec: SettingSpec,
    num_slices: usize,
    clf: ClassifierConfig,
) -> Result<SettingOutcome> {
    let k = class_count(train_set, test_set);
    let train_x = feature_matrix(model, &train_set.items, spec.supervised, num_slices)?;
    let test_x = feature_matrix(model, &test_set.items, spec.testing, num_slices)?;
    score(
        &train_x,
        &labels_of(train_set)?,
        &test_x,
        &labels_of(test_set)?,
        k,
        clf,
    )
}

pub fn run_setting(
    model: &Model,
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    spec: SettingSpec,
    num_slices: usize,
    clf: ClassifierConfig,
) -> Result<f64> {
    Ok(evaluate_setting(model, train_set, test_set, spec, num_slices, clf)?.accuracy)
}

fn score(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    test_y: &[usize],
    k: usize,
    clf: ClassifierConfig,
) -> Result<SettingOutcome> {
    let c = train_classifier(train_x, train_y, k, clf.l2, clf.seed)?;
    let pred = c.predict(test_x)?;
    let confusion = ConfusionMatrix::new(&pred, test_y, k)?;
    Ok(SettingOutcome {
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// Raw frames of one modality, flattened per window.
pub fn raw_features(items: &[SequencePair], modality: usize) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = items
        .iter()
        .map(|it| it.modality(modality).as_slice().to_vec())
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&refs)
}

/// Classifier on flattened raw frames of one modality.
pub fn raw_modality_accuracy(
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    modality: usize,
    clf: ClassifierConfig,
) -> Result<f64> {
    let k = class_count(train_set, test_set);
    let train_x = raw_features(&train_set.items, modality)?;
    let test_x = raw_features(&test_set.items, modality)?;
    Ok(score(
        &train_x,
        &labels_of(train_set)?,
        &test_x,
        &labels_of(test_set)?,
        k,
        clf,
    )?
    .accuracy)
}

/// Copy of `ds` keeping only one modality; the other becomes zero-width.
pub fn single_modality_dataset(ds: &WindowedDataset, modality: usize) -> WindowedDataset {
    let mut out = ds.clone();
    for it in &mut out.items {
        let rows = it.len();
        *it.modality_mut(1 - modality) = Matrix::zeros(rows, 0);
    }
    out
}

/// Reconstruction-only unimodal GRU autoencoder per modality; the final
/// states are each reduced to `d_b / 2` whitened components fitted on the
/// training split, concatenated and classified.
pub fn baseline_concat(
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    d_b: usize,
    train_cfg: &TrainConfig,
    clf: ClassifierConfig,
) -> Result<f64> {
    let (models, _) = train_baseline(train_set, train_cfg)?;
    baseline_accuracy(&models, train_set, test_set, d_b, clf)
}

/// The two unimodal models of the baseline and their loss logs.
pub fn train_baseline(
    train_set: &WindowedDataset,
    train_cfg: &TrainConfig,
) -> Result<([Model; 2], [Vec<crate::objective::LossBreakdown>; 2])> {
    let config = Preset::Fused.config();
    let x = train(&single_modality_dataset(train_set, 0), &config, train_cfg)?;
    let y = train(&single_modality_dataset(train_set, 1), &config, train_cfg)?;
    Ok(([x.model, y.model], [x.log, y.log]))
}

pub fn baseline_accuracy(
    models: &[Model; 2],
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    d_b: usize,
    clf: ClassifierConfig,
) -> Result<f64> {
    if d_b < 2 || !d_b.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "baseline width {d_b} must be even and at least 2"
        )));
    }
    let mut train_parts = Vec::new();
    let mut test_parts = Vec::new();
    for (i, model) in models.iter().enumerate() {
        let tr = feature_matrix(
            model,
            &single_modality_dataset(train_set, i).items,
            ModalityMode::Both,
            1,
        )?;
        let te = feature_matrix(
            model,
            &single_modality_dataset(test_set, i).items,
            ModalityMode::Both,
            1,
        )?;
        let (reduced, pca) = pca_whiten(&tr, d_b / 2)?;
        train_parts.push(reduced);
        test_parts.push(pca.apply(&te)?);
    }
    let concat = |parts: &[Matrix]| -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = (0..parts[0].rows())
            .map(|r| {
                parts
                    .iter()
                    .flat_map(|p| p.row(r).iter().copied())
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        Matrix::from_rows(&refs)
    };
    let k = class_count(train_set, test_set);
    Ok(score(
        &concat(&train_parts)?,
        &labels_of(train_set)?,
        &concat(&test_parts)?,
        &labels_of(test_set)?,
        k,
        clf,
    )?
    .accuracy)
}

/// Ordered `key=value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Summary::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("summary line {} has no '='", i + 1)))?;
            s.push(k, v);
        }
        Ok(s)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
