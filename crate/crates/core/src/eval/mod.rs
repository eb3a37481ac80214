//! Splitting, metrics, ablation and classifier comparison.

pub mod metrics;
pub mod report;

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::baselines::{BaselineConfig, BaselineKind, BaselineModel};
use crate::dataset::{split_indices, stratified_folds, DatasetError, LabeledDataset};
use crate::dnn::{self, DnnError, MlpModel, TrainConfig};
use crate::features::{parse_subset, project, FeatureSchema, FeatureSet};

pub use crate::dataset::split;
pub use metrics::{compute_metrics, ConfusionMatrix, Metrics, MetricsError};

/// The seven feature-set combinations evaluated by default, in report order.
pub const ABLATION_SUBSETS: [&str; 7] = [
    "all",
    "fs3",
    "fs1",
    "fs2",
    "fs3+fs1+fs4+fs5",
    "fs3+fs2+fs4+fs5",
    "fs1+fs4+fs5",
];

/// Outcome of evaluating one classifier on the validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self, String> {
        let metrics = compute_metrics(&confusion).map_err(|e| e.to_string())?;
        Ok(Evaluation { confusion, metrics })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// The subset exactly as requested, e.g. `fs3+fs1+fs4+fs5`.
    pub subset: String,
    pub width: usize,
    pub result: Result<Evaluation, String>,
}

impl AblationRow {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|e| e.metrics.accuracy)
    }
}

/// Builds a fresh model for a given input width.
pub type ModelFactory<'a> = dyn Fn(usize) -> Result<MlpModel, DnnError> + Sync + 'a;

/// Reference topology with the input layer resized, seeded like training.
pub fn default_factory(seed: u64) -> impl Fn(usize) -> Result<MlpModel, DnnError> + Sync {
    move |width| dnn::init_model(&dnn::reference_dims(width), seed)
}

fn train_dnn_row(
    data: &LabeledDataset,
    factory: &ModelFactory<'_>,
    train_idx: &[usize],
    valid_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<Evaluation, String> {
    let model = factory(data.width()).map_err(|e| e.to_string())?;
    let (_, report) = dnn::train_on_split(model, data, train_idx, valid_idx, cfg).map_err(|e| e.to_string())?;
    let cm = report
        .confusion
        .ok_or_else(|| "no epochs were run".to_string())?;
    Evaluation::from_confusion(cm)
}

/// Retrains a fresh model on each projection of `data` and records its
/// validation result. Every row shares one split; a failing row records
/// its error and the remaining rows still run.
pub fn ablation(
    data: &LabeledDataset,
    schema: &FeatureSchema,
    subsets: &[&str],
    factory: &ModelFactory<'_>,
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>, DatasetError> {
    if data.width() != schema.len() && !data.is_empty() {
        return Err(DatasetError::WidthMismatch {
            got: data.width(),
            want: schema.len(),
        });
    }
    let (train_idx, valid_idx) = split_indices(&data.labels, cfg.split_ratio, cfg.seed)?;
    let rows = subsets
        .par_iter()
        .map(|&subset_name| {
            let parsed: Result<BTreeSet<FeatureSet>, String> = parse_subset(subset_name);
            let (width, result) = match parsed {
                Err(e) => (0, Err(e)),
                Ok(set) => {
                    let width = set.iter().map(|&s| schema.span(s).len()).sum();
                    let result = data
                        .map_vectors(|v| project(v, schema, &set))
                        .map_err(|e| e.to_string())
                        .and_then(|projected| {
                            if width == 0 {
                                return Err(format!("subset {subset_name} selects no features"));
                            }
                            train_dnn_row(&projected, factory, &train_idx, &valid_idx, cfg)
                        });
                    (width, result)
                }
            };
            if let Err(e) = &result {
                log::warn!("ablation row {subset_name}: {e}");
            }
            AblationRow {
                subset: subset_name.to_string(),
                width,
                result,
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub classifier: String,
    pub result: Result<Evaluation, String>,
}

/// Names of the comparison rows, in order.
pub const COMPARE_CLASSIFIERS: [&str; 5] = ["DNN", "DT", "KNN", "RF", "SVM"];

fn baseline_row(
    kind: BaselineKind,
    train: &LabeledDataset,
    valid: &LabeledDataset,
    cfg: &BaselineConfig,
) -> Result<Evaluation, String> {
    let model = BaselineModel::train(kind, train, cfg).map_err(|e| e.to_string())?;
    let predicted = model.predict_all(valid).map_err(|e| e.to_string())?;
    Evaluation::from_confusion(ConfusionMatrix::from_labels(&valid.labels, &predicted))
}

/// Trains the network and the four baselines on one shared training fold
/// and scores each on the shared validation fold.
pub fn compare(
    data: &LabeledDataset,
    factory: &ModelFactory<'_>,
    cfg: &TrainConfig,
    baseline: &BaselineConfig,
) -> Result<Vec<CompareRow>, DatasetError> {
    let (train_idx, valid_idx) = split_indices(&data.labels, cfg.split_ratio, cfg.seed)?;
    let train = data.subset(&train_idx);
    let valid = data.subset(&valid_idx);
    let rows = COMPARE_CLASSIFIERS
        .par_iter()
        .map(|&name| {
            let result = if name == "DNN" {
                train_dnn_row(data, factory, &train_idx, &valid_idx, cfg)
            } else {
                let kind: BaselineKind = name.parse().expect("known classifier name");
                baseline_row(kind, &train, &valid, baseline)
            };
            if let Err(e) = &result {
                log::warn!("compare row {name}: {e}");
            }
            CompareRow {
                classifier: name.to_string(),
                result,
            }
        })
        .collect();
    Ok(rows)
}

/// Per-fold results and the confusion matrix pooled over all folds.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<Result<Evaluation, String>>,
    pub pooled: Option<Evaluation>,
}

/// Stratified k-fold cross-validation; `run` receives the training and
/// held-out index lists of each fold and returns the held-out confusion.
pub fn cross_validate(
    data: &LabeledDataset,
    k: usize,
    seed: u64,
    run: impl Fn(&[usize], &[usize]) -> Result<ConfusionMatrix, String> + Sync,
) -> Result<CrossValidation, DatasetError> {
    let folds = stratified_folds(&data.labels, k, seed)?;
    let results: Vec<Result<ConfusionMatrix, String>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let held = &folds[i];
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            train.sort_unstable();
            run(&train, held)
        })
        .collect();
    let mut pooled = ConfusionMatrix::default();
    let mut any = false;
    let folds = results
        .into_iter()
        .map(|r| {
            r.and_then(|cm| {
                pooled.tp += cm.tp;
                pooled.tn += cm.tn;
                pooled.fp += cm.fp;
                pooled.fn_ += cm.fn_;
                any = true;
                Evaluation::from_confusion(cm)
            })
        })
        .collect();
    Ok(CrossValidation {
        folds,
        pooled: if any { Evaluation::from_confusion(pooled).ok() } else { None },
    })
}

/// Cross-validation of the network.
pub fn cross_validate_dnn(
    data: &LabeledDataset,
    k: usize,
    factory: &ModelFactory<'_>,
    cfg: &TrainConfig,
) -> Result<CrossValidation, DatasetError> {
    cross_validate(data, k, cfg.seed, |t, v| {
        train_dnn_row(data, factory, t, v, cfg).map(|e| e.confusion)
    })
}

/// Cross-validation of one baseline.
pub fn cross_validate_baseline(
    data: &LabeledDataset,
    k: usize,
    kind: BaselineKind,
    cfg: &BaselineConfig,
) -> Result<CrossValidation, DatasetError> {
    cross_validate(data, k, cfg.seed, |t, v| {
        baseline_row(kind, &data.subset(t), &data.subset(v), cfg).map(|e| e.confusion)
    })
}

fn result_cells(r: &Result<Evaluation, String>) -> Vec<String> {
    match r {
        Ok(e) => vec![
            report::fmt4(e.metrics.accuracy),
            report::fmt4(e.metrics.precision),
            report::fmt4(e.metrics.recall),
            report::fmt4(e.metrics.f1),
            String::new(),
        ],
        Err(msg) => vec![String::new(), String::new(), String::new(), String::new(), msg.clone()],
    }
}

pub const ABLATION_HEADER: [&str; 7] = ["subset", "width", "accuracy", "precision", "recall", "f1", "error"];
pub const COMPARE_HEADER: [&str; 6] = ["classifier", "accuracy", "precision", "recall", "f1", "error"];

pub fn ablation_rows(rows: &[AblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![r.subset.clone(), r.width.to_string()];
            cells.extend(result_cells(&r.result));
            cells
        })
        .collect()
}

pub fn compare_rows(rows: &[CompareRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![r.classifier.clone()];
            cells.extend(result_cells(&r.result));
            cells
        })
        .collect()
}
