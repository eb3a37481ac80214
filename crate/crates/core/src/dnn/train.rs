use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{argmax, forward_cached, Activation, MlpModel};
use super::DnnError;
use crate::dataset::{split_indices, DatasetError, Label, LabeledDataset};
use crate::eval::metrics::{compute_metrics, ConfusionMatrix, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    /// Mean over output components of the squared error.
    #[default]
    Mse,
    /// Negative log-likelihood of the target class.
    CrossEntropy,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Mse => "mse",
            Loss::CrossEntropy => "cross-entropy",
        })
    }
}

impl FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Loss::Mse),
            "cross-entropy" | "ce" => Ok(Loss::CrossEntropy),
            other => Err(format!("unknown loss {other:?} (mse, cross-entropy)")),
        }
    }
}

pub fn loss_mse(output: &[f64], target: &[f64]) -> Result<f64, DnnError> {
    if output.len() != target.len() {
        return Err(DnnError::DimMismatch {
            got: output.len(),
            want: target.len(),
        });
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum();
    Ok(s / output.len() as f64)
}

fn sample_loss(p: &[f64], y: &[f64], loss: Loss) -> f64 {
    match loss {
        Loss::Mse => loss_mse(p, y).expect("equal widths"),
        Loss::CrossEntropy => -p
            .iter()
            .zip(y)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&q, &t)| t * q.ln())
            .sum::<f64>(),
    }
}

fn mean_loss(p: &Array2<f64>, y: ArrayView2<f64>, loss: Loss) -> f64 {
    let total: f64 = p
        .rows()
        .into_iter()
        .zip(y.rows())
        .map(|(pr, yr)| sample_loss(&pr.to_vec(), &yr.to_vec(), loss))
        .sum();
    total / p.nrows() as f64
}

fn check_batch(model: &MlpModel, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(), DnnError> {
    if x.nrows() == 0 {
        return Err(DnnError::EmptyBatch);
    }
    if x.ncols() != model.input_width() {
        return Err(DnnError::DimMismatch {
            got: x.ncols(),
            want: model.input_width(),
        });
    }
    if y.ncols() != model.output_width() {
        return Err(DnnError::DimMismatch {
            got: y.ncols(),
            want: model.output_width(),
        });
    }
    if y.nrows() != x.nrows() {
        return Err(DnnError::DimMismatch {
            got: y.nrows(),
            want: x.nrows(),
        });
    }
    Ok(())
}

/// Mean per-sample loss of `model` over the rows of `x` against targets `y`.
pub fn batch_loss(
    model: &MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    loss: Loss,
) -> Result<f64, DnnError> {
    check_batch(model, x, y)?;
    let p = forward_cached(model, x).pop().unwrap();
    Ok(mean_loss(&p, y, loss))
}

/// Per-layer partial derivatives, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

/// Gradient of the mean batch MSE.
pub fn gradients(model: &MlpModel, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Gradients, DnnError> {
    gradients_with(model, x, y, Loss::Mse)
}

/// Gradient of the mean batch loss, plus that loss.
fn backprop(model: &MlpModel, x: ArrayView2<f64>, y: ArrayView2<f64>, loss: Loss) -> (Gradients, f64) {
    let mut acts = forward_cached(model, x);
    let p = acts.pop().unwrap();
    let value = mean_loss(&p, y, loss);
    let b = x.nrows() as f64;
    let k = p.ncols() as f64;

    // dL/dz at the softmax layer
    let mut delta = match loss {
        Loss::Mse => {
            let dp = (&p - &y) * (2.0 / (b * k));
            let dot = (&dp * &p).sum_axis(Axis(1)).insert_axis(Axis(1));
            &p * &(dp - &dot)
        }
        Loss::CrossEntropy => (&p - &y) / b,
    };

    let mut layers = Vec::with_capacity(model.layers.len());
    for (j, layer) in model.layers.iter().enumerate().rev() {
        let input = &acts[j];
        layers.push(LayerGradient {
            weights: delta.t().dot(input),
            biases: delta.sum_axis(Axis(0)),
        });
        if j > 0 {
            let mut back = delta.dot(&layer.weights);
            debug_assert_eq!(model.layers[j - 1].activation, Activation::Relu);
            // relu' is 1 where the unit was active, 0 otherwise (including at 0)
            back.zip_mut_with(input, |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    layers.reverse();
    (Gradients { layers }, value)
}

pub fn gradients_with(
    model: &MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    loss: Loss,
) -> Result<Gradients, DnnError> {
    check_batch(model, x, y)?;
    Ok(backprop(model, x, y, loss).0)
}

fn apply(model: &mut MlpModel, g: &Gradients, lr: f64) {
    for (layer, lg) in model.layers.iter_mut().zip(&g.layers) {
        layer.weights.scaled_add(-lr, &lg.weights);
        layer.biases.scaled_add(-lr, &lg.biases);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            split_ratio: 0.8,
            loss: Loss::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DnnError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(DnnError::BadConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(DnnError::BadConfig("batch size must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(DnnError::BadConfig(format!(
                "split ratio must lie in (0,1), got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Validation-fold confusion and metrics after the last epoch.
    pub confusion: Option<ConfusionMatrix>,
    pub metrics: Option<Metrics>,
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
}

/// Dense design matrix and one-hot targets for a dataset.
pub fn to_arrays(data: &LabeledDataset) -> (Array2<f64>, Array2<f64>) {
    let w = data.width();
    let mut x = Array2::zeros((data.len(), w));
    let mut y = Array2::zeros((data.len(), 2));
    for (i, (v, l)) in data.vectors.iter().zip(&data.labels).enumerate() {
        for (j, &b) in v.bits.iter().enumerate() {
            if b {
                x[[i, j]] = 1.0;
            }
        }
        y[[i, l.index()]] = 1.0;
    }
    (x, y)
}

fn evaluate(model: &MlpModel, x: ArrayView2<f64>, y: ArrayView2<f64>, loss: Loss) -> (f64, ConfusionMatrix) {
    let p = forward_cached(model, x).pop().unwrap();
    let value = mean_loss(&p, y, loss);
    let mut cm = ConfusionMatrix::default();
    for (pr, yr) in p.rows().into_iter().zip(y.rows()) {
        let predicted = Label::from_index(argmax(&pr.to_vec())).unwrap();
        let truth = Label::from_index(argmax(&yr.to_vec())).unwrap();
        cm.record(truth, predicted);
    }
    (value, cm)
}

fn accuracy(cm: &ConfusionMatrix) -> f64 {
    (cm.tp + cm.tn) as f64 / cm.total() as f64
}

/// Trains on a stratified split of `data` and reports per-epoch curves
/// plus validation metrics.
pub fn train(
    model: MlpModel,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), DnnError> {
    let (train_idx, valid_idx) = split_indices(&data.labels, cfg.split_ratio, cfg.seed)
        .map_err(|e| match e {
            DatasetError::InsufficientData(m) => DnnError::InsufficientData(m),
            other => DnnError::InsufficientData(other.to_string()),
        })?;
    train_on_split(model, data, &train_idx, &valid_idx, cfg)
}

/// Like [`train`] with caller-chosen fold indices.
pub fn train_on_split(
    mut model: MlpModel,
    data: &LabeledDataset,
    train_idx: &[usize],
    valid_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), DnnError> {
    cfg.validate()?;
    model.validate()?;
    if model.output_width() != 2 {
        return Err(DnnError::DimMismatch {
            got: model.output_width(),
            want: 2,
        });
    }
    if data.width() != model.input_width() {
        return Err(DnnError::DimMismatch {
            got: data.width(),
            want: model.input_width(),
        });
    }
    if train_idx.is_empty() || valid_idx.is_empty() {
        return Err(DnnError::InsufficientData("empty training or validation fold".into()));
    }
    let mut report = TrainReport {
        train_indices: train_idx.to_vec(),
        valid_indices: valid_idx.to_vec(),
        ..TrainReport::default()
    };
    if cfg.epochs == 0 {
        return Ok((model, report));
    }

    let (x, y) = to_arrays(data);
    let xt = x.select(Axis(0), train_idx);
    let yt = y.select(Axis(0), train_idx);
    let xv = x.select(Axis(0), valid_idx);
    let yv = y.select(Axis(0), valid_idx);

    // distinct stream from the one used for the split
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..xt.nrows()).collect();
    let mut valid_cm = ConfusionMatrix::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xt.select(Axis(0), chunk);
            let yb = yt.select(Axis(0), chunk);
            let (g, _) = backprop(&model, xb.view(), yb.view(), cfg.loss);
            apply(&mut model, &g, cfg.learning_rate);
        }
        let (train_loss, train_cm) = evaluate(&model, xt.view(), yt.view(), cfg.loss);
        let (valid_loss, cm) = evaluate(&model, xv.view(), yv.view(), cfg.loss);
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(DnnError::NonFiniteLoss { epoch });
        }
        valid_cm = cm;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc: accuracy(&train_cm),
            valid_loss,
            valid_acc: accuracy(&valid_cm),
        });
        log::debug!(
            "epoch {epoch}: train loss {train_loss:.6} valid loss {valid_loss:.6} valid acc {:.4}",
            accuracy(&valid_cm)
        );
    }
    report.confusion = Some(valid_cm);
    report.metrics = Some(compute_metrics(&valid_cm).expect("validation fold is non-empty"));
    Ok((model, report))
}
