use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DnnError;
use crate::dataset::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Softmax,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// One dense layer: `weights` is `d_out x d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl LayerParams {
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Fully connected network with relu hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dims: Vec<usize>,
    pub layers: Vec<LayerParams>,
}

/// The published topology for a given input width.
pub fn reference_dims(input_width: usize) -> Vec<usize> {
    vec![input_width, 250, 200, 150, 100, 2]
}

fn check_dims(dims: &[usize]) -> Result<(), DnnError> {
    if dims.len() < 2 {
        return Err(DnnError::BadDims(format!("need at least 2 dims, got {}", dims.len())));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(DnnError::BadDims(format!("dim {i} is zero")));
    }
    Ok(())
}

/// Glorot-uniform weights from a seeded generator, zero biases.
pub fn init_model(dims: &[usize], seed: u64) -> Result<MlpModel, DnnError> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.len() - 1;
    let layers = (0..n)
        .map(|j| {
            let (fan_in, fan_out) = (dims[j], dims[j + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("finite bounds");
            let weights = Array2::from_shape_fn((fan_out, fan_in), |_| u.sample(&mut rng));
            LayerParams {
                weights,
                biases: Array1::zeros(fan_out),
                activation: if j + 1 == n { Activation::Softmax } else { Activation::Relu },
            }
        })
        .collect();
    Ok(MlpModel {
        dims: dims.to_vec(),
        layers,
    })
}

impl MlpModel {
    /// Builds a model from explicit layers, checking shapes and activations.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<MlpModel, DnnError> {
        let first = layers
            .first()
            .ok_or_else(|| DnnError::BadDims("no layers".into()))?;
        let mut dims = vec![first.weights.ncols()];
        dims.extend(layers.iter().map(|l| l.weights.nrows()));
        let m = MlpModel { dims, layers };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), DnnError> {
        check_dims(&self.dims)?;
        if self.layers.len() != self.dims.len() - 1 {
            return Err(DnnError::BadDims(format!(
                "{} layers for {} dims",
                self.layers.len(),
                self.dims.len()
            )));
        }
        let last = self.layers.len() - 1;
        for (j, l) in self.layers.iter().enumerate() {
            let want = (self.dims[j + 1], self.dims[j]);
            if l.weights.dim() != want || l.biases.len() != want.0 {
                return Err(DnnError::BadDims(format!(
                    "layer {}: weights {:?} biases {} but dims want {:?}",
                    j + 1,
                    l.weights.dim(),
                    l.biases.len(),
                    want
                )));
            }
            let expected = if j == last { Activation::Softmax } else { Activation::Relu };
            if l.activation != expected {
                return Err(DnnError::BadDims(format!(
                    "layer {} activation {} (expected {expected})",
                    j + 1,
                    l.activation
                )));
            }
            if !l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()) {
                return Err(DnnError::BadDims(format!("layer {} has non-finite values", j + 1)));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn output_width(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }
}

pub fn param_count(model: &MlpModel) -> usize {
    model.param_count()
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Forward pass over a batch (one sample per row), keeping every layer's
/// output. `acts[0]` is the input itself.
pub(crate) fn forward_cached(model: &MlpModel, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    acts.push(x.to_owned());
    for layer in &model.layers {
        let mut z = acts.last().unwrap().dot(&layer.weights.t());
        z += &layer.biases.view().insert_axis(Axis(0));
        match layer.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Softmax => softmax_rows(&mut z),
        }
        acts.push(z);
    }
    acts
}

/// Output probabilities for each row of `x`.
pub fn forward_batch(model: &MlpModel, x: ArrayView2<f64>) -> Result<Array2<f64>, DnnError> {
    if x.ncols() != model.input_width() {
        return Err(DnnError::DimMismatch {
            got: x.ncols(),
            want: model.input_width(),
        });
    }
    Ok(forward_cached(model, x).pop().unwrap())
}

pub fn forward(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, DnnError> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
    Ok(forward_batch(model, view)?.into_raw_vec_and_offset().0)
}

/// Index of the largest component; the lowest index wins ties.
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Label from a two-component output, ties toward benign.
pub fn label_of(p: &[f64]) -> Result<(Label, f64), DnnError> {
    if p.len() != 2 {
        return Err(DnnError::DimMismatch { got: p.len(), want: 2 });
    }
    let i = argmax(p);
    Ok((Label::from_index(i).unwrap(), p[i]))
}

pub fn predict(model: &MlpModel, x: &[f64]) -> Result<(Label, f64), DnnError> {
    label_of(&forward(model, x)?)
}

/// Predicted labels for each row of `x`.
pub fn predict_batch(model: &MlpModel, x: ArrayView2<f64>) -> Result<Vec<Label>, DnnError> {
    let p = forward_batch(model, x)?;
    p.rows()
        .into_iter()
        .map(|r| label_of(&r.to_vec()).map(|(l, _)| l))
        .collect()
}
