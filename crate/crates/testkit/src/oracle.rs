//! Plain-loop reference computations for the network and the metrics.

/// One fully connected layer; `weights[r][c]` maps input `c` to output `r`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Relu on every layer but the last, softmax on the last.
pub fn forward(layers: &[DenseLayer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (j, layer) in layers.iter().enumerate() {
        let mut z = Vec::with_capacity(layer.biases.len());
        for (row, b) in layer.weights.iter().zip(&layer.biases) {
            let mut s = *b;
            for (w, v) in row.iter().zip(&a) {
                s += w * v;
            }
            z.push(s);
        }
        a = if j + 1 == layers.len() {
            let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
            let sum: f64 = e.iter().sum();
            e.iter().map(|v| v / sum).collect()
        } else {
            z.iter().map(|&v| v.max(0.0)).collect()
        };
    }
    a
}

pub fn mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

pub fn cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    -p.iter().zip(y).map(|(a, b)| b * a.ln()).sum::<f64>()
}

/// Mean loss over a batch; `ce` selects cross-entropy instead of MSE.
pub fn batch_loss(layers: &[DenseLayer], xs: &[Vec<f64>], ys: &[Vec<f64>], ce: bool) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = forward(layers, x);
            if ce {
                cross_entropy(&p, y)
            } else {
                mse(&p, y)
            }
        })
        .sum();
    total / xs.len() as f64
}

/// Accuracy, precision, recall and F1 with 0 for undefined ratios.
/// F1 uses the count form `2tp / (2tp + fp + fn)`.
pub fn metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> [f64; 4] {
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    [
        ratio(tp + tn, tp + tn + fp + fn_),
        ratio(tp, tp + fp),
        ratio(tp, tp + fn_),
        ratio(2 * tp, 2 * tp + fp + fn_),
    ]
}
