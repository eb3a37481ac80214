use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::model::{Activation, LayerParams, MlpModel};

pub const MODEL_HEADER: &str = "MLP v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelParseError {
    #[error("unsupported model header {0:?} (expected {MODEL_HEADER:?})")]
    Version(String),
    #[error("line {line}: {msg}")]
    Shape { line: usize, msg: String },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("line {line}: bad number {token:?}")]
    BadNumber { line: usize, token: String },
    #[error("file ends early at line {line}")]
    Truncated { line: usize },
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        // Debug formatting is the shortest string that parses back exactly
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

pub fn save_model(model: &MlpModel) -> String {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    let dims: Vec<String> = model.dims.iter().map(usize::to_string).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    for layer in &model.layers {
        for row in layer.weights.rows() {
            push_row(&mut out, row.iter());
        }
        push_row(&mut out, layer.biases.iter());
    }
    let acts: Vec<String> = model.layers.iter().map(|l| l.activation.to_string()).collect();
    out.push_str(&acts.join(" "));
    out.push('\n');
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), ModelParseError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(ModelParseError::Truncated { line: self.last + 1 }),
        }
    }
}

fn parse_row(line: usize, text: &str, want: usize) -> Result<Vec<f64>, ModelParseError> {
    let values = text
        .split_ascii_whitespace()
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| ModelParseError::BadNumber {
                line,
                token: t.to_string(),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ModelParseError::NonFinite { line })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != want {
        return Err(ModelParseError::Shape {
            line,
            msg: format!("expected {want} values, found {}", values.len()),
        });
    }
    Ok(values)
}

pub fn load_model(text: &str) -> Result<MlpModel, ModelParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (_, header) = lines.next()?;
    if header.trim_end() != MODEL_HEADER {
        return Err(ModelParseError::Version(header.to_string()));
    }
    let (n, dims_line) = lines.next()?;
    let dims = dims_line
        .split_ascii_whitespace()
        .map(|t| match t.parse::<usize>() {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(ModelParseError::Shape {
                line: n,
                msg: format!("bad dimension {t:?}"),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() < 2 {
        return Err(ModelParseError::Shape {
            line: n,
            msg: "need at least two dimensions".into(),
        });
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for j in 1..dims.len() {
        let (rows, cols) = (dims[j], dims[j - 1]);
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, l) = lines.next()?;
            flat.extend(parse_row(n, l, cols)?);
        }
        let (n, l) = lines.next()?;
        let biases = parse_row(n, l, rows)?;
        layers.push((
            Array2::from_shape_vec((rows, cols), flat).expect("row count checked"),
            Array1::from(biases),
        ));
    }

    let (n, act_line) = lines.next()?;
    let acts = act_line
        .split_ascii_whitespace()
        .map(|t| t.parse::<Activation>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|msg| ModelParseError::Shape { line: n, msg })?;
    if acts.len() != layers.len() {
        return Err(ModelParseError::Shape {
            line: n,
            msg: format!("{} activations for {} layers", acts.len(), layers.len()),
        });
    }
    if let Ok((n, extra)) = lines.next() {
        if !extra.trim().is_empty() || lines.next().is_ok() {
            return Err(ModelParseError::Shape {
                line: n,
                msg: "trailing content".into(),
            });
        }
    }

    let layers = layers
        .into_iter()
        .zip(acts)
        .map(|((weights, biases), activation)| LayerParams {
            weights,
            biases,
            activation,
        })
        .collect();
    let model = MlpModel { dims, layers };
    model.validate().map_err(|e| ModelParseError::Shape {
        line: n,
        msg: e.to_string(),
    })?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnn::model::{forward, init_model};

    #[test]
    fn round_trip_is_fixed_point() {
        let m = init_model(&[7, 5, 3, 2], 11).unwrap();
        let text = save_model(&m);
        let back = load_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_model(&back), text);
    }

    #[test]
    fn hand_written_model() {
        let text = "MLP v1\n2 2\n1 0\n0 2\n0.5 -0.5\nsoftmax\n";
        let m = load_model(text).unwrap();
        let p = forward(&m, &[1.0, 1.0]).unwrap();
        // z = (1.5, 1.5) → uniform
        assert_eq!(p, vec![0.5, 0.5]);
        let p = forward(&m, &[0.0, 1.0]).unwrap();
        // z = (0.5, 1.5)
        let want = 1.0 / (1.0 + 1.0f64.exp());
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let good = save_model(&init_model(&[2, 3, 2], 0).unwrap());
        assert!(matches!(load_model("MLP v2\n2 2\n"), Err(ModelParseError::Version(_))));
        let cut: String = good.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(load_model(&cut), Err(ModelParseError::Truncated { .. })));
        assert!(matches!(
            load_model("MLP v1\n2 2\n1 0\n0 NaN\n0 0\nsoftmax\n"),
            Err(ModelParseError::NonFinite { line: 4 })
        ));
        assert!(matches!(
            load_model("MLP v1\n2 2\n1 0 3\n0 1\n0 0\nsoftmax\n"),
            Err(ModelParseError::Shape { line: 3, .. })
        ));
        assert!(matches!(
            load_model("MLP v1\n2 2\n1 x\n0 1\n0 0\nsoftmax\n"),
            Err(ModelParseError::BadNumber { .. })
        ));
        assert!(load_model("MLP v1\n2 2\n1 0\n0 1\n0 0\nrelu\n").is_err());
        assert!(load_model(&format!("{good}junk\n")).is_err());
        assert!(load_model("").is_err());
    }
}
