//! Classical classifiers used for comparison: k-nearest neighbours, CART,
//! random forest and a linear SVM.

mod knn;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{Label, LabeledDataset};

pub use knn::{knn_predict, KnnModel};
pub use svm::LinearSvm;
pub use tree::{split_gain, DecisionTree, Node, RandomForest, TreeParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("k={k} must be odd and between 1 and {n}")]
    BadK { k: usize, n: usize },
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("{0}")]
    BadParameter(String),
    #[error("input width {got} does not match model width {want}")]
    WidthMismatch { got: usize, want: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unsupported header {0:?}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("file ends early at line {0}")]
    Truncated(usize),
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn check_train(train: &LabeledDataset) -> Result<(), BaselineError> {
    if train.is_empty() {
        Err(BaselineError::EmptyTrainSet)
    } else {
        Ok(())
    }
}

pub(crate) fn parse_label(s: &str) -> Option<Label> {
    match s {
        "0" => Some(Label::Benign),
        "1" => Some(Label::Malicious),
        _ => None,
    }
}

pub(crate) fn parse_bits(s: &str) -> Option<Vec<bool>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub(crate) fn parse_reals(line: usize, s: &str) -> Result<Vec<f64>, ParseError> {
    s.split_ascii_whitespace()
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::Line {
                line,
                msg: format!("bad value {t:?}"),
            }),
        })
        .collect()
}

/// Numbered line reader shared by the text formats.
pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str, header: &str) -> Result<Self, ParseError> {
        let mut l = Lines {
            inner: text.lines().enumerate(),
            last: 0,
        };
        let (_, h) = l.next()?;
        if h.trim_end() != header {
            return Err(ParseError::Header(h.to_string()));
        }
        Ok(l)
    }

    pub(crate) fn next(&mut self) -> Result<(usize, &'a str), ParseError> {
        match self.inner.next() {
            Some((i, s)) => {
                self.last = i + 1;
                Ok((i + 1, s))
            }
            None => Err(ParseError::Truncated(self.last + 1)),
        }
    }

    pub(crate) fn numbers<const N: usize>(&mut self) -> Result<[usize; N], ParseError> {
        let (line, s) = self.next()?;
        let v: Vec<usize> = s
            .split_ascii_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| ParseError::Line {
                line,
                msg: format!("expected {N} integers"),
            })?;
        v.try_into().map_err(|_| ParseError::Line {
            line,
            msg: format!("expected {N} integers"),
        })
    }

    pub(crate) fn finish(mut self) -> Result<(), ParseError> {
        for (i, s) in self.inner.by_ref() {
            if !s.trim().is_empty() {
                return Err(ParseError::Line {
                    line: i + 1,
                    msg: "trailing content".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    Knn,
    DecisionTree,
    RandomForest,
    Svm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::DecisionTree,
        BaselineKind::Knn,
        BaselineKind::RandomForest,
        BaselineKind::Svm,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            BaselineKind::Knn => "KNN",
            BaselineKind::DecisionTree => "DT",
            BaselineKind::RandomForest => "RF",
            BaselineKind::Svm => "SVM",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(BaselineKind::Knn),
            "dt" | "dtree" => Ok(BaselineKind::DecisionTree),
            "rf" | "rforest" => Ok(BaselineKind::RandomForest),
            "svm" => Ok(BaselineKind::Svm),
            other => Err(format!("unknown classifier {other:?} (knn, dt, rf, svm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub k: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_trees: usize,
    pub lambda: f64,
    pub svm_epochs: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            k: 5,
            max_depth: 10,
            min_leaf: 2,
            n_trees: 100,
            lambda: 1e-3,
            svm_epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Knn(KnnModel),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Svm(LinearSvm),
}

impl BaselineModel {
    pub fn train(kind: BaselineKind, train: &LabeledDataset, cfg: &BaselineConfig) -> Result<Self, BaselineError> {
        Ok(match kind {
            BaselineKind::Knn => BaselineModel::Knn(KnnModel::fit(train, cfg.k)?),
            BaselineKind::DecisionTree => BaselineModel::DecisionTree(DecisionTree::fit(
                train,
                TreeParams {
                    max_depth: cfg.max_depth,
                    min_leaf: cfg.min_leaf,
                    max_features: None,
                },
                cfg.seed,
            )?),
            BaselineKind::RandomForest => BaselineModel::RandomForest(RandomForest::fit(
                train,
                cfg.n_trees,
                cfg.max_depth,
                cfg.min_leaf,
                cfg.seed,
            )?),
            BaselineKind::Svm => BaselineModel::Svm(LinearSvm::fit(train, cfg.lambda, cfg.svm_epochs, cfg.seed)?),
        })
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Knn(_) => BaselineKind::Knn,
            BaselineModel::DecisionTree(_) => BaselineKind::DecisionTree,
            BaselineModel::RandomForest(_) => BaselineKind::RandomForest,
            BaselineModel::Svm(_) => BaselineKind::Svm,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            BaselineModel::Knn(m) => m.width(),
            BaselineModel::DecisionTree(t) => t.width,
            BaselineModel::RandomForest(f) => f.trees[0].width,
            BaselineModel::Svm(s) => s.weights.len(),
        }
    }

    pub fn predict(&self, x: &[bool]) -> Result<Label, BaselineError> {
        if x.len() != self.width() {
            return Err(BaselineError::WidthMismatch {
                got: x.len(),
                want: self.width(),
            });
        }
        Ok(match self {
            BaselineModel::Knn(m) => m.predict(x),
            BaselineModel::DecisionTree(t) => t.predict(x),
            BaselineModel::RandomForest(f) => f.predict(x),
            BaselineModel::Svm(s) => s.predict(x),
        })
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Result<Vec<Label>, BaselineError> {
        data.vectors.iter().map(|v| self.predict(&v.bits)).collect()
    }

    pub fn to_text(&self) -> String {
        match self {
            BaselineModel::Knn(m) => m.to_text(),
            BaselineModel::DecisionTree(t) => t.to_text(),
            BaselineModel::RandomForest(f) => f.to_text(),
            BaselineModel::Svm(s) => s.to_text(),
        }
    }

    /// Parses any of the baseline formats, dispatching on the header line.
    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let header = text.lines().next().unwrap_or("").trim_end();
        match header {
            "KNN v1" => KnnModel::from_text(text).map(BaselineModel::Knn),
            "DT v1" => DecisionTree::from_text(text).map(BaselineModel::DecisionTree),
            "RF v1" => RandomForest::from_text(text).map(BaselineModel::RandomForest),
            "SVM v1" => LinearSvm::from_text(text).map(BaselineModel::Svm),
            other => Err(ParseError::Header(other.to_string())),
        }
    }
}
