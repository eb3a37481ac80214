//! Labeled feature vectors, their CSV form and stratified splitting.

use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign = 0,
    Malicious = 1,
}

impl Label {
    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Two-component target, `(1,0)` benign and `(0,1)` malicious.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Benign => [1.0, 0.0],
            Label::Malicious => [0.0, 1.0],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("vector width {got} differs from {want}")]
    WidthMismatch { got: usize, want: usize },
}

/// Rows of `(id, vector, label)` with a uniform vector width.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, vector: FeatureVector, label: Label) -> Result<(), DatasetError> {
        if let Some(first) = self.vectors.first() {
            if first.len() != vector.len() {
                return Err(DatasetError::WidthMismatch {
                    got: vector.len(),
                    want: first.len(),
                });
            }
        }
        self.vectors.push(vector);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.vectors.first().map_or(0, FeatureVector::len)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.iter().map(|v| v.app_id.as_str())
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Applies `f` to every vector, keeping labels.
    pub fn map_vectors<E>(
        &self,
        f: impl Fn(&FeatureVector) -> Result<FeatureVector, E>,
    ) -> Result<LabeledDataset, E> {
        Ok(LabeledDataset {
            vectors: self.vectors.iter().map(f).collect::<Result<_, _>>()?,
            labels: self.labels.clone(),
        })
    }

    /// Rows as real-valued inputs.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(FeatureVector::to_f64).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..self.width()).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (v, l) in self.vectors.iter().zip(&self.labels) {
            let mut row = Vec::with_capacity(v.len() + 2);
            row.push(v.app_id.clone());
            row.push(l.index().to_string());
            row.extend(v.bits.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<LabeledDataset, DatasetError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let bad_header = || DatasetError::Parse {
            line: 1,
            msg: "header must be id,label,f0,...,f{n-1}".into(),
        };
        if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
            return Err(bad_header());
        }
        for (i, h) in header.iter().skip(2).enumerate() {
            if h != format!("f{i}") {
                return Err(bad_header());
            }
        }
        let width = header.len() - 2;
        let mut data = LabeledDataset::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let err = |msg: String| DatasetError::Parse { line, msg };
            if rec.len() != width + 2 {
                return Err(err(format!("expected {} fields, got {}", width + 2, rec.len())));
            }
            let label = match &rec[1] {
                "0" => Label::Benign,
                "1" => Label::Malicious,
                other => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
            };
            let bits = rec
                .iter()
                .skip(2)
                .map(|f| match f {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(err(format!("feature must be 0 or 1, got {other:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            data.vectors.push(FeatureVector {
                app_id: rec[0].to_string(),
                bits,
            });
            data.labels.push(label);
        }
        Ok(data)
    }
}

/// Stratified, seeded train/validation index split.
///
/// Each class contributes `round(ratio * n_class)` rows to the training
/// fold, clamped so both folds keep at least one row of every class.
/// Returned index lists are sorted.
pub fn split_indices(
    labels: &[Label],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InsufficientData(format!(
            "split ratio {ratio} outside (0,1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in [Label::Benign, Label::Malicious] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(DatasetError::InsufficientData(format!(
                "{} {class} sample(s); need at least 2 per class",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        valid.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

pub fn split(
    data: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    let (t, v) = split_indices(&data.labels, ratio, seed)?;
    Ok((data.subset(&t), data.subset(&v)))
}

/// Stratified assignment of rows to `k` folds (round-robin per class after
/// a seeded shuffle).
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InsufficientData("need at least 2 folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in [Label::Benign, Label::Malicious] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(DatasetError::InsufficientData(format!(
                "{} {class} sample(s) for {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
