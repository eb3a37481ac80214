use super::{check_train, BaselineError, ParseError};
use crate::dataset::{Label, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnModel {
    pub k: usize,
    pub vectors: Vec<Vec<bool>>,
    pub labels: Vec<Label>,
}

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl KnnModel {
    pub fn fit(train: &LabeledDataset, k: usize) -> Result<KnnModel, BaselineError> {
        check_train(train)?;
        if k == 0 || k % 2 == 0 || k > train.len() {
            return Err(BaselineError::BadK { k, n: train.len() });
        }
        Ok(KnnModel {
            k,
            vectors: train.vectors.iter().map(|v| v.bits.clone()).collect(),
            labels: train.labels.clone(),
        })
    }

    pub fn width(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances keep the lower index first.
    pub fn neighbours(&self, x: &[bool]) -> Vec<usize> {
        let mut order: Vec<(usize, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (hamming(v, x), i))
            .collect();
        order.sort_unstable();
        order.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[bool]) -> Label {
        let votes = self
            .neighbours(x)
            .into_iter()
            .filter(|&i| self.labels[i] == Label::Malicious)
            .count();
        if 2 * votes > self.k {
            Label::Malicious
        } else {
            Label::Benign
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("KNN v1\n{} {} {}\n", self.k, self.width(), self.vectors.len());
        for (v, l) in self.vectors.iter().zip(&self.labels) {
            out.push_str(&l.index().to_string());
            out.push(' ');
            out.extend(v.iter().map(|&b| if b { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<KnnModel, ParseError> {
        let mut lines = super::Lines::new(text, "KNN v1")?;
        let [k, width, n] = lines.numbers::<3>()?;
        let mut vectors = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, row) = lines.next()?;
            let bad = |msg: &str| ParseError::Line { line, msg: msg.to_string() };
            let (l, bits) = row.split_once(' ').ok_or_else(|| bad("expected `label bits`"))?;
            labels.push(super::parse_label(l).ok_or_else(|| bad("label must be 0 or 1"))?);
            let bits = super::parse_bits(bits).ok_or_else(|| bad("bits must be 0/1"))?;
            if bits.len() != width {
                return Err(bad("row width differs from header"));
            }
            vectors.push(bits);
        }
        lines.finish()?;
        if k == 0 || k % 2 == 0 || k > n {
            return Err(ParseError::Invalid(format!("k={k} invalid for {n} rows")));
        }
        Ok(KnnModel { k, vectors, labels })
    }
}

/// Majority label among the `k` nearest training rows of `x`.
pub fn knn_predict(train: &LabeledDataset, k: usize, x: &[bool]) -> Result<Label, BaselineError> {
    Ok(KnnModel::fit(train, k)?.predict(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn data(rows: &[(&[bool], Label)]) -> LabeledDataset {
        let mut d = LabeledDataset::new();
        for (i, (b, l)) in rows.iter().enumerate() {
            d.push(FeatureVector { app_id: i.to_string(), bits: b.to_vec() }, *l).unwrap();
        }
        d
    }

    #[test]
    fn nearest_point_wins_with_k1() {
        let d = data(&[
            (&[true, false, false], Label::Malicious),
            (&[false, false, false], Label::Benign),
        ]);
        assert_eq!(knn_predict(&d, 1, &[true, false, false]).unwrap(), Label::Malicious);
        assert_eq!(knn_predict(&d, 1, &[false, false, false]).unwrap(), Label::Benign);
    }

    #[test]
    fn majority_of_three() {
        // distances 0, 1, 5 with labels 1, 1, 0
        let d = data(&[
            (&[false; 5], Label::Malicious),
            (&[true, false, false, false, false], Label::Malicious),
            (&[true; 5], Label::Benign),
        ]);
        assert_eq!(knn_predict(&d, 3, &[false; 5]).unwrap(), Label::Malicious);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let d = data(&[
            (&[true, false], Label::Benign),
            (&[false, true], Label::Malicious),
        ]);
        let m = KnnModel::fit(&d, 1).unwrap();
        assert_eq!(m.neighbours(&[false, false]), vec![0]);
    }

    #[test]
    fn bad_k_and_empty() {
        let d = data(&[(&[true], Label::Benign), (&[false], Label::Malicious)]);
        assert!(matches!(KnnModel::fit(&d, 2), Err(BaselineError::BadK { .. })));
        assert!(matches!(KnnModel::fit(&d, 3), Err(BaselineError::BadK { .. })));
        assert!(matches!(KnnModel::fit(&d, 0), Err(BaselineError::BadK { .. })));
        assert_eq!(KnnModel::fit(&LabeledDataset::new(), 1), Err(BaselineError::EmptyTrainSet));
    }

    #[test]
    fn text_round_trip() {
        let d = data(&[
            (&[true, false], Label::Benign),
            (&[false, true], Label::Malicious),
            (&[true, true], Label::Malicious),
        ]);
        let m = KnnModel::fit(&d, 3).unwrap();
        assert_eq!(KnnModel::from_text(&m.to_text()).unwrap(), m);
        assert!(KnnModel::from_text("KNN v1\n3 2 1\n1 10\n").is_err());
    }
}
