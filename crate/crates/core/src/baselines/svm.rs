use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_train, BaselineError, Lines, ParseError};
use crate::dataset::{Label, LabeledDataset};

/// Linear SVM; `bias` multiplies an implicit constant-1 input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sign_of(l: Label) -> f64 {
    match l {
        Label::Malicious => 1.0,
        Label::Benign => -1.0,
    }
}

fn dot(w: &[f64], x: &[bool]) -> f64 {
    w.iter().zip(x).filter(|(_, &b)| b).map(|(w, _)| w).sum()
}

impl LinearSvm {
    pub fn decision(&self, x: &[bool]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Positive margin is malicious; zero goes to benign.
    pub fn predict(&self, x: &[bool]) -> Label {
        if self.decision(x) > 0.0 {
            Label::Malicious
        } else {
            Label::Benign
        }
    }

    /// `lambda/2 * (|w|^2 + b^2)` plus mean hinge loss over `data`.
    pub fn objective(&self, data: &LabeledDataset, lambda: f64) -> f64 {
        let reg = self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias;
        let hinge: f64 = data
            .vectors
            .iter()
            .zip(&data.labels)
            .map(|(v, &l)| (1.0 - sign_of(l) * self.decision(&v.bits)).max(0.0))
            .sum();
        lambda / 2.0 * reg + hinge / data.len() as f64
    }

    /// Pegasos stochastic subgradient descent with step `1/(lambda t)`,
    /// one seeded pass over the data per epoch. Returns the model and the
    /// objective after each epoch.
    pub fn fit_with_history(
        train: &LabeledDataset,
        lambda: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<(LinearSvm, Vec<f64>), BaselineError> {
        check_train(train)?;
        let [b, m] = train.class_counts();
        if b == 0 || m == 0 {
            return Err(BaselineError::SingleClassData);
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(BaselineError::BadParameter(format!("lambda must be positive, got {lambda}")));
        }
        let width = train.width();
        let mut svm = LinearSvm {
            weights: vec![0.0; width],
            bias: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let radius = 1.0 / lambda.sqrt();
        let mut t = 0u64;
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let x = &train.vectors[i].bits;
                let y = sign_of(train.labels[i]);
                let violated = y * svm.decision(x) < 1.0;
                let shrink = 1.0 - eta * lambda;
                svm.weights.iter_mut().for_each(|w| *w *= shrink);
                svm.bias *= shrink;
                if violated {
                    for (w, _) in svm.weights.iter_mut().zip(x).filter(|(_, &b)| b) {
                        *w += eta * y;
                    }
                    svm.bias += eta * y;
                }
                let norm = (svm.weights.iter().map(|w| w * w).sum::<f64>() + svm.bias * svm.bias).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    svm.weights.iter_mut().for_each(|w| *w *= s);
                    svm.bias *= s;
                }
            }
            history.push(svm.objective(train, lambda));
        }
        Ok((svm, history))
    }

    pub fn fit(train: &LabeledDataset, lambda: f64, epochs: usize, seed: u64) -> Result<LinearSvm, BaselineError> {
        Self::fit_with_history(train, lambda, epochs, seed).map(|(m, _)| m)
    }

    pub fn to_text(&self) -> String {
        let w: Vec<String> = self.weights.iter().map(|v| format!("{v:?}")).collect();
        format!("SVM v1\n{}\n{}\n{:?}\n", self.weights.len(), w.join(" "), self.bias)
    }

    pub fn from_text(text: &str) -> Result<LinearSvm, ParseError> {
        let mut lines = Lines::new(text, "SVM v1")?;
        let [width] = lines.numbers::<1>()?;
        let (line, w) = lines.next()?;
        let weights = super::parse_reals(line, w)?;
        if weights.len() != width {
            return Err(ParseError::Line { line, msg: format!("expected {width} weights") });
        }
        let (line, b) = lines.next()?;
        let bias = match super::parse_reals(line, b)?.as_slice() {
            [b] => *b,
            _ => return Err(ParseError::Line { line, msg: "expected one bias".into() }),
        };
        lines.finish()?;
        Ok(LinearSvm { weights, bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    #[test]
    fn sign_rule() {
        let s = LinearSvm { weights: vec![1.0, -1.0], bias: 0.0 };
        assert_eq!(s.predict(&[true, false]), Label::Malicious);
        assert_eq!(s.predict(&[true, true]), Label::Benign);
    }

    #[test]
    fn one_dimensional_separable() {
        let mut d = LabeledDataset::new();
        d.push(FeatureVector { app_id: "n".into(), bits: vec![false] }, Label::Benign).unwrap();
        d.push(FeatureVector { app_id: "p".into(), bits: vec![true] }, Label::Malicious).unwrap();
        let s = LinearSvm::fit(&d, 1e-3, 100, 0).unwrap();
        assert_eq!(s.predict(&[false]), Label::Benign);
        assert_eq!(s.predict(&[true]), Label::Malicious);
    }

    #[test]
    fn single_class_rejected() {
        let mut d = LabeledDataset::new();
        d.push(FeatureVector { app_id: "n".into(), bits: vec![false] }, Label::Benign).unwrap();
        assert_eq!(LinearSvm::fit(&d, 1e-3, 1, 0), Err(BaselineError::SingleClassData));
    }

    #[test]
    fn text_round_trip() {
        let s = LinearSvm { weights: vec![0.1, -2.5e-9, 3.0], bias: -0.75 };
        assert_eq!(LinearSvm::from_text(&s.to_text()).unwrap(), s);
        assert!(LinearSvm::from_text("SVM v1\n2\n1.0\n0.0\n").is_err());
    }
}
