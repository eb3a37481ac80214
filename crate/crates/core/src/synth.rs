//! Seeded synthetic corpora over a feature schema.
//!
//! Benign rows set every bit independently with probability `noise`.
//! Each malicious row draws one latent score `u ~ U(0,1)`; feature set K is
//! "active" when `u` falls in an interval of length `w_K` (its signal
//! weight). API, certificate and asset sets sit at the low end of the
//! score (`u < w_K`), permission and intent sets at the high end
//! (`u >= 1 - w_K`). An active set has all its bits on, an inactive one
//! falls back to per-bit `noise`, so each malicious bit in set K is on with
//! probability `w_K * (1 - noise) + noise`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Label, LabeledDataset};
use crate::features::{FeatureSchema, FeatureSet, FeatureVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_benign: usize,
    pub n_malicious: usize,
    pub seed: u64,
    /// Indexed by feature set, fs1..fs5.
    pub signal_weights: [f64; 5],
    pub noise: f64,
}

pub const DEFAULT_SIGNAL_WEIGHTS: [f64; 5] = [0.7, 0.55, 0.9, 0.8, 0.6];
pub const DEFAULT_NOISE: f64 = 0.1;

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_benign: 600,
            n_malicious: 600,
            seed: 7,
            signal_weights: DEFAULT_SIGNAL_WEIGHTS,
            noise: DEFAULT_NOISE,
        }
    }
}

impl SyntheticConfig {
    pub fn weight(&self, set: FeatureSet) -> f64 {
        self.signal_weights[set as usize]
    }

    pub fn set_weight(&mut self, set: FeatureSet, w: f64) {
        self.signal_weights[set as usize] = w;
    }

    /// Probability that a malicious row has a given bit of `set` on.
    pub fn malicious_rate(&self, set: FeatureSet) -> f64 {
        self.weight(set) * (1.0 - self.noise) + self.noise
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_benign == 0 || self.n_malicious == 0 {
            return Err(SynthError::InvalidConfig("both class counts must be at least 1".into()));
        }
        for set in FeatureSet::ALL {
            let w = self.weight(set);
            if !(0.0..=1.0).contains(&w) {
                return Err(SynthError::InvalidConfig(format!("{set} weight {w} outside [0,1]")));
            }
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(SynthError::InvalidConfig(format!(
                "noise {} outside [0,0.5)",
                self.noise
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SyntheticConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n_benign={} n_malicious={} seed={} noise={}",
            self.n_benign, self.n_malicious, self.seed, self.noise
        )?;
        for set in FeatureSet::ALL {
            write!(f, " w_{set}={}", self.weight(set))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

pub fn generate(cfg: &SyntheticConfig, schema: &FeatureSchema) -> Result<LabeledDataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = schema.len();
    let mut data = LabeledDataset::new();
    for i in 0..cfg.n_benign {
        let bits = (0..width).map(|_| rng.random_bool(cfg.noise)).collect();
        data.vectors.push(FeatureVector {
            app_id: format!("synth-b{i:05}"),
            bits,
        });
        data.labels.push(Label::Benign);
    }
    for i in 0..cfg.n_malicious {
        let mut bits = vec![false; width];
        let u: f64 = rng.random();
        for set in FeatureSet::ALL {
            let w = cfg.weight(set);
            let active = match set {
                FeatureSet::Fs1 | FeatureSet::Fs2 => u >= 1.0 - w,
                FeatureSet::Fs3 | FeatureSet::Fs4 | FeatureSet::Fs5 => u < w,
            };
            for b in &mut bits[schema.span(set)] {
                *b = active || rng.random_bool(cfg.noise);
            }
        }
        data.vectors.push(FeatureVector {
            app_id: format!("synth-m{i:05}"),
            bits,
        });
        data.labels.push(Label::Malicious);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::default_schema;

    #[test]
    fn degenerate_case_is_separable() {
        let cfg = SyntheticConfig {
            n_benign: 20,
            n_malicious: 20,
            signal_weights: [1.0; 5],
            noise: 0.0,
            ..SyntheticConfig::default()
        };
        let d = generate(&cfg, &default_schema()).unwrap();
        for (v, l) in d.vectors.iter().zip(&d.labels) {
            let want = *l == Label::Malicious;
            assert!(v.bits.iter().all(|&b| b == want));
        }
    }

    #[test]
    fn deterministic() {
        let s = default_schema();
        let cfg = SyntheticConfig::default();
        assert_eq!(generate(&cfg, &s).unwrap(), generate(&cfg, &s).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let s = default_schema();
        let mut cfg = SyntheticConfig { noise: 0.5, ..Default::default() };
        assert!(generate(&cfg, &s).is_err());
        cfg.noise = 0.1;
        cfg.set_weight(FeatureSet::Fs2, 1.5);
        assert!(generate(&cfg, &s).is_err());
        cfg.set_weight(FeatureSet::Fs2, 0.5);
        cfg.n_malicious = 0;
        assert!(generate(&cfg, &s).is_err());
    }
}
