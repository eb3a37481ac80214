//! Static Android malware detection: APK parsing, a Boolean feature
//! embedding, a small fully connected classifier and classical baselines.

pub mod apk;
pub mod axml;
pub mod baselines;
pub mod cert;
pub mod dataset;
pub mod dex;
pub mod dnn;
pub mod eval;
pub mod features;
pub mod synth;

pub use dataset::{Label, LabeledDataset};
