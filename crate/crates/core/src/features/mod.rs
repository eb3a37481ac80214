//! Feature universe, per-app extraction and the Boolean embedding.

mod extract;
mod schema;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::axml::PermissionPair;
use crate::dex::ApiCategory;

pub use extract::{extract, extract_with, open_archive, ExtractOptions, Extraction, ExtractionError, Stage};
pub use schema::{
    default_schema, load_schema, parse_subset, subset_label, FeatureDescriptor, FeatureSchema,
    FeatureSet, SchemaParseError, DEFAULT_SCHEMA,
};

/// Everything observed about one application, before embedding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppFeatures {
    pub permissions: BTreeSet<String>,
    pub permission_pairs: BTreeSet<PermissionPair>,
    pub intent_actions: BTreeSet<String>,
    pub api_categories: BTreeSet<ApiCategory>,
    pub cert_invalid: bool,
    pub apk_in_assets: bool,
}

impl AppFeatures {
    /// Recomputes `permission_pairs` from `permissions`.
    pub fn with_pairs(mut self) -> Self {
        self.permission_pairs = crate::axml::pairs_of(&self.permissions);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub app_id: String,
    pub bits: Vec<bool>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature subset is empty")]
    EmptySubset,
    #[error("vector has {got} bits but schema has {want}")]
    WidthMismatch { got: usize, want: usize },
}

/// Indicator of one descriptor against an app.
pub fn matches(d: &FeatureDescriptor, f: &AppFeatures) -> bool {
    match d {
        FeatureDescriptor::Perm(p) => f.permissions.contains(p),
        FeatureDescriptor::PermPair(pair) => {
            f.permissions.contains(pair.first()) && f.permissions.contains(pair.second())
        }
        FeatureDescriptor::Intent(a) => f.intent_actions.contains(a),
        FeatureDescriptor::Api(c) => f.api_categories.contains(c),
        FeatureDescriptor::CertInvalid => f.cert_invalid,
        FeatureDescriptor::ApkInAssets => f.apk_in_assets,
    }
}

/// Embeds an app into `{0,1}^|S|`.
pub fn vectorize(features: &AppFeatures, schema: &FeatureSchema, app_id: &str) -> FeatureVector {
    FeatureVector {
        app_id: app_id.to_string(),
        bits: schema.descriptors().iter().map(|d| matches(d, features)).collect(),
    }
}

/// Concatenates the spans of `subset`, in schema order.
pub fn project(
    vector: &FeatureVector,
    schema: &FeatureSchema,
    subset: &BTreeSet<FeatureSet>,
) -> Result<FeatureVector, FeatureError> {
    if subset.is_empty() {
        return Err(FeatureError::EmptySubset);
    }
    if vector.len() != schema.len() {
        return Err(FeatureError::WidthMismatch {
            got: vector.len(),
            want: schema.len(),
        });
    }
    let mut bits = Vec::new();
    for set in FeatureSet::ALL.into_iter().filter(|s| subset.contains(s)) {
        bits.extend_from_slice(&vector.bits[schema.span(set)]);
    }
    Ok(FeatureVector {
        app_id: vector.app_id.clone(),
        bits,
    })
}

/// Width of the projection of `subset`.
pub fn projected_width(schema: &FeatureSchema, subset: &BTreeSet<FeatureSet>) -> usize {
    subset.iter().map(|&s| schema.span(s).len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perms(p: &[&str]) -> AppFeatures {
        AppFeatures {
            permissions: p.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
        .with_pairs()
    }

    #[test]
    fn empty_app_is_zero_vector() {
        let s = default_schema();
        let v = vectorize(&AppFeatures::default(), &s, "x");
        assert_eq!(v.len(), 40);
        assert!(v.bits.iter().all(|b| !b));
    }

    #[test]
    fn single_descriptor_gives_unit_vector() {
        let s = default_schema();
        let FeatureDescriptor::Perm(p) = &s.descriptors()[3] else { panic!() };
        let v = vectorize(&perms(&[p]), &s, "x");
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn pair_needs_both_members() {
        let s = load_schema("permpair A+B\n").unwrap();
        assert_eq!(vectorize(&perms(&["A"]), &s, "").bits, vec![false]);
        assert_eq!(vectorize(&perms(&["B", "A"]), &s, "").bits, vec![true]);
    }

    #[test]
    fn projection() {
        let s = default_schema();
        let mut f = AppFeatures::default();
        f.api_categories.insert(ApiCategory::Crypto);
        f.cert_invalid = true;
        let v = vectorize(&f, &s, "a");
        let all = parse_subset("all").unwrap();
        assert_eq!(project(&v, &s, &all).unwrap(), v);
        let fs3 = project(&v, &s, &parse_subset("fs3").unwrap()).unwrap();
        assert_eq!(fs3.bits, vec![false, false, false, false, false, false, true]);
        assert_eq!(project(&v, &s, &BTreeSet::new()), Err(FeatureError::EmptySubset));
        let short = FeatureVector { app_id: String::new(), bits: vec![true] };
        assert!(matches!(project(&short, &s, &all), Err(FeatureError::WidthMismatch { .. })));
    }
}
