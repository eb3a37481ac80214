use std::collections::BTreeSet;

use malnet_core::dataset::{split_indices, stratified_folds};
use malnet_core::features::{
    default_schema, load_schema, parse_subset, project, projected_width, subset_label, vectorize, AppFeatures,
    FeatureSet, FeatureVector,
};
use malnet_core::synth::{generate, SyntheticConfig};
use malnet_core::{Label, LabeledDataset};
use proptest::prelude::*;

fn labels_strategy() -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(any::<bool>(), 4..200).prop_map(|v| {
        v.into_iter()
            .map(|m| if m { Label::Malicious } else { Label::Benign })
            .collect()
    })
}

fn subset_strategy() -> impl Strategy<Value = BTreeSet<FeatureSet>> {
    prop::collection::btree_set(prop::sample::select(FeatureSet::ALL.to_vec()), 1..=5)
}

fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
    (1usize..12).prop_flat_map(|width| {
        prop::collection::vec(
            ("[ -~]{0,12}", prop::collection::vec(any::<bool>(), width), any::<bool>()),
            0..30,
        )
        .prop_map(|rows| {
            let mut d = LabeledDataset::new();
            for (id, bits, mal) in rows {
                let label = if mal { Label::Malicious } else { Label::Benign };
                d.push(FeatureVector { app_id: id, bits }, label).unwrap();
            }
            d
        })
    })
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(labels in labels_strategy(), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let count = |c: Label| labels.iter().filter(|&&l| l == c).count();
        let result = split_indices(&labels, ratio, seed);
        if count(Label::Benign) < 2 || count(Label::Malicious) < 2 {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let (train, valid) = result.unwrap();
        let mut all: Vec<usize> = train.iter().chain(&valid).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [Label::Benign, Label::Malicious] {
            let n = count(class);
            let t = train.iter().filter(|&&i| labels[i] == class).count();
            let want = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(t, want);
        }
        prop_assert_eq!(split_indices(&labels, ratio, seed).unwrap(), (train, valid));
    }

    #[test]
    fn folds_partition_rows(labels in labels_strategy(), k in 2usize..6, seed in any::<u64>()) {
        let count = |c: Label| labels.iter().filter(|&&l| l == c).count();
        let Ok(folds) = stratified_folds(&labels, k, seed) else {
            prop_assert!(count(Label::Benign) < k || count(Label::Malicious) < k);
            return Ok(());
        };
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [Label::Benign, Label::Malicious] {
            let sizes: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == class).count()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn csv_round_trip(d in dataset_strategy()) {
        let text = d.to_csv_string();
        let back = LabeledDataset::read_csv(text.as_bytes()).unwrap();
        if d.is_empty() {
            prop_assert!(back.is_empty());
        } else {
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn projection_keeps_selected_spans(bits in prop::collection::vec(any::<bool>(), 40), subset in subset_strategy()) {
        let schema = default_schema();
        let v = FeatureVector { app_id: "x".into(), bits: bits.clone() };
        let p = project(&v, &schema, &subset).unwrap();
        prop_assert_eq!(p.len(), projected_width(&schema, &subset));
        let want: Vec<bool> = (0..40)
            .filter(|&i| subset.iter().any(|&s| schema.span(s).contains(&i)))
            .map(|i| bits[i])
            .collect();
        prop_assert_eq!(p.bits, want);
        prop_assert_eq!(parse_subset(&subset_label(&subset)).unwrap(), subset);
    }

    #[test]
    fn vector_bits_follow_descriptors(
        perms in prop::collection::btree_set(prop::sample::select(vec![
            "android.permission.SEND_SMS",
            "android.permission.READ_SMS",
            "android.permission.INTERNET",
            "android.permission.READ_PHONE_STATE",
            "android.permission.RECORD_AUDIO",
            "android.permission.CAMERA",
        ]), 0..6),
        cert in any::<bool>(),
        asset in any::<bool>(),
    ) {
        let schema = default_schema();
        let f = AppFeatures {
            permissions: perms.iter().map(|s| s.to_string()).collect(),
            cert_invalid: cert,
            apk_in_assets: asset,
            ..Default::default()
        }
        .with_pairs();
        let v = vectorize(&f, &schema, "p");
        prop_assert_eq!(v.len(), schema.len());
        prop_assert_eq!(v.bits[schema.span(FeatureSet::Fs4).start], cert);
        prop_assert_eq!(v.bits[schema.span(FeatureSet::Fs5).start], asset);
        // no intents or API calls were observed
        prop_assert!(v.bits[schema.span(FeatureSet::Fs2)].iter().all(|&b| !b));
        prop_assert!(v.bits[schema.span(FeatureSet::Fs3)].iter().all(|&b| !b));
        let both = perms.contains("android.permission.INTERNET") && perms.contains("android.permission.READ_SMS");
        let pair = schema
            .descriptors()
            .iter()
            .position(|d| d.to_string() == "permpair android.permission.INTERNET+android.permission.READ_SMS")
            .unwrap();
        prop_assert_eq!(v.bits[pair], both);
    }
}

#[test]
fn default_schema_shape() {
    let s = default_schema();
    assert_eq!(s.len(), 40);
    let widths: Vec<usize> = FeatureSet::ALL.iter().map(|&f| s.span(f).len()).collect();
    assert_eq!(widths, vec![20, 11, 7, 1, 1]);
    assert_eq!(load_schema(&s.to_text()).unwrap(), s);
}

#[test]
fn schema_errors_name_the_line() {
    let e = load_schema("perm a\nintent b\nperm c\n").unwrap_err();
    assert_eq!(e.line, 3);
    assert!(load_schema("perm a\nbogus x\n").is_err());
    assert!(load_schema("perm a\nperm a\n").is_err());
}

#[test]
fn synthetic_marginals_match_configuration() {
    let schema = default_schema();
    let cfg = SyntheticConfig {
        n_benign: 2000,
        n_malicious: 2000,
        seed: 21,
        ..SyntheticConfig::default()
    };
    let d = generate(&cfg, &schema).unwrap();
    assert_eq!(d.class_counts(), [2000, 2000]);
    for set in FeatureSet::ALL {
        for class in [Label::Benign, Label::Malicious] {
            let rows: Vec<&FeatureVector> = d
                .vectors
                .iter()
                .zip(&d.labels)
                .filter(|(_, &l)| l == class)
                .map(|(v, _)| v)
                .collect();
            let span = schema.span(set);
            let on: usize = rows.iter().map(|v| v.bits[span.clone()].iter().filter(|&&b| b).count()).sum();
            let rate = on as f64 / (rows.len() * span.len()) as f64;
            let want = match class {
                Label::Benign => cfg.noise,
                Label::Malicious => cfg.weight(set) * (1.0 - cfg.noise) + cfg.noise,
            };
            assert!((rate - want).abs() <= 0.05, "{set} {class}: {rate} vs {want}");
        }
    }
}
