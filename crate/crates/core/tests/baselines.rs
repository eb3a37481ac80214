use malnet_core::baselines::{
    BaselineConfig, BaselineKind, BaselineModel, DecisionTree, KnnModel, LinearSvm, Node, RandomForest,
    TreeParams,
};
use malnet_core::dataset::{Label, LabeledDataset};
use malnet_core::features::{default_schema, FeatureVector};
use malnet_core::synth::{generate, SyntheticConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(n: usize, width: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = LabeledDataset::new();
    for i in 0..n {
        let bits: Vec<bool> = (0..width).map(|_| rng.random_bool(0.4)).collect();
        // noisy rule on the first two bits
        let mal = (bits[0] || bits[1]) ^ rng.random_bool(0.15);
        let label = if mal { Label::Malicious } else { Label::Benign };
        d.push(FeatureVector { app_id: format!("r{i}"), bits }, label).unwrap();
    }
    d
}

fn small_synth(seed: u64) -> LabeledDataset {
    let cfg = SyntheticConfig {
        n_benign: 60,
        n_malicious: 60,
        seed,
        ..SyntheticConfig::default()
    };
    generate(&cfg, &default_schema()).unwrap()
}

/// Majority vote of the k rows with smallest (distance, index), by full sort
/// of every training row.
fn knn_oracle(train: &LabeledDataset, k: usize, q: &[bool]) -> Label {
    let mut all: Vec<(usize, usize, Label)> = Vec::new();
    for (i, (v, &l)) in train.vectors.iter().zip(&train.labels).enumerate() {
        let d = v.bits.iter().zip(q).filter(|(a, b)| a != b).count();
        all.push((d, i, l));
    }
    all.sort();
    let mal = all[..k].iter().filter(|t| t.2 == Label::Malicious).count();
    if mal > k - mal {
        Label::Malicious
    } else {
        Label::Benign
    }
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let train = random_data(150, 12, 1);
    let queries = random_data(100, 12, 2);
    for k in [1, 3, 5, 7] {
        let m = KnnModel::fit(&train, k).unwrap();
        for q in &queries.vectors {
            assert_eq!(m.predict(&q.bits), knn_oracle(&train, k, &q.bits), "k={k}");
        }
    }
}

#[test]
fn knn_rejects_bad_k() {
    let train = random_data(10, 4, 1);
    assert!(KnnModel::fit(&train, 2).is_err());
    assert!(KnnModel::fit(&train, 0).is_err());
    assert!(KnnModel::fit(&train, 11).is_err());
}

fn gini_impurity(rows: &[(Vec<bool>, Label)]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let p = rows.iter().filter(|r| r.1 == Label::Malicious).count() as f64 / rows.len() as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[test]
fn root_split_is_the_best_gini_split() {
    for seed in 0..20 {
        let data = random_data(40, 4, 100 + seed);
        let rows: Vec<(Vec<bool>, Label)> = data
            .vectors
            .iter()
            .map(|v| v.bits.clone())
            .zip(data.labels.iter().copied())
            .collect();
        let parent = gini_impurity(&rows);
        let mut best: Option<(usize, f64)> = None;
        for f in 0..4 {
            let (on, off): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.0[f]);
            if on.is_empty() || off.is_empty() {
                continue;
            }
            let n = rows.len() as f64;
            let gain = parent - (on.len() as f64 * gini_impurity(&on) + off.len() as f64 * gini_impurity(&off)) / n;
            if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g + 1e-12) {
                best = Some((f, gain));
            }
        }
        let params = TreeParams {
            max_depth: 3,
            min_leaf: 1,
            max_features: None,
        };
        let tree = DecisionTree::fit(&data, params, 0).unwrap();
        match (tree.nodes[0], best) {
            (Node::Split { feature, .. }, Some((f, _))) => assert_eq!(feature, f, "seed {seed}"),
            (Node::Leaf(_), None) => {}
            (node, b) => panic!("seed {seed}: tree root {node:?}, oracle {b:?}"),
        }
    }
}

fn train_accuracy(tree: &DecisionTree, d: &LabeledDataset) -> f64 {
    let ok = d
        .vectors
        .iter()
        .zip(&d.labels)
        .filter(|(v, &l)| tree.predict(&v.bits) == l)
        .count();
    ok as f64 / d.len() as f64
}

#[test]
fn tree_training_accuracy_grows_with_depth() {
    let data = small_synth(3);
    let mut prev = 0.0;
    for depth in 0..=8 {
        let params = TreeParams {
            max_depth: depth,
            min_leaf: 1,
            max_features: None,
        };
        let tree = DecisionTree::fit(&data, params, 0).unwrap();
        assert!(tree.depth() <= depth);
        let acc = train_accuracy(&tree, &data);
        assert!(acc + 1e-12 >= prev, "depth {depth}: {acc} < {prev}");
        prev = acc;
    }
    assert!(prev > 0.9);
}

#[test]
fn tree_text_round_trip() {
    let tree = DecisionTree::fit(&small_synth(4), TreeParams::default(), 0).unwrap();
    let back = DecisionTree::from_text(&tree.to_text()).unwrap();
    assert_eq!(back, tree);
}

#[test]
fn forest_is_deterministic_and_accurate() {
    let data = small_synth(5);
    let a = RandomForest::fit(&data, 15, 6, 2, 9).unwrap();
    let b = RandomForest::fit(&data, 15, 6, 2, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(RandomForest::from_text(&a.to_text()).unwrap(), a);
    let ok = data
        .vectors
        .iter()
        .zip(&data.labels)
        .filter(|(v, &l)| a.predict(&v.bits) == l)
        .count();
    assert!(ok as f64 / data.len() as f64 > 0.9);
}

#[test]
fn svm_objective_decreases() {
    let data = small_synth(6);
    let lambda = 1e-2;
    let (svm, history) = LinearSvm::fit_with_history(&data, lambda, 60, 1).unwrap();
    // the zero model scores exactly 1 (every hinge term is 1)
    let start = LinearSvm {
        weights: vec![0.0; data.width()],
        bias: 0.0,
    };
    assert_eq!(start.objective(&data, lambda), 1.0);
    assert!(history[0] < 1.0);
    let head: f64 = history[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = history[50..].iter().sum::<f64>() / 10.0;
    assert!(tail <= head, "{tail} > {head}");
    assert_eq!(*history.last().unwrap(), svm.objective(&data, lambda));
}

#[test]
fn svm_rejects_single_class() {
    let mut d = LabeledDataset::new();
    for i in 0..5 {
        d.push(FeatureVector { app_id: i.to_string(), bits: vec![true, false] }, Label::Benign)
            .unwrap();
    }
    assert!(LinearSvm::fit(&d, 1e-3, 5, 0).is_err());
}

#[test]
fn every_baseline_round_trips_through_text() {
    let data = small_synth(8);
    let cfg = BaselineConfig {
        n_trees: 5,
        svm_epochs: 10,
        ..BaselineConfig::default()
    };
    for kind in BaselineKind::ALL {
        let m = BaselineModel::train(kind, &data, &cfg).unwrap();
        let text = m.to_text();
        let back = BaselineModel::from_text(&text).unwrap();
        assert_eq!(back.kind(), kind);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.predict_all(&data).unwrap(), m.predict_all(&data).unwrap());
        assert!(m.predict(&[true]).is_err());
    }
}
