use malnet_core::baselines::{BaselineConfig, BaselineKind};
use malnet_core::dnn::TrainConfig;
use malnet_core::eval::{
    self, compute_metrics, default_factory, report, ConfusionMatrix, MetricsError, ABLATION_HEADER,
    COMPARE_CLASSIFIERS,
};
use malnet_core::features::default_schema;
use malnet_core::synth::{generate, SyntheticConfig};
use malnet_core::{Label, LabeledDataset};

#[test]
fn metrics_match_brute_force() {
    let mut checked = 0;
    for total in 1..=50u64 {
        for tp in 0..=total {
            for tn in 0..=total - tp {
                for fp in 0..=total - tp - tn {
                    let fn_ = total - tp - tn - fp;
                    let m = compute_metrics(&ConfusionMatrix::new(tp, tn, fp, fn_)).unwrap();
                    let want = malnet_testkit::oracle::metrics(tp, tn, fp, fn_);
                    let got = [m.accuracy, m.precision, m.recall, m.f1];
                    for (g, w) in got.iter().zip(want) {
                        assert!((g - w).abs() <= 1e-12, "{tp} {tn} {fp} {fn_}");
                    }
                    assert_eq!(m.precision_undefined, tp + fp == 0);
                    assert_eq!(m.recall_undefined, tp + fn_ == 0);
                    assert_eq!(m.f1_undefined, tp == 0);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 316_250);
    assert_eq!(
        compute_metrics(&ConfusionMatrix::default()),
        Err(MetricsError::EmptyEvaluation)
    );
}

#[test]
fn confusion_from_labels() {
    use Label::*;
    let truth = [Malicious, Malicious, Benign, Benign, Malicious];
    let pred = [Malicious, Benign, Benign, Malicious, Malicious];
    assert_eq!(ConfusionMatrix::from_labels(&truth, &pred), ConfusionMatrix::new(2, 1, 1, 1));
}

fn small() -> LabeledDataset {
    let cfg = SyntheticConfig {
        n_benign: 40,
        n_malicious: 40,
        seed: 2,
        ..SyntheticConfig::default()
    };
    generate(&cfg, &default_schema()).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    }
}

fn tiny_factory(width: usize) -> Result<malnet_core::dnn::MlpModel, malnet_core::dnn::DnnError> {
    malnet_core::dnn::init_model(&[width, 8, 2], 1)
}

#[test]
fn ablation_rows_follow_request_order() {
    let data = small();
    let subsets = ["fs2", "all", "fs4+fs5", "bogus", "fs1"];
    let rows = eval::ablation(&data, &default_schema(), &subsets, &tiny_factory, &quick()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.subset.as_str()).collect();
    assert_eq!(names, subsets);
    let widths: Vec<usize> = rows.iter().map(|r| r.width).collect();
    assert_eq!(widths, vec![11, 40, 2, 0, 20]);
    assert!(rows[3].result.is_err());
    assert!(rows.iter().enumerate().all(|(i, r)| i == 3 || r.result.is_ok()));
    let cells = eval::ablation_rows(&rows);
    assert!(cells.iter().all(|c| c.len() == ABLATION_HEADER.len()));
    assert!(!cells[3][6].is_empty());
}

#[test]
fn compare_produces_five_rows() {
    let data = small();
    let bcfg = BaselineConfig {
        n_trees: 5,
        svm_epochs: 5,
        ..BaselineConfig::default()
    };
    let rows = eval::compare(&data, &tiny_factory, &quick(), &bcfg).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.classifier.as_str()).collect();
    assert_eq!(names, COMPARE_CLASSIFIERS);
    for r in &rows {
        assert_eq!(r.result.as_ref().unwrap().confusion.total(), 16);
    }
}

#[test]
fn cross_validation_pools_every_row_once() {
    let data = small();
    let bcfg = BaselineConfig::default();
    let cv = eval::cross_validate_baseline(&data, 4, BaselineKind::Knn, &bcfg).unwrap();
    assert_eq!(cv.folds.len(), 4);
    assert_eq!(cv.pooled.unwrap().confusion.total(), data.len() as u64);
    let cv = eval::cross_validate_dnn(&data, 3, &tiny_factory, &quick()).unwrap();
    assert_eq!(cv.pooled.unwrap().confusion.total(), data.len() as u64);
}

#[test]
fn default_factory_builds_reference_topology() {
    let m = default_factory(3)(17).unwrap();
    assert_eq!(m.dims, vec![17, 250, 200, 150, 100, 2]);
}

#[test]
fn report_formats() {
    let cm = ConfusionMatrix::new(3, 3, 1, 1);
    let m = compute_metrics(&cm).unwrap();
    assert_eq!(
        report::metrics_csv(&m, &cm),
        "metric,value\naccuracy,0.75\nprecision,0.75\nrecall,0.75\nf1,0.75\ntp,3\ntn,3\nfp,1\nfn,1\n"
    );
    let t = report::text_table(&["name", "x"], &[vec!["a".into(), "1.5".into()], vec!["bb".into(), "10".into()]]);
    assert_eq!(t, "name    x\n----  ---\na     1.5\nbb     10\n");
    let csv = report::table_csv(&["a", "b"], &[vec!["x,y".into(), "1".into()]]);
    assert_eq!(csv, "a,b\n\"x,y\",1\n");
}
