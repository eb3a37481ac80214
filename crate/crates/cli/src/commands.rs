use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;

use malnet_core::baselines::{BaselineConfig, BaselineKind, BaselineModel};
use malnet_core::cert::CertPolicy;
use malnet_core::dataset::LabeledDataset;
use malnet_core::dnn::{self, MlpModel, TrainConfig};
use malnet_core::eval::{self, report, CompareRow, ConfusionMatrix, Evaluation};
use malnet_core::features::{
    self, extract_with, open_archive, vectorize, AppFeatures, ExtractOptions, FeatureSchema,
    FeatureSet, FeatureVector,
};
use malnet_core::synth::{self, SyntheticConfig};
use malnet_core::Label;

use crate::config::{BaselineArgs, Cli, Command, ModelArgs, Shared};
use crate::InvariantViolation;

/// Exit code for a malicious verdict from `scan`.
const EXIT_MALICIOUS: u8 = 3;

/// Effective configuration, echoed to stderr before a command runs.
struct Echo(Vec<(String, String)>);

impl Echo {
    fn new(command: &str, shared: &Shared, now: DateTime<Utc>) -> Echo {
        let mut e = Echo(Vec::new());
        e.add("command", command);
        e.add("now", now.to_rfc3339_opts(SecondsFormat::Secs, true));
        e.add("seed", shared.seed);
        e.add(
            "schema",
            shared
                .schema
                .as_ref()
                .map_or("built-in".to_string(), |p| p.display().to_string()),
        );
        e
    }

    fn add(&mut self, k: &str, v: impl ToString) {
        self.0.push((k.to_string(), v.to_string()));
    }

    fn training(&mut self, shared: &Shared, model: &ModelArgs) {
        self.add("lr", shared.lr);
        self.add("epochs", shared.epochs);
        self.add("batch", shared.batch);
        self.add("split", shared.split);
        self.add("loss", model.loss);
        let hidden: Vec<String> = model.hidden.0.iter().map(usize::to_string).collect();
        self.add("hidden", hidden.join(","));
    }

    fn cert(&mut self, shared: &Shared) {
        self.add("lenient", shared.lenient);
        self.add("allow_unsigned", shared.allow_unsigned);
        self.add("skip_digest_check", shared.skip_digest_check);
        self.add("skip_validity_check", shared.skip_validity_check);
    }

    fn print(&self) {
        let line: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        eprintln!("config: {}", line.join(" "));
    }
}

fn schema(shared: &Shared) -> Result<FeatureSchema> {
    match &shared.schema {
        None => Ok(features::default_schema()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read schema {}", p.display()))?;
            features::load_schema(&text).with_context(|| format!("schema {}", p.display()))
        }
    }
}

fn extract_options(shared: &Shared) -> ExtractOptions {
    ExtractOptions {
        lenient: shared.lenient,
        cert_policy: CertPolicy {
            require_signature: !shared.allow_unsigned,
            check_digests: !shared.skip_digest_check,
            check_validity: !shared.skip_validity_check,
        },
        ..ExtractOptions::default()
    }
}

fn train_config(shared: &Shared, model: &ModelArgs) -> TrainConfig {
    TrainConfig {
        learning_rate: shared.lr,
        epochs: shared.epochs,
        batch_size: shared.batch,
        seed: shared.seed,
        split_ratio: shared.split,
        loss: model.loss,
    }
}

fn dims(width: usize, hidden: &[usize]) -> Vec<usize> {
    let mut d = vec![width];
    d.extend_from_slice(hidden);
    d.push(2);
    d
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn read_features(path: &Path) -> Result<LabeledDataset> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    LabeledDataset::read_csv(f).with_context(|| format!("feature CSV {}", path.display()))
}

enum AnyModel {
    Mlp(MlpModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    fn load(path: &Path) -> Result<AnyModel> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
        if text.starts_with("MLP ") {
            dnn::load_model(&text)
                .map(AnyModel::Mlp)
                .with_context(|| format!("model {}", path.display()))
        } else {
            BaselineModel::from_text(&text)
                .map(AnyModel::Baseline)
                .with_context(|| format!("model {}", path.display()))
        }
    }

    fn width(&self) -> usize {
        match self {
            AnyModel::Mlp(m) => m.input_width(),
            AnyModel::Baseline(b) => b.width(),
        }
    }

    fn name(&self) -> String {
        match self {
            AnyModel::Mlp(_) => "DNN".into(),
            AnyModel::Baseline(b) => b.kind().to_string(),
        }
    }

    /// Label and, for the network, the winning probability.
    fn predict(&self, bits: &[bool]) -> Result<(Label, Option<f64>)> {
        match self {
            AnyModel::Mlp(m) => {
                let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let (l, p) = dnn::predict(m, &x)?;
                Ok((l, Some(p)))
            }
            AnyModel::Baseline(b) => Ok((b.predict(bits)?, None)),
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    let shared = &cli.shared;
    let now = shared.now.unwrap_or_else(Utc::now);
    match &cli.command {
        Command::Scan { apk, model } => scan(shared, now, apk, model),
        Command::Extract { manifest } => extract(shared, now, manifest),
        Command::Synth {
            benign,
            malicious,
            noise,
            weights,
        } => synth_cmd(shared, now, *benign, *malicious, *noise, weights),
        Command::Train {
            features,
            model,
            metrics_out,
            curves_out,
            cv_folds,
        } => train(shared, now, features, model, metrics_out.as_deref(), curves_out.as_deref(), *cv_folds),
        Command::Eval { features, model } => eval_cmd(shared, now, features, model),
        Command::Ablate {
            features,
            subsets,
            model,
        } => ablate(shared, now, features, subsets.as_deref(), model),
        Command::Compare {
            features,
            model,
            baseline,
            cv_folds,
        } => compare(shared, now, features, model, baseline, *cv_folds),
    }
}

fn describe_bits(schema: &FeatureSchema, v: &FeatureVector) -> String {
    let mut out = String::new();
    for set in FeatureSet::ALL {
        let fired: Vec<String> = schema
            .span(set)
            .filter(|&i| v.bits[i])
            .map(|i| schema.descriptors()[i].to_string())
            .collect();
        let listed = if fired.is_empty() { "-".to_string() } else { fired.join(", ") };
        out.push_str(&format!("{set} {:<24} {}\n", set.title(), listed));
    }
    out
}

fn scan(shared: &Shared, now: DateTime<Utc>, apk: &Path, model_path: &Path) -> Result<u8> {
    let mut echo = Echo::new("scan", shared, now);
    echo.add("apk", apk.display());
    echo.add("model", model_path.display());
    echo.cert(shared);
    echo.print();

    let schema = schema(shared)?;
    let model = AnyModel::load(model_path)?;
    if model.width() != schema.len() {
        bail!(
            "model expects {} features but the schema defines {}",
            model.width(),
            schema.len()
        );
    }
    let bytes = fs::read(apk).with_context(|| format!("container stage: cannot read {}", apk.display()))?;
    let archive = open_archive(bytes).with_context(|| apk.display().to_string())?;
    let extraction =
        extract_with(&archive, now, &extract_options(shared)).with_context(|| apk.display().to_string())?;
    for w in &extraction.warnings {
        log::warn!("{}: {w}", apk.display());
    }
    let v = vectorize(&extraction.features, &schema, &apk.display().to_string());
    let (label, p) = model.predict(&v.bits)?;

    let mut out = format!("apk: {}\n", apk.display());
    if let Some(pkg) = &extraction.package_name {
        out.push_str(&format!("package: {pkg}\n"));
    }
    out.push_str(&format!("now: {}\n", now.to_rfc3339_opts(SecondsFormat::Secs, true)));
    for r in &extraction.signature.reasons {
        out.push_str(&format!("certificate: {r}\n"));
    }
    out.push_str(&describe_bits(&schema, &v));
    out.push_str(&format!("classifier: {}\n", model.name()));
    out.push_str(&format!("label: {label}\n"));
    if let Some(p) = p {
        out.push_str(&format!("probability: {p:.6}\n"));
    }
    print!("{out}");
    if let Some(path) = &shared.out {
        write_output(Some(path), &out)?;
    }
    Ok(if label == Label::Malicious { EXIT_MALICIOUS } else { 0 })
}

struct ManifestRow {
    apk_path: String,
    label: Label,
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim() {
        "0" | "benign" => Some(Label::Benign),
        "1" | "malicious" => Some(Label::Malicious),
        _ => None,
    }
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open manifest {}", path.display()))?;
    let mut r = csv::Reader::from_reader(f);
    let header = r.headers().with_context(|| format!("manifest {}", path.display()))?;
    if header.len() != 2 || &header[0] != "apk_path" || &header[1] != "label" {
        bail!("manifest {}: header must be apk_path,label", path.display());
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.with_context(|| format!("manifest {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 || rec[0].trim().is_empty() {
            bail!("manifest {} line {line}: expected a non-empty path and a label", path.display());
        }
        let label = parse_label(&rec[1])
            .ok_or_else(|| anyhow!("manifest {} line {line}: label must be 0 or 1", path.display()))?;
        rows.push(ManifestRow {
            apk_path: rec[0].to_string(),
            label,
        });
    }
    Ok(rows)
}

fn extract_one(path: &Path, now: DateTime<Utc>, opts: &ExtractOptions) -> Result<(AppFeatures, Vec<String>)> {
    let bytes = fs::read(path).with_context(|| format!("container stage: cannot read {}", path.display()))?;
    let archive = open_archive(bytes)?;
    let e = extract_with(&archive, now, opts)?;
    Ok((e.features, e.warnings))
}

fn extract(shared: &Shared, now: DateTime<Utc>, manifest: &Path) -> Result<u8> {
    let mut echo = Echo::new("extract", shared, now);
    echo.add("manifest", manifest.display());
    echo.cert(shared);
    echo.print();

    let schema = schema(shared)?;
    let rows = read_manifest(manifest)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let opts = extract_options(shared);
    let results: Vec<Result<(AppFeatures, Vec<String>)>> = rows
        .par_iter()
        .map(|row| {
            let p = PathBuf::from(&row.apk_path);
            let full = if p.is_absolute() { p } else { base.join(p) };
            extract_one(&full, now, &opts)
        })
        .collect();

    let mut data = LabeledDataset::new();
    let mut n_warnings = 0;
    for (row, result) in rows.iter().zip(results) {
        let features = match result {
            Ok((f, warnings)) => {
                for w in &warnings {
                    log::warn!("{}: {w}", row.apk_path);
                }
                n_warnings += warnings.len();
                f
            }
            Err(e) if shared.lenient => {
                log::warn!("{}: {e:#}; emitting an all-zero row", row.apk_path);
                n_warnings += 1;
                AppFeatures::default()
            }
            Err(e) => return Err(e.context(row.apk_path.clone())),
        };
        data.push(vectorize(&features, &schema, &row.apk_path), row.label)
            .map_err(|e| InvariantViolation(e.to_string()))?;
    }
    if data.is_empty() {
        // header-only output still carries the schema width
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..schema.len()).map(|i| format!("f{i}")));
        write_output(shared.out.as_deref(), &(header.join(",") + "\n"))?;
    } else {
        write_output(shared.out.as_deref(), &data.to_csv_string())?;
    }
    eprintln!("extracted {} rows ({} warnings)", data.len(), n_warnings);
    Ok(0)
}

fn synth_cmd(
    shared: &Shared,
    now: DateTime<Utc>,
    benign: usize,
    malicious: usize,
    noise: f64,
    weights: &[f64],
) -> Result<u8> {
    let schema = schema(shared)?;
    let cfg = SyntheticConfig {
        n_benign: benign,
        n_malicious: malicious,
        seed: shared.seed,
        signal_weights: weights
            .try_into()
            .map_err(|_| anyhow!("--weights needs exactly five values"))?,
        noise,
    };
    let mut echo = Echo::new("synth", shared, now);
    echo.add("synthetic", &cfg);
    echo.print();
    let data = synth::generate(&cfg, &schema)?;
    write_output(shared.out.as_deref(), &data.to_csv_string())?;
    Ok(0)
}

fn metrics_table(rows: &[(String, Evaluation)]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, e)| {
            vec![
                name.clone(),
                report::fmt4(e.metrics.accuracy),
                report::fmt4(e.metrics.precision),
                report::fmt4(e.metrics.recall),
                report::fmt4(e.metrics.f1),
                e.confusion.to_string(),
            ]
        })
        .collect();
    report::text_table(&["", "accuracy", "precision", "recall", "f1", "confusion"], &cells)
}

#[allow(clippy::too_many_arguments)]
fn train(
    shared: &Shared,
    now: DateTime<Utc>,
    features: &Path,
    model_args: &ModelArgs,
    metrics_out: Option<&Path>,
    curves_out: Option<&Path>,
    cv_folds: Option<usize>,
) -> Result<u8> {
    let out = shared.out.as_deref().ok_or_else(|| anyhow!("train needs --out <model file>"))?;
    let mut echo = Echo::new("train", shared, now);
    echo.add("features", features.display());
    echo.training(shared, model_args);
    echo.add("out", out.display());
    if let Some(k) = cv_folds {
        echo.add("cv_folds", k);
    }
    echo.print();

    let data = read_features(features)?;
    let cfg = train_config(shared, model_args);
    let model = dnn::init_model(&dims(data.width(), &model_args.hidden.0), shared.seed)?;
    eprintln!(
        "model: dims {:?}, {} parameters; data: {} rows x {} features",
        model.dims,
        model.param_count(),
        data.len(),
        data.width()
    );
    let (model, rep) = dnn::train(model, &data, &cfg)?;
    fs::write(out, dnn::save_model(&model)).with_context(|| format!("cannot write {}", out.display()))?;
    if let Some(p) = curves_out {
        fs::write(p, report::curves_csv(&rep.epochs)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    match (rep.confusion, rep.metrics) {
        (Some(cm), Some(m)) => {
            print!(
                "{}",
                metrics_table(&[("validation".into(), Evaluation { confusion: cm, metrics: m })])
            );
            if let Some(p) = metrics_out {
                fs::write(p, report::metrics_csv(&m, &cm)).with_context(|| format!("cannot write {}", p.display()))?;
            }
        }
        _ => println!("no epochs run; model saved untrained"),
    }

    if let Some(k) = cv_folds {
        let hidden = model_args.hidden.0.clone();
        let seed = shared.seed;
        let factory = move |w: usize| dnn::init_model(&dims(w, &hidden), seed);
        let cv = eval::cross_validate_dnn(&data, k, &factory, &cfg)?;
        print_cv("DNN", &cv);
    }
    Ok(0)
}

fn print_cv(name: &str, cv: &eval::CrossValidation) {
    let mut rows = Vec::new();
    for (i, f) in cv.folds.iter().enumerate() {
        match f {
            Ok(e) => rows.push((format!("{name} fold {}", i + 1), e.clone())),
            Err(msg) => eprintln!("{name} fold {}: {msg}", i + 1),
        }
    }
    if let Some(p) = &cv.pooled {
        rows.push((format!("{name} pooled"), p.clone()));
    }
    print!("{}", metrics_table(&rows));
}

fn eval_cmd(shared: &Shared, now: DateTime<Utc>, features: &Path, model_path: &Path) -> Result<u8> {
    let mut echo = Echo::new("eval", shared, now);
    echo.add("features", features.display());
    echo.add("model", model_path.display());
    echo.print();

    let data = read_features(features)?;
    let model = AnyModel::load(model_path)?;
    if data.width() != model.width() && !data.is_empty() {
        bail!("model expects {} features but {} has {}", model.width(), features.display(), data.width());
    }
    let predicted = data
        .vectors
        .iter()
        .map(|v| model.predict(&v.bits).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    let cm = ConfusionMatrix::from_labels(&data.labels, &predicted);
    let e = Evaluation::from_confusion(cm).map_err(|e| anyhow!(e))?;
    print!("{}", metrics_table(&[(model.name(), e.clone())]));
    if let Some(p) = &shared.out {
        fs::write(p, report::metrics_csv(&e.metrics, &e.confusion))
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(0)
}

fn ablate(
    shared: &Shared,
    now: DateTime<Utc>,
    features: &Path,
    subsets: Option<&[String]>,
    model_args: &ModelArgs,
) -> Result<u8> {
    let subsets: Vec<String> = match subsets {
        Some(s) => s.iter().map(|x| x.trim().to_string()).collect(),
        None => eval::ABLATION_SUBSETS.iter().map(|s| s.to_string()).collect(),
    };
    let mut echo = Echo::new("ablate", shared, now);
    echo.add("features", features.display());
    echo.add("subsets", subsets.join(","));
    echo.training(shared, model_args);
    echo.print();

    let schema = schema(shared)?;
    let data = read_features(features)?;
    let cfg = train_config(shared, model_args);
    let hidden = model_args.hidden.0.clone();
    let seed = shared.seed;
    let factory = move |w: usize| dnn::init_model(&dims(w, &hidden), seed);
    let refs: Vec<&str> = subsets.iter().map(String::as_str).collect();
    let rows = eval::ablation(&data, &schema, &refs, &factory, &cfg)?;
    if rows.len() != refs.len() {
        return Err(InvariantViolation(format!("{} ablation rows for {} subsets", rows.len(), refs.len())).into());
    }
    let cells = eval::ablation_rows(&rows);
    print!("{}", report::text_table(&eval::ABLATION_HEADER, &cells));
    if let Some(p) = &shared.out {
        fs::write(p, report::table_csv(&eval::ABLATION_HEADER, &cells))
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(0)
}

fn baseline_config(shared: &Shared, b: &BaselineArgs) -> BaselineConfig {
    BaselineConfig {
        k: b.k,
        max_depth: b.max_depth,
        min_leaf: b.min_leaf,
        n_trees: b.trees,
        lambda: b.lambda,
        svm_epochs: b.svm_epochs,
        seed: shared.seed,
    }
}

fn compare(
    shared: &Shared,
    now: DateTime<Utc>,
    features: &Path,
    model_args: &ModelArgs,
    baseline: &BaselineArgs,
    cv_folds: Option<usize>,
) -> Result<u8> {
    let bcfg = baseline_config(shared, baseline);
    let mut echo = Echo::new("compare", shared, now);
    echo.add("features", features.display());
    echo.training(shared, model_args);
    echo.add("k", bcfg.k);
    echo.add("max_depth", bcfg.max_depth);
    echo.add("min_leaf", bcfg.min_leaf);
    echo.add("trees", bcfg.n_trees);
    echo.add("lambda", bcfg.lambda);
    echo.add("svm_epochs", bcfg.svm_epochs);
    if let Some(k) = cv_folds {
        echo.add("cv_folds", k);
    }
    echo.print();

    let data = read_features(features)?;
    let cfg = train_config(shared, model_args);
    let hidden = model_args.hidden.0.clone();
    let seed = shared.seed;
    let factory = move |w: usize| dnn::init_model(&dims(w, &hidden), seed);
    let rows: Vec<CompareRow> = match cv_folds {
        None => eval::compare(&data, &factory, &cfg, &bcfg)?,
        Some(k) => {
            let mut rows = Vec::new();
            for name in eval::COMPARE_CLASSIFIERS {
                let cv = if name == "DNN" {
                    eval::cross_validate_dnn(&data, k, &factory, &cfg)?
                } else {
                    let kind: BaselineKind = name.parse().map_err(|e: String| InvariantViolation(e))?;
                    eval::cross_validate_baseline(&data, k, kind, &bcfg)?
                };
                rows.push(CompareRow {
                    classifier: name.to_string(),
                    result: cv.pooled.ok_or_else(|| "every fold failed".to_string()),
                });
            }
            rows
        }
    };
    let cells = eval::compare_rows(&rows);
    print!("{}", report::text_table(&eval::COMPARE_HEADER, &cells));
    if let Some(p) = &shared.out {
        fs::write(p, report::table_csv(&eval::COMPARE_HEADER, &cells))
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(0)
}
